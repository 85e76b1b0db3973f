import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exp_kernel
from minpen.calibration import (
    CGrid,
    MinPenPath,
    calibrate,
    check_assumptions,
    estimate_variance,
    kappa_from_decay,
    minpen_path,
    select_with_plugin,
)
from minpen.criteria import argmin_over_family
from minpen.exceptions import InputError, NoJumpError
from minpen.kernels import KernelSpec, build_kernel_matrix
from minpen.simulation import SimConfig, build_family, generate
from minpen.smoothers import ProjectionSet, RidgePath


def make_path(C, df):
    C = np.asarray(C, float)
    return MinPenPath(C, np.arange(len(C)), np.asarray(df, float))


def krr_problem(n=500, seed=0, d=6):
    cfg = SimConfig(n=n, d=d, seed=seed)
    data = generate(cfg)
    return data, build_family(data, cfg)


class TestCGrid:
    def test_ratio(self):
        g = CGrid.geometric(0.1, 10.0, n=16)
        assert g.scale == pytest.approx(math.exp(0.5))
        assert g.values[0] == 0.1 and g.values[-1] >= 10.0

    def test_minimum_points(self):
        assert len(CGrid.geometric(1.0, 1.01, n=100)) >= 10

    @pytest.mark.parametrize("values", [[1.0], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
    def test_rejects_bad_values(self, values):
        with pytest.raises(InputError):
            CGrid(values)

    def test_default_brackets_variance(self, rng):
        Y = 3.0 * rng.standard_normal(200)
        g = CGrid.default(Y)
        v = np.var(Y, ddof=1)
        assert g.values[0] == pytest.approx(1e-4 * v) and g.values[-1] >= 10 * v

    def test_covering_reaches_both_extremes(self, rng):
        _, K = exp_kernel(80, 3, 0)
        fam = RidgePath.from_kernel(K)
        Y = rng.standard_normal(80)
        path = minpen_path(fam, Y, CGrid.covering(fam, Y))
        assert path.df[0] == fam.df.max()
        assert path.df[-1] == fam.df.min()


class TestPath:
    def test_matches_bruteforce_on_noise_projections(self):
        n = 50
        rng = np.random.default_rng(2)
        fam = ProjectionSet.nested(rng.standard_normal((n, n)))
        Y = rng.standard_normal(n)
        grid = CGrid.geometric(0.05, 20.0, n)
        path = minpen_path(fam, Y, grid)
        for c, k in zip(grid.values, path.df):
            crit = [np.sum((Y - fam.matrix(i) @ Y) ** 2) + c * i for i in range(n + 1)]
            assert k == int(np.argmin(crit))

    def test_monotone_nonincreasing(self, rng):
        _, K = exp_kernel(100, 4, 1)
        fam = RidgePath.from_kernel(K)
        Y = rng.standard_normal(100)
        path = minpen_path(fam, Y, CGrid.covering(fam, Y))
        assert np.all(np.diff(path.df) <= 1e-9)

    def test_rows(self):
        path = make_path([0.5, 2.0], [3.0, 1.0])
        rows = list(path.rows(sigma2=0.5))
        assert rows[1]["log10_C_over_sigma2"] == pytest.approx(math.log10(4))
        assert rows[0]["df"] == 3.0


class TestEstimateVariance:
    def test_max_jump_geometric_midpoint(self):
        path = make_path([0.5, 0.7, 0.9, 1.1, 1.3], [400, 400, 400, 20, 20])
        est = estimate_variance(path, 500, "max-jump")
        assert est.sigma2_hat == pytest.approx(math.sqrt(0.99), abs=1e-12)
        assert est.jump_size == 380 and est.rule_used == "max-jump"

    def test_auto_below_window_threshold_uses_max_jump(self):
        path = make_path([0.5, 0.7, 0.9, 1.1, 1.3], [400, 400, 400, 20, 20])
        assert estimate_variance(path, 500).rule_used == "max-jump"

    def test_window_rule(self):
        path = make_path([0.5, 0.8, 1.0, 1.2, 1.5], [9000, 6000, 1000, 40, 30])
        est = estimate_variance(path, 10_000, "window")
        assert est.sigma2_hat == 1.0 and est.rule_used == "window"
        assert estimate_variance(path, 10_000).rule_used == "window"

    def test_window_rule_empty_for_small_n(self):
        with pytest.raises(InputError, match="empty"):
            estimate_variance(make_path([1.0, 2.0], [500, 5]), 500, "window")

    def test_window_without_hit_raises(self):
        with pytest.raises(NoJumpError):
            estimate_variance(make_path([1.0, 2.0], [9000, 5]), 10_000, "window")

    def test_auto_falls_back_from_window(self):
        est = estimate_variance(make_path([1.0, 2.0], [9000, 5]), 10_000)
        assert est.rule_used == "relaxed-window"
        assert est.sigma2_hat == pytest.approx(math.sqrt(2.0))

    def test_relaxed_window(self):
        path = make_path([0.8, 0.9, 1.1, 1.2], [400, 300, 30, 20])
        est = estimate_variance(path, 500, "relaxed-window")
        assert est.sigma2_hat == pytest.approx(math.sqrt(0.9 * 1.1))

    def test_relaxed_window_rejects_long_plateau(self):
        # for n >= 10^4 a df can be both "large" and "small"; a long plateau leaves no valid C
        path = make_path([1.0, 10.0, 100.0, 1000.0, 1e4], [9000, 1000, 1000, 1000, 5])
        with pytest.raises(NoJumpError):
            estimate_variance(path, 10_000, "relaxed-window")

    def test_flat_path_has_no_jump(self):
        with pytest.raises(NoJumpError) as info:
            estimate_variance(make_path([1.0, 2.0, 3.0], [5, 5, 5]), 500)
        assert info.value.path is not None

    def test_unknown_rule(self):
        with pytest.raises(InputError):
            estimate_variance(make_path([1.0, 2.0], [5, 1]), 10, "median")

    def test_competing_jumps_reported(self):
        path = make_path([1, 2, 3, 4], [100, 50, 45, 0])
        est = estimate_variance(path, 500)
        assert est.sigma2_hat == pytest.approx(math.sqrt(2))
        assert len(est.competing_jumps) == 1

    def test_krr_jump_close_to_variance(self):
        hits = []
        for seed in range(10):
            data, fam = krr_problem(seed=seed)
            res = calibrate(fam, data.Y)
            hits.append(0.7 <= res.sigma2_hat <= 1.4)
        assert sum(hits) >= 8


class TestPlugin:
    def test_projection_matches_mallows_cp(self, rng):
        n = 40
        X = rng.standard_normal((n, 8))
        fam = ProjectionSet.nested(X)
        Y = X[:, :3] @ np.array([1.0, -2.0, 0.5]) + rng.standard_normal(n)
        cp = []
        for k in range(9):
            coef = np.linalg.lstsq(X[:, :k], Y, rcond=None)[0] if k else np.zeros(0)
            r = Y - X[:, :k] @ coef
            cp.append(r @ r + 2 * 1.0 * k)
        assert select_with_plugin(fam, Y, 1.0) == int(np.argmin(cp))

    def test_huge_variance_selects_smallest(self, rng):
        _, K = exp_kernel(30, 2, 3)
        fam = RidgePath.from_kernel(K)
        assert select_with_plugin(fam, rng.standard_normal(30), 1e12) == int(np.argmin(fam.df))

    def test_rejects_nonpositive(self, rng):
        fam = ProjectionSet.nested(rng.standard_normal((5, 2)))
        with pytest.raises(InputError):
            select_with_plugin(fam, rng.standard_normal(5), 0.0)


class TestCalibrate:
    def test_end_to_end(self):
        data, fam = krr_problem(seed=3)
        res = calibrate(fam, data.Y)
        assert 0.5 <= res.sigma2_hat <= 2.0
        assert res.selected_index == argmin_over_family(fam, data.Y, "ideal", res.sigma2_hat)
        assert res.df_selected <= res.upper_shelf_df
        assert res.to_dict()["path"]["df"] == res.path.df.tolist()

    def test_pure_noise_selects_small_model(self):
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((300, 4))
        fam = RidgePath.from_kernel(build_kernel_matrix(KernelSpec(), pts))
        res = calibrate(fam, rng.standard_normal(300))
        assert res.df_selected < 300 / 10

    def test_deterministic(self):
        data, fam = krr_problem(n=200, seed=1)
        assert calibrate(fam, data.Y).to_json() == calibrate(fam, data.Y).to_json()

    def test_degenerate_warning(self):
        _, K = exp_kernel(20, 2, 0)
        fam = RidgePath.from_kernel(K)
        with pytest.warns(RuntimeWarning, match="degenerate"):
            res = calibrate(fam, np.full(20, 3.0))
        assert res.sigma2_hat == 0.0 and res.rule_used == "degenerate"
        assert res.selected_index == int(np.argmax(fam.df))

    def test_flat_path_on_real_data_still_raises(self, rng):
        fam = ProjectionSet([np.zeros((20, 0)), np.zeros((20, 0))])
        with pytest.raises(NoJumpError):
            calibrate(fam, rng.standard_normal(20))

    def test_scaling_equivariance(self):
        data, fam = krr_problem(n=200, seed=2)
        grid = CGrid.default(data.Y)
        a = calibrate(fam, data.Y, grid)
        b = calibrate(fam, 2.0 * data.Y, CGrid(4.0 * grid.values))
        assert b.sigma2_hat == pytest.approx(4.0 * a.sigma2_hat, rel=1e-9)
        assert b.selected_index == a.selected_index

    def test_half_ideal_equals_minimal_for_projections(self, rng):
        fam = ProjectionSet.nested(rng.standard_normal((30, 10)))
        Y = rng.standard_normal(30)
        grid = CGrid.geometric(0.01, 100.0, 30)
        a = minpen_path(fam, Y, grid, "minimal")
        b = minpen_path(fam, Y, grid, "half-ideal")
        np.testing.assert_array_equal(a.index, b.index)

    def test_half_ideal_jump_is_smaller_for_ridge(self):
        data, fam = krr_problem(n=300, seed=4)
        grid = CGrid.covering(fam, data.Y)
        big = minpen_path(fam, data.Y, grid, "minimal").drops().max()
        small = minpen_path(fam, data.Y, grid, "half-ideal").drops().max()
        assert small < big


class TestAssumptions:
    def test_projection_kappa_at_most_one(self, rng):
        X = rng.standard_normal((40, 10))
        fam = ProjectionSet.nested(X)
        F = X[:, :2] @ np.array([1.0, 1.0])
        rep = check_assumptions(fam, F, 1.0)
        assert rep.kappa_hat <= 1.0 + 1e-12

    def test_flat_spectrum_closed_form(self):
        n, lam = 20, 0.05
        fam = RidgePath.from_kernel(np.eye(n), lambdas=[0.01, lam])
        s = 1.0 / (1.0 + n * lam)
        assert fam.df[1] == pytest.approx(n * s)
        rep = check_assumptions(fam, np.zeros(n), 1.0)
        assert rep.kappa_hat == pytest.approx(1.0 / s)

    def test_a2_df_condition(self):
        _, K = exp_kernel(50, 2, 0)
        rep = check_assumptions(RidgePath.from_kernel(K))
        assert rep.a1_df_ok and rep.a2_df_ok
        assert rep.kappa_hat is None

    def test_a2_holds_for_zero_signal(self):
        _, K = exp_kernel(50, 2, 0)
        rep = check_assumptions(RidgePath.from_kernel(K), np.zeros(50), 1.0)
        assert rep.a2_ok


class TestKappa:
    def test_alpha_two(self):
        assert kappa_from_decay(2.0, 1.0, 1.0) == pytest.approx((math.pi / 2) / (math.pi / 8 - 0.25), abs=1e-3)

    def test_scales_with_constant_ratio(self):
        assert kappa_from_decay(2.0, 1.0, 4.0) == pytest.approx(2.0 * kappa_from_decay(2.0, 1.0, 1.0))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1.2, 5.0))
    def test_finite_and_at_least_one(self, alpha):
        k = kappa_from_decay(alpha, 1.0, 1.0)
        assert math.isfinite(k) and k >= 1.0

    @pytest.mark.parametrize("alpha", [1.0, 0.5])
    def test_rejects_slow_decay(self, alpha):
        with pytest.raises(InputError):
            kappa_from_decay(alpha, 1.0, 1.0)
