"""Acceptance gate: each test prints one PASS/FAIL line and asserts it."""

import json
import math
import os
import warnings

import numpy as np
import pytest

from conftest import random_psd, record
from minpen.calibration import kappa_from_decay
from minpen.cli import main
from minpen.criteria import argmin_over_family
from minpen.kernels import KernelSpec, build_kernel_matrix
from minpen.simulation import (
    SimConfig,
    concentration_diagnostics,
    generate,
    jump_curves,
    largest_drop,
    run_comparison_experiment,
)
from minpen.smoothers import MklGrid, ProjectionSet, RidgePath, mkl_criterion, mkl_gradient

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def comparison_500():
    cfg = SimConfig(n_list=(500,), replications=20, seed=0, threads=1,
                    methods=("minpen", "gcv", "cv10"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_comparison_experiment(cfg)


def test_jump_reproduction():
    n = 500
    good = 0
    details = []
    for seed in range(10):
        rows = jump_curves("single", SimConfig(n=n, d=6, seed=seed))
        drop, logc = largest_drop(rows, "df_minimal")
        half, _ = largest_drop(rows, "df_half_ideal")
        ok = drop >= n / 4 and abs(logc) <= 0.7 and half <= drop / 3
        good += ok
        details.append(f"{drop:.0f}@{logc:+.2f}/{half:.0f}")
    ok = good >= 8
    record("1 jump reproduction", ok, f"{good}/10 seeds with drop>=n/4, |log C*|<=0.7, half-ideal<=1/3 [{' '.join(details)}]")
    assert ok


def test_variance_estimation(comparison_500):
    _, records = comparison_500
    med_500 = float(np.median([r.sigma2_hat for r in records]))
    cfg = SimConfig(n_list=(2000,), replications=20, seed=0, threads=1, methods=("minpen",))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, big = run_comparison_experiment(cfg)
    med_2000 = float(np.median([r.sigma2_hat for r in big]))
    ok = 0.8 <= med_500 <= 1.25 and 0.9 <= med_2000 <= 1.15
    record("2 variance estimation", ok, f"median sigma2_hat/sigma2 = {med_500:.4f} (n=500), {med_2000:.4f} (n=2000)")
    assert ok


def test_oracle_ratio(comparison_500):
    summary, _ = comparison_500
    row = {r["method"]: r for r in summary}
    median = row["minpen"]["median_ratio"]
    mean = row["minpen"]["mean_ratio"]
    best = min(row["gcv"]["mean_ratio"], row["cv10"]["mean_ratio"])
    ok = median <= 2.0 and mean <= 1.1 * best and row["minpen"]["failures"] == 0
    record("3 oracle ratio", ok, f"median {median:.4f}, mean {mean:.4f} vs best baseline mean {best:.4f}")
    assert ok


def test_slope_ratio():
    rng = np.random.default_rng(4)
    lo, hi = np.inf, -np.inf
    for seed in range(5):
        pts = np.random.default_rng(seed).standard_normal((80, 3))
        fam = RidgePath.from_kernel(build_kernel_matrix(KernelSpec(), pts))
        pos = fam.df > 1e-6
        ratio = 2 * fam.df[pos] / fam.minpen_factor[pos]
        lo, hi = min(lo, ratio.min()), max(hi, ratio.max())
    proj = ProjectionSet.nested(rng.standard_normal((40, 15)))
    pos = proj.df > 0
    proj_err = float(np.max(np.abs(2 * proj.df[pos] / proj.minpen_factor[pos] - 2.0)))
    ok = lo > 1.0 and hi <= 2.0 and proj_err <= 1e-12
    record("4 slope ratio", ok, f"ridge ratio range ({lo:.6f}, {hi:.12f}); projection max |ratio-2| = {proj_err:.1e}")
    assert ok


def test_eigenbasis_vs_dense():
    # half exponential-kernel matrices, half full-rank random PSD; both well posed over the default grid
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(20):
        n = int(rng.integers(3, 51))
        if k % 2:
            K = random_psd(n, rng)
        else:
            K = build_kernel_matrix(KernelSpec(), rng.standard_normal((n, int(rng.integers(1, 7)))))
        Y = rng.standard_normal(n)
        fam = RidgePath.from_kernel(K, grid_size=15)
        for i in range(len(fam)):
            A = K @ np.linalg.inv(K + n * fam.lambdas[i] * np.eye(n))
            for got, want in ((fam.df[i], np.trace(A)), (fam.tr_ata[i], np.trace(A.T @ A))):
                worst = max(worst, abs(got - want) / abs(want))
            fit, dense = fam.fit(i, Y), A @ Y
            worst = max(worst, np.max(np.abs(fit - dense)) / np.max(np.abs(dense)))
    ok = worst <= 1e-8
    record("5 eigenbasis vs dense", ok, f"max relative discrepancy {worst:.2e} over 20 instances")
    assert ok


def test_algebraic_identities():
    worst = 0.0
    for seed in range(5):
        cfg = SimConfig(n=60, d=3, seed=seed, lambda_grid_size=100)
        data = generate(cfg)
        fam = RidgePath.from_kernel(data.kernels()[0], grid_size=100)
        assert len(fam) == 100
        F, eps, Y = data.F, data.eps, data.Y
        for i in range(len(fam)):
            A = fam.matrix(i)
            u, r = A @ eps, A @ F - F
            risk = np.sum((A @ Y - F) ** 2)
            risk_rhs = r @ r + u @ u + 2 * u @ r
            emp = np.sum((A @ Y - Y) ** 2)
            emp_rhs = risk + eps @ eps - 2 * eps @ u - 2 * eps @ r
            worst = max(worst, abs(risk - risk_rhs) / risk, abs(emp - emp_rhs) / emp)
    ok = worst <= 1e-9
    record("6 algebraic identities", ok, f"max relative error {worst:.2e} over 5 seeds x 100 members")
    assert ok


def test_concentration():
    rows = concentration_diagnostics(n=20, trials=100_000, seed=0)
    bad = [r for r in rows if not r["ok"]]
    worst = max(r["rate"] - r["bound"] - 3 * r["mc_se"] for r in rows)
    ok = not bad
    record("7 concentration", ok, f"{len(rows) - len(bad)}/{len(rows)} checks within bound + 3 se (worst margin {worst:.4f})")
    assert ok


def _fd(fun, eta, h=1e-6):
    g = np.zeros_like(eta)
    for j in range(eta.size):
        e = np.zeros_like(eta)
        e[j] = h * max(1.0, abs(eta[j]))
        g[j] = (fun(eta + e) - fun(eta - e)) / (2 * e[j])
    return g


def test_mkl_consistency():
    pts = np.random.default_rng(8).standard_normal((40, 8))
    Y = np.random.default_rng(9).standard_normal(40)
    kernels = [build_kernel_matrix(KernelSpec(columns=c), pts) for c in ((0, 1, 2, 3), (4, 5, 6, 7))]
    mkl = MklGrid(kernels, etas=np.eye(2), grid_size=60)
    fit_err, same_choice = 0.0, True
    for j, K in enumerate(kernels):
        single = RidgePath.from_kernel(K, grid_size=60)
        sl = slice(60 * j, 60 * (j + 1))
        for i in range(60):
            fit_err = max(fit_err, np.max(np.abs(mkl.fit(60 * j + i, Y) - single.fit(i, Y))))
        fit_err = max(fit_err, np.max(np.abs(mkl.df[sl] - single.df)))
        sub = MklGrid([K, K], etas=[[1.0, 0.0]], grid_size=60)
        for rule, C in (("ideal", 1.0), ("minimal", 0.7), ("gcv", 0.0)):
            same_choice &= argmin_over_family(sub, Y, rule, C) == argmin_over_family(single, Y, rule, C)

    grad_err = 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(8, 25))
        ks = [random_psd(n, rng, rank=int(rng.integers(2, n + 1))), random_psd(n, rng)]
        y = rng.standard_normal(n)
        eta = rng.uniform(0.2, 2.0, 2)
        lam, C = float(rng.uniform(0.01, 0.2)), float(rng.uniform(0.3, 2.0))
        _, grad, _ = mkl_gradient(ks, eta, lam, y, C)
        fd = _fd(lambda e: mkl_criterion(ks, e, lam, y, C), eta)
        grad_err = max(grad_err, float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-12))))
    ok = fit_err <= 1e-10 and same_choice and grad_err <= 1e-5
    record("8 MKL consistency", ok,
           f"unit-eta fit/df error {fit_err:.1e}, selections identical: {same_choice}; gradient rel. error {grad_err:.1e}")
    assert ok


def test_kappa_bound():
    got = kappa_from_decay(2.0, 1.0, 1.0)
    want = (math.pi / 2) / (math.pi / 8 - 0.25)
    ok = abs(got - want) <= 1e-3
    record("9 kappa bound", ok, f"kappa(alpha=2) = {got:.6f}, closed form {want:.6f}")
    assert ok


def test_thread_determinism(tmp_path):
    configs = {
        "jump": ({"n": 80, "mkl_eta_grid_size": 3, "mkl_lambda_grid_size": 20, "mkl_gd_steps": 2}, ("jump.csv",)),
        "compare": ({"n_list": [50, 80], "replications": 3}, ("comparison.csv", "records.csv")),
        "diagnose": ({"trials": 5000}, ("diagnostics.csv",)),
        "curves": ({"n": 80}, ("curves.csv",)),
    }
    thread_counts = sorted({1, os.cpu_count() or 1, 4})
    mismatched = []
    for command, (config, outputs) in configs.items():
        cfg = tmp_path / f"{command}.json"
        cfg.write_text(json.dumps(config))
        payloads = set()
        for t in thread_counts:
            out = tmp_path / f"{command}-{t}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                assert main([command, "--config", str(cfg), "--out", str(out), "--seed", "7", "--threads", str(t)]) == 0
            payloads.add(tuple((out / name).read_bytes() for name in outputs))
        if len(payloads) != 1:
            mismatched.append(command)
    ok = not mismatched
    record("10 determinism", ok, f"threads {thread_counts}: identical CSVs for {len(configs) - len(mismatched)}/{len(configs)} commands")
    assert ok
