"""Synthetic experiments: data generation, oracle risks, jump curves, method comparisons.

Data follow the fixed-design model ``Y = F + eps`` with design points and
RKHS centers drawn from a standard Gaussian and
``F = sum_i alpha_i k(., z_i)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import stats

from .calibration import CGrid, calibrate, minpen_path
from .criteria import argmin_over_family, argmin_smallest_df, gcv_scores, kfold_cv_scores
from .exceptions import InputError, NoJumpError
from .kernels import KernelSpec, build_kernel_matrix, cross_kernel
from .smoothers import MklGrid, RidgePath, mkl_descent, mkl_effective_kernel, mkl_stats

SINGLE_METHODS = ("minpen", "gcv", "cv10", "mallows-known-sigma2")
MKL_METHODS = ("minpen", "gcv", "cv10", "mkl-cv", "mallows-known-sigma2", "minpen-sum-kernel")
JUMP_VARIANTS = ("single", "mkl-grid", "mkl-gd")


@dataclass
class SimConfig:
    """Flat experiment configuration; every field can be set from a JSON file."""

    n: int = 500
    d: int = 6
    m: int = 10
    sigma: float = 1.0
    kernel: str = "exponential-product"
    seed: int = 0
    replications: int = 20
    setting: str = "single"  # "single" or "mkl"
    mkl_d: int = 8
    mkl_signal_weights: tuple = (1.0, 0.5)
    mkl_eta_grid_size: int = 11
    mkl_lambda_grid_size: int = 100
    mkl_gd_steps: int = 5
    lambda_grid_size: Optional[int] = None
    n_list: tuple = (100, 200, 500)
    methods: Optional[tuple] = None
    cv_folds: int = 10
    rule: str = "auto"
    xi: float = 0.05
    jump_variants: tuple = JUMP_VARIANTS
    jump_margin: float = 3.0
    diag_n: int = 20
    trials: int = 100_000
    x_values: tuple = (1.0, 2.0, 4.0)
    thetas: tuple = (0.1, 0.5, 1.0, 2.0)
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("mkl_signal_weights", "n_list", "methods", "jump_variants", "x_values", "thetas"):
            val = getattr(self, name)
            if val is not None and not isinstance(val, tuple):
                setattr(self, name, tuple(val))
        if self.n < 10 or self.m < 1 or self.sigma < 0 or self.d < 1:
            raise InputError("need n >= 10, m >= 1, d >= 1 and sigma >= 0")
        if self.setting not in ("single", "mkl"):
            raise InputError(f"unknown setting {self.setting!r}")
        if self.setting == "mkl" and self.mkl_d < 2:
            raise InputError("the mkl setting needs mkl_d >= 2")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"invalid config key(s): {', '.join(unknown)}")
        return cls(**data)

    def replace(self, **kw) -> "SimConfig":
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def sigma2(self) -> float:
        return self.sigma**2

    @property
    def dim(self) -> int:
        return self.mkl_d if self.setting == "mkl" else self.d

    def kernel_specs(self) -> list:
        if self.setting == "single":
            return [KernelSpec(self.kernel)]
        half = self.mkl_d // 2
        return [KernelSpec(self.kernel, tuple(range(half))), KernelSpec(self.kernel, tuple(range(half, self.mkl_d)))]


@dataclass
class SyntheticDataset:
    pts: np.ndarray
    F: np.ndarray
    Y: np.ndarray
    eps: np.ndarray
    sigma2: float
    specs: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def kernels(self) -> list:
        return [build_kernel_matrix(s, self.pts) for s in self.specs]


def signal(pts, centers, weights, specs, spec_weights=None) -> np.ndarray:
    """``F_a = sum_j w_j sum_i alpha_i k_j(x_a, z_i)``."""
    spec_weights = [1.0] * len(specs) if spec_weights is None else spec_weights
    weights = np.asarray(weights, float)
    F = np.zeros(np.asarray(pts).shape[0])
    for w, spec in zip(spec_weights, specs):
        F += w * (cross_kernel(spec, pts, centers) @ weights)
    return F


def generate(config: SimConfig, centers=None, weights=None) -> SyntheticDataset:
    """Draw one dataset; bitwise reproducible from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    n, d, m = config.n, config.dim, config.m
    x = rng.standard_normal((n, d))
    z = rng.standard_normal((m, d))
    alpha = rng.standard_normal(m)
    noise = rng.standard_normal(n)
    if centers is not None:
        z = np.asarray(centers, float)
    if weights is not None:
        alpha = np.asarray(weights, float)
    specs = config.kernel_specs()
    spec_w = None if config.setting == "single" else list(config.mkl_signal_weights)
    F = signal(x, z, alpha, specs, spec_w)
    eps = config.sigma * noise
    return SyntheticDataset(x, F, F + eps, eps, config.sigma2, specs)


def true_risk(fitted, F, n: Optional[int] = None) -> float:
    fitted = np.asarray(fitted, float)
    F = np.asarray(F, float)
    if fitted.shape != F.shape:
        raise InputError(f"length mismatch: {fitted.shape} vs {F.shape}")
    n = F.shape[0] if n is None else n
    r = fitted - F
    return float(r @ r) / n


def oracle_select(family, F, Y):
    """Member with the smallest true risk, and that risk."""
    risks = family.true_risk(Y, F)
    i = argmin_smallest_df(risks, family.df)
    return i, float(risks[i])


def build_family(data: SyntheticDataset, config: SimConfig):
    kernels = data.kernels()
    if config.setting == "single":
        return RidgePath.from_kernel(kernels[0], grid_size=config.lambda_grid_size)
    etas = None
    if len(kernels) == 2:
        t = np.linspace(0.0, 1.0, config.mkl_eta_grid_size)
        etas = np.column_stack([t, 1.0 - t])
    return MklGrid(kernels, etas, grid_size=config.mkl_lambda_grid_size)


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def run_parallel(fn, jobs, threads: Optional[int] = None) -> list:
    """``[fn(j) for j in jobs]``, optionally on a thread pool; output order follows ``jobs``."""
    jobs = list(jobs)
    threads = (os.cpu_count() or 1) if threads is None else max(int(threads), 1)
    if threads == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# --------------------------------------------------------------------------
# Jump curves
# --------------------------------------------------------------------------

def _union_grid(family, Y, n, sigma2, margin):
    grids = [CGrid.covering(family, Y, n, sigma2, margin, penalty=p) for p in ("minimal", "half-ideal")]
    lo = min(g.values[0] for g in grids)
    hi = max(g.values[-1] for g in grids)
    return CGrid.geometric(lo, hi, n)


def _jump_rows(variant, grid, sigma2, df_min, df_half):
    for c, a, b in zip(grid.values, df_min, df_half):
        yield {
            "variant": variant,
            "C": float(c),
            "log_C_over_sigma2": math.log(c / sigma2),
            "df_minimal": float(a),
            "df_half_ideal": float(b),
        }


def _gd_curve(grid_family: MklGrid, kernels, Y, grid: CGrid, penalty: str, steps: int):
    """df of the gradient-refined eta at ``n lam = 1``, warm-started from the grid argmin."""
    n = grid_family.n
    lam = 1.0 / n
    path = minpen_path(grid_family, Y, grid, penalty)
    out = []
    for c, idx in zip(grid.values, path.index):
        eta0 = grid_family.scaled_weights(int(idx))
        eta, _ = mkl_descent(kernels, eta0, lam, Y, c, n_steps=steps, penalty=penalty)
        out.append(mkl_stats(kernels, eta, lam, n).df if np.any(eta > 0) else 0.0)
    return np.array(out)


def jump_curves(variant: str, config: SimConfig):
    """Rows of (log C/sigma^2, df under minimal penalty, df under penalty C df) for one variant."""
    if variant not in JUMP_VARIANTS:
        raise InputError(f"unknown jump variant {variant!r}")
    cfg = config.replace(setting="single" if variant == "single" else "mkl")
    data = generate(cfg)
    family = build_family(data, cfg)
    grid = _union_grid(family, data.Y, data.n, data.sigma2, cfg.jump_margin)
    if variant == "mkl-gd":
        kernels = family.kernels
        df_min = _gd_curve(family, kernels, data.Y, grid, "minimal", cfg.mkl_gd_steps)
        df_half = _gd_curve(family, kernels, data.Y, grid, "half-ideal", cfg.mkl_gd_steps)
    else:
        df_min = minpen_path(family, data.Y, grid, "minimal").df
        df_half = minpen_path(family, data.Y, grid, "half-ideal").df
    return list(_jump_rows(variant, grid, data.sigma2, df_min, df_half))


def run_jump_experiment(config: SimConfig) -> list:
    """Jump curves for every variant in ``config.jump_variants``."""
    if not config.sigma > 0:
        raise InputError("the jump experiment needs sigma > 0")
    parts = run_parallel(lambda v: jump_curves(v, config), config.jump_variants, config.threads)
    return [row for part in parts for row in part]


def largest_drop(rows, column: str):
    """Largest consecutive df drop in a jump table and the log C/sigma^2 where it happens."""
    df = np.array([r[column] for r in rows])
    logc = np.array([r["log_C_over_sigma2"] for r in rows])
    drops = df[:-1] - df[1:]
    i = int(np.argmax(drops))
    return float(drops[i]), float(0.5 * (logc[i] + logc[i + 1]))


# --------------------------------------------------------------------------
# Method comparison
# --------------------------------------------------------------------------

@dataclass
class ReplicationRecord:
    seed: int
    n: int
    replication: int
    oracle_risk: float
    reference_risk: float
    sigma2_hat: Optional[float]
    results: dict  # method -> {"selected": str, "risk": float | None, "failed": bool, "error": str}


def _label(lab) -> str:
    if isinstance(lab, tuple):
        eta, lam = lab
        return "eta=" + ";".join(format(e, ".6g") for e in eta) + f" lambda={lam:.6g}"
    return format(lab, ".6g") if isinstance(lab, float) else str(lab)


def _method_selection(method, family, data, config, seed, cache):
    Y = data.Y
    if method == "minpen":
        res = calibrate(family, Y, rule=config.rule, xi=config.xi)
        cache["sigma2_hat"] = res.sigma2_hat
        return family, res.selected_index
    if method == "gcv":
        return family, argmin_smallest_df(gcv_scores(family, Y), family.df)
    if method in ("cv10", "mkl-cv"):
        if "cv" not in cache:
            cache["cv"] = argmin_smallest_df(kfold_cv_scores(family, Y, config.cv_folds, seed), family.df)
        return family, cache["cv"]
    if method == "mallows-known-sigma2":
        return family, argmin_over_family(family, Y, "ideal", data.sigma2)
    if method == "minpen-sum-kernel":
        fam = RidgePath.from_kernel(mkl_effective_kernel(family.kernels, np.ones(len(family.kernels))),
                                    grid_size=config.lambda_grid_size)
        res = calibrate(fam, Y, rule=config.rule, xi=config.xi)
        return fam, res.selected_index
    raise InputError(f"unknown method {method!r}")


def valid_methods(setting: str) -> tuple:
    return SINGLE_METHODS if setting == "single" else MKL_METHODS


def run_replication(config: SimConfig, n: int, rep: int, methods) -> ReplicationRecord:
    seed = derive_seed(config.seed, n, rep)
    cfg = config.replace(n=n, seed=seed)
    data = generate(cfg)
    family = build_family(data, cfg)
    _, oracle_risk = oracle_select(family, data.F, data.Y)
    ref_idx = argmin_over_family(family, data.Y, "ideal", data.sigma2)
    mallows_risk = true_risk(family.fit(ref_idx, data.Y), data.F)
    reference = oracle_risk if cfg.setting == "single" else mallows_risk
    cache = {}
    results = {}
    for method in methods:
        try:
            fam, idx = _method_selection(method, family, data, cfg, derive_seed(seed, 1), cache)
        except NoJumpError as exc:
            results[method] = {"selected": "", "risk": None, "failed": True, "error": str(exc)}
            continue
        risk = true_risk(fam.fit(idx, data.Y), data.F)
        results[method] = {"selected": _label(fam.labels[idx]), "risk": risk, "failed": False, "error": ""}
    return ReplicationRecord(seed, n, rep, oracle_risk, reference, cache.get("sigma2_hat"), results)


def aggregate(records, methods) -> list:
    """Mean and standard error of risk / reference per (n, method), failures counted apart."""
    rows = []
    for n in sorted({r.n for r in records}):
        recs = [r for r in records if r.n == n]
        for method in methods:
            ratios = np.array([
                r.results[method]["risk"] / r.reference_risk
                for r in recs
                if not r.results[method]["failed"] and r.reference_risk > 0
            ])
            failures = sum(r.results[method]["failed"] for r in recs)
            k = ratios.size
            rows.append({
                "n": n,
                "method": method,
                "replications": len(recs),
                "failures": failures,
                "mean_ratio": float(ratios.mean()) if k else float("nan"),
                "se_ratio": float(ratios.std(ddof=1) / math.sqrt(k)) if k > 1 else float("nan"),
                "median_ratio": float(np.median(ratios)) if k else float("nan"),
            })
    return rows


def record_rows(records) -> list:
    rows = []
    for r in records:
        for method, res in r.results.items():
            risk = res["risk"]
            rows.append({
                "n": r.n,
                "replication": r.replication,
                "seed": r.seed,
                "method": method,
                "selected": res["selected"],
                "risk": risk,
                "reference_risk": r.reference_risk,
                "oracle_risk": r.oracle_risk,
                "ratio": risk / r.reference_risk if risk is not None and r.reference_risk > 0 else None,
                "failed": res["failed"],
                "sigma2_hat": r.sigma2_hat,
            })
    return rows


def run_comparison_experiment(config: SimConfig):
    """Compare selection methods over replications and sample sizes.

    The reference risk is the oracle's for a single kernel and Mallows' C_L
    with the true variance for multiple kernels.

    Returns
    -------
    summary : list of dict
    records : list of ReplicationRecord
    """
    methods = config.methods or valid_methods(config.setting)
    bad = [m for m in methods if m not in valid_methods(config.setting)]
    if bad:
        raise InputError(f"method(s) {bad} not available in the {config.setting!r} setting")
    jobs = [(n, rep) for n in config.n_list for rep in range(config.replications)]
    records = run_parallel(lambda job: run_replication(config, job[0], job[1], methods), jobs, config.threads)
    return aggregate(records, methods), records


# --------------------------------------------------------------------------
# Concentration diagnostics
# --------------------------------------------------------------------------

def _mc_se(p: float, trials: int) -> float:
    p = min(p, 1.0)
    return math.sqrt(p * (1.0 - p) / trials)


def concentration_diagnostics(n: int = 20, trials: int = 100_000, x_values=(1.0, 2.0, 4.0), seed=0,
                              thetas=(0.1, 0.5, 1.0, 2.0)) -> list:
    """Empirical violation rates of the Gaussian linear and quadratic tail bounds.

    For a standard Gaussian vector xi, checks
    ``|<a, xi>| <= sqrt(2x) ||a||`` and
    ``| ||M xi||^2 - tr(M^T M) | <= theta tr(M^T M) + 2 (1 + 1/theta) ||M||^2 x``,
    each of which should fail with probability at most ``2 e^-x``.
    """
    if trials < 1:
        raise InputError("need at least one trial")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    M = rng.standard_normal((n, n)) / math.sqrt(n)
    xi = rng.standard_normal((trials, n))
    rows = []

    def add(kind, theta, x, viol, exact=None):
        bound = min(2.0 * math.exp(-x), 1.0)
        se = _mc_se(bound, trials)
        rate = viol / trials
        rows.append({
            "kind": kind,
            "theta": theta,
            "x": float(x),
            "trials": trials,
            "violations": int(viol),
            "rate": rate,
            "bound": bound,
            "mc_se": se,
            "exact_rate": exact,
            "ok": bool(rate <= bound + 3.0 * se),
        })

    lin = xi @ a
    a_norm = float(np.linalg.norm(a))
    for x in x_values:
        exact = 2.0 * stats.norm.sf(math.sqrt(2.0 * x))
        add("linear", None, x, np.count_nonzero(np.abs(lin) > math.sqrt(2 * x) * a_norm), exact)
        add("linear-zero", None, x, 0)  # a = 0 gives Z = 0 identically

    for kind, mat in (("quadratic", M), ("quadratic-identity", np.eye(n))):
        q = np.sum((xi @ mat.T) ** 2, axis=1)
        tr = float(np.sum(mat * mat))
        op2 = float(np.linalg.norm(mat, 2) ** 2)
        dev = np.abs(q - tr)
        for theta in thetas:
            for x in x_values:
                bound = theta * tr + 2.0 * (1.0 + 1.0 / theta) * op2 * x
                exact = None
                if kind == "quadratic-identity":
                    exact = float(stats.chi2.sf(n + bound, n) + stats.chi2.cdf(n - bound, n))
                add(kind, theta, x, np.count_nonzero(dev > bound), exact)
    return rows


# --------------------------------------------------------------------------
# Bias / variance curves
# --------------------------------------------------------------------------

def bias_variance_curves(family, F, sigma2: float) -> list:
    """Per member, normalized by n: bias, variance, minimal and ideal penalties, expected risk."""
    n = family.n
    b = family.bias(F)
    order = np.argsort(family.df, kind="stable")
    rows = []
    for i in order:
        bias = b[i] / n
        var = family.tr_ata[i] * sigma2 / n
        rows.append({
            "member": int(i),
            "df": float(family.df[i]),
            "bias": float(bias),
            "variance": float(var),
            "minimal_penalty": float(family.minpen_factor[i] * sigma2 / n),
            "ideal_penalty": float(2.0 * family.df[i] * sigma2 / n),
            "expected_risk": float(bias + var),
        })
    return rows


def run_curves_experiment(config: SimConfig) -> list:
    data = generate(config)
    family = build_family(data, config)
    return bias_variance_curves(family, data.F, data.sigma2)
