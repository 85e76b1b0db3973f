"""Noise-variance estimation from the minimal-penalty dimensionality jump.

The procedure has three steps:

1. For every C on a log-scale grid, select the member minimizing
   ``||F_hat - Y||^2 + C (2 tr A - tr A^T A)``.
2. Locate the C at which the selected df collapses from "overfitting"
   (close to n) to "reasonable"; that C estimates sigma^2.
3. Select the final member with Mallows' C_L, ``||F_hat - Y||^2 + 2 C_hat tr A``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .criteria import argmin_over_family, argmin_smallest_df, penalty_vector
from .exceptions import InputError, NoJumpError
from .smoothers import MklGrid, RidgePath

RULES = ("auto", "window", "relaxed-window", "max-jump")
WINDOW_MIN_N = 10_000


@dataclass(frozen=True)
class CGrid:
    """Increasing geometric grid of penalty constants."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 1 or v.shape[0] < 2 or np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise InputError("C-grid must be a strictly increasing sequence of positive values")
        object.__setattr__(self, "values", v)

    @property
    def scale(self) -> float:
        return float(self.values[1] / self.values[0])

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def geometric(cls, lo: float, hi: float, n: int, min_points: int = 10, ratio: Optional[float] = None):
        """Grid from ``lo`` to at least ``hi`` with step ratio ``exp(n^-1/4)``."""
        if not (0 < lo < hi):
            raise InputError(f"invalid C-grid bounds [{lo}, {hi}]")
        ratio = math.exp(n ** -0.25) if ratio is None else float(ratio)
        count = max(int(math.ceil(math.log(hi / lo) / math.log(ratio))) + 1, min_points)
        return cls(lo * ratio ** np.arange(count))

    @classmethod
    def default(cls, Y, n: Optional[int] = None):
        """``[1e-4 v, 10 v]`` with ``v`` the sample variance of Y."""
        Y = np.asarray(Y, float)
        n = Y.shape[0] if n is None else n
        return cls.geometric(1e-4 * response_scale(Y), 10.0 * response_scale(Y), n)

    @classmethod
    def covering(cls, family, Y, n: Optional[int] = None, sigma2: float = 1.0, margin: float = 3.0, penalty="minimal"):
        """Grid wide enough that its ends select the family's max-df and min-df members.

        The thresholds below/above which the extreme members win are computed
        exactly from the (linear in C) criteria, then padded by ``margin``
        (natural-log units) around ``sigma2``.
        """
        n = family.n if n is None else n
        rss = family.rss(Y)
        pen = penalty_vector(family, penalty, 1.0)
        i_max, i_min = int(np.argmax(family.df)), int(np.argmin(family.df))
        lo, hi = sigma2 * math.exp(-margin), sigma2 * math.exp(margin)
        with np.errstate(divide="ignore", invalid="ignore"):
            below = (rss - rss[i_max]) / (pen[i_max] - pen)
            above = (rss[i_min] - rss) / (pen - pen[i_min])
        below = below[np.isfinite(below) & (below > 0)]
        above = above[np.isfinite(above) & (above > 0)]
        if below.size:
            lo = min(lo, 0.5 * below.min())
        if above.size:
            hi = max(hi, 2.0 * above.max())
        return cls.geometric(lo, hi, n)


def response_scale(Y) -> float:
    """Sample variance of Y, floored so that a constant response still yields a usable grid."""
    Y = np.asarray(Y, float)
    v = float(np.var(Y, ddof=1)) if Y.shape[0] > 1 else 0.0
    floor = 1e-12 * max(float(np.mean(Y * Y)), 1.0)
    return max(v, floor)


@dataclass
class MinPenPath:
    """Selected member and its df for every C on the grid."""

    C: np.ndarray
    index: np.ndarray
    df: np.ndarray
    penalty: str = "minimal"

    def rows(self, sigma2: Optional[float] = None):
        for c, i, d in zip(self.C, self.index, self.df):
            row = {"C": float(c)}
            if sigma2 is not None:
                row["log10_C_over_sigma2"] = math.log10(c / sigma2)
            row.update(lambda_index=int(i), df=float(d))
            yield row

    def drops(self) -> np.ndarray:
        return self.df[:-1] - self.df[1:]

    def to_dict(self):
        return {
            "penalty": self.penalty,
            "C": self.C.tolist(),
            "lambda_index": self.index.tolist(),
            "df": self.df.tolist(),
        }


def minpen_path(family, Y, grid: CGrid, penalty: str = "minimal") -> MinPenPath:
    """``argmin ||F_hat - Y||^2 + C pen`` for every C in ``grid``; ties to smallest df."""
    rss = family.rss(Y)
    unit = penalty_vector(family, penalty, 1.0)
    idx = np.array([argmin_smallest_df(rss + c * unit, family.df) for c in grid.values], dtype=int)
    return MinPenPath(grid.values.copy(), idx, family.df[idx].copy(), penalty)


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2_hat: float
    rule_used: str
    jump_size: float
    upper_shelf_df: float
    lower_shelf_df: float
    competing_jumps: tuple = ()


def _shelves(path: MinPenPath, C_hat: float):
    below = np.flatnonzero(path.C < C_hat)
    above = np.flatnonzero(path.C > C_hat)
    upper = float(path.df[below[-1]]) if below.size else float(path.df[0])
    lower = float(path.df[above[0]]) if above.size else float(path.df[-1])
    return upper, lower


def _competing(path: MinPenPath, chosen: Optional[int]):
    drops = path.drops()
    if drops.size == 0 or drops.max() <= 0:
        return ()
    keep = np.flatnonzero(drops >= 0.5 * drops.max())
    return tuple(
        (float(math.sqrt(path.C[i] * path.C[i + 1])), float(drops[i])) for i in keep if i != chosen
    )


def _window_rule(path, n):
    lo, hi = n**0.75, n / 10.0
    if lo > hi * (1 + 1e-12):
        raise InputError(
            f"the df window [n^3/4, n/10] = [{lo:.1f}, {hi:.1f}] is empty for n={n} < {WINDOW_MIN_N}; "
            "use the max-jump or relaxed-window rule"
        )
    hit = np.flatnonzero((path.df >= lo * (1 - 1e-12)) & (path.df <= hi * (1 + 1e-12)))
    if hit.size == 0:
        raise NoJumpError(f"no grid C has selected df in [{lo:.1f}, {hi:.1f}]", path)
    return float(path.C[hit[0]])


def _relaxed_rule(path, n, xi):
    """C_hat with df < n^3/4 for all C > C_hat + delta and df > n/10 for all C < C_hat - delta.

    delta = n^(-1/4 + xi) is applied on the log-C scale of the grid.
    """
    delta = n ** (-0.25 + xi)
    big = np.flatnonzero(path.df >= n**0.75)
    small = np.flatnonzero(path.df <= n / 10.0)
    if big.size == 0 or small.size == 0:
        raise NoJumpError("path never reaches both the overfitting and the small-df regime", path)
    log_a = math.log(path.C[big[-1]])  # last C still overfitting
    log_b = math.log(path.C[small[0]])  # first C already small
    if log_a - delta > log_b + delta:
        raise NoJumpError("no C separates the overfitting and small-df regimes within delta", path)
    return math.exp(0.5 * (log_a + log_b))


def _max_jump_rule(path):
    drops = path.drops()
    if drops.size == 0 or drops.max() <= 0:
        raise NoJumpError("selected df does not vary along the C-grid; no jump detected", path)
    i = int(np.argmax(drops))
    return float(math.sqrt(path.C[i] * path.C[i + 1])), i


def estimate_variance(path: MinPenPath, n: int, rule: str = "auto", xi: float = 0.05) -> VarianceEstimate:
    """Estimate sigma^2 from a minimal-penalty path.

    ``rule="auto"`` uses the df window when ``n >= 10^4`` (falling back to the
    relaxed window, then to max-jump, if it finds nothing) and max-jump
    otherwise. The rule that produced the estimate is reported.
    """
    if rule not in RULES:
        raise InputError(f"unknown rule {rule!r}; expected one of {RULES}")
    if len(path.C) == 0:
        raise InputError("empty path")
    chosen = None
    if rule == "window":
        C_hat, used = _window_rule(path, n), "window"
    elif rule == "relaxed-window":
        C_hat, used = _relaxed_rule(path, n, xi), "relaxed-window"
    elif rule == "max-jump":
        (C_hat, chosen), used = _max_jump_rule(path), "max-jump"
    else:
        C_hat = None
        if n >= WINDOW_MIN_N:
            for name, fn in (("window", lambda: _window_rule(path, n)), ("relaxed-window", lambda: _relaxed_rule(path, n, xi))):
                try:
                    C_hat, used = fn(), name
                    break
                except NoJumpError:
                    continue
        if C_hat is None:
            (C_hat, chosen), used = _max_jump_rule(path), "max-jump"
    upper, lower = _shelves(path, C_hat)
    return VarianceEstimate(C_hat, used, upper - lower, upper, lower, _competing(path, chosen))


def select_with_plugin(family, Y, C_hat: float) -> int:
    """Mallows' C_L with sigma^2 replaced by ``C_hat``."""
    if not C_hat > 0:
        raise InputError("plug-in variance must be positive")
    return argmin_over_family(family, Y, "ideal", C_hat)


@dataclass
class CalibrationResult:
    sigma2_hat: float
    rule_used: str
    jump_size: float
    selected_index: int
    selected_lambda: object
    df_selected: float
    upper_shelf_df: float
    path: MinPenPath
    competing_jumps: tuple = ()
    warnings: list = field(default_factory=list)

    def to_dict(self):
        lam = self.selected_lambda
        if isinstance(lam, tuple):
            lam = {"eta": list(lam[0]), "lambda": lam[1]}
        return {
            "sigma2_hat": self.sigma2_hat,
            "rule_used": self.rule_used,
            "jump_size": self.jump_size,
            "selected_index": self.selected_index,
            "selected_lambda": lam,
            "df_selected": self.df_selected,
            "upper_shelf_df": self.upper_shelf_df,
            "competing_jumps": [list(j) for j in self.competing_jumps],
            "warnings": list(self.warnings),
            "path": self.path.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def calibrate(family, Y, grid: Optional[CGrid] = None, rule: str = "auto", xi: float = 0.05) -> CalibrationResult:
    """Run the full procedure: path, variance estimate, plug-in selection."""
    Y = np.asarray(Y, float)
    notes = []
    v = float(np.var(Y, ddof=1)) if Y.shape[0] > 1 else 0.0
    degenerate = v <= 1e-12 * max(float(np.mean(Y * Y)), 1e-300)
    if degenerate:
        notes.append("degenerate data: response has (near) zero variance; sigma2_hat is not meaningful")
    if grid is None:
        grid = CGrid.default(Y, family.n)
    path = minpen_path(family, Y, grid)
    try:
        est = estimate_variance(path, family.n, rule, xi)
    except NoJumpError:
        if not degenerate:
            raise
        # nothing to calibrate: report zero noise and keep the unpenalized choice
        est = VarianceEstimate(0.0, "degenerate", 0.0, float(path.df[0]), float(path.df[-1]))
    if est.competing_jumps:
        notes.append(f"{len(est.competing_jumps)} other jump(s) at least half as large as the selected one")
    if est.sigma2_hat > 0:
        idx = select_with_plugin(family, Y, est.sigma2_hat)
    else:
        idx = argmin_over_family(family, Y, "none")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return CalibrationResult(
        sigma2_hat=est.sigma2_hat,
        rule_used=est.rule_used,
        jump_size=est.jump_size,
        selected_index=idx,
        selected_lambda=family.labels[idx],
        df_selected=float(family.df[idx]),
        upper_shelf_df=est.upper_shelf_df,
        path=path,
        competing_jumps=est.competing_jumps,
        warnings=notes,
    )


@dataclass(frozen=True)
class AssumptionReport:
    a1_ok: bool
    a2_ok: bool
    a1_df_ok: bool
    a2_df_ok: bool
    bias_threshold: Optional[float]
    kappa_hat: Optional[float]
    spectrum_decay: Optional[dict]

    def to_dict(self):
        return dict(self.__dict__)


def fit_spectrum_decay(eigenvalues, rel_floor: float = 1e-10) -> Optional[dict]:
    """Fit ``mu_j ~ L j^-alpha`` on the eigenvalues above ``rel_floor * mu_1``.

    Returns alpha and the tightest ``L1 <= mu_j j^alpha <= L2`` over the fitted range.
    """
    mu = np.asarray(eigenvalues, float)
    if mu.size < 3 or mu[0] <= 0:
        return None
    keep = mu > rel_floor * mu[0]
    j = np.arange(1, mu.size + 1)[keep]
    if j.size < 3:
        return None
    slope, _ = np.polyfit(np.log(j), np.log(mu[keep]), 1)
    alpha = -float(slope)
    scaled = mu[keep] * j**alpha
    return {"alpha": alpha, "L1": float(scaled.min()), "L2": float(scaled.max()), "n_used": int(j.size)}


def check_assumptions(family, F=None, sigma2: Optional[float] = None, n: Optional[int] = None) -> AssumptionReport:
    """Report which of the df/bias conditions and the df-vs-risk bound hold.

    Without the true signal and variance only the df parts and the spectral
    proxy are available; bias-dependent flags are then False and
    ``kappa_hat`` is None ("unverifiable").
    """
    n = family.n if n is None else n
    df = family.df
    a1_df = bool(np.any(df >= n / 2.0))
    a2_df = bool(np.any(df <= math.sqrt(n)))
    decay = None
    if isinstance(family, RidgePath):
        decay = fit_spectrum_decay(family.eig.eigenvalues)
    elif isinstance(family, MklGrid):
        decay = fit_spectrum_decay(family.paths[0].eig.eigenvalues)
    if decay is not None and decay["alpha"] > 1:
        decay["kappa_bound"] = kappa_from_decay(decay["alpha"], decay["L1"], decay["L2"])
    if F is None or sigma2 is None:
        return AssumptionReport(False, False, a1_df, a2_df, None, None, decay)
    b = family.bias(F)
    thr = n * sigma2 * math.sqrt(math.log(n) / n)
    a1 = bool(np.any((df >= n / 2.0) & (b <= thr)))
    a2 = bool(np.any((df <= math.sqrt(n)) & (b <= thr)))
    denom = family.tr_ata * sigma2 + b
    pos = df > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = df[pos] * sigma2 / denom[pos]
    kappa = float(np.max(ratios)) if ratios.size else None
    return AssumptionReport(a1, a2, a1_df, a2_df, thr, kappa, decay)


def kappa_from_decay(alpha: float, L1: float, L2: float) -> float:
    """df-vs-risk constant implied by ``L1 j^-alpha <= mu_j <= L2 j^-alpha``."""
    if alpha <= 1:
        raise InputError("decay exponent must exceed 1 for the integrals to converge")
    if not (0 < L1 <= L2):
        raise InputError("need 0 < L1 <= L2")
    num, _ = integrate.quad(lambda u: 1.0 / (1.0 + u**alpha), 0.0, np.inf, epsrel=1e-10, limit=200)
    den, _ = integrate.quad(lambda u: 1.0 / (1.0 + u**alpha) ** 2, 1.0, np.inf, epsrel=1e-10, limit=200)
    return (L2 / L1) ** (1.0 / alpha) * num / den
