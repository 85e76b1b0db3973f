"""Penalized criteria over a smoother family, plus GCV and k-fold CV baselines.

All criteria use unnormalized sums of squares, ``||F_hat - Y||^2 + pen``;
dividing by n does not move any argmin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .smoothers import SmootherStats

# Members with df / n above this are excluded from GCV.
GCV_DF_LIMIT = 1.0 - 1e-6
# Totals within this relative distance of the minimum count as tied.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CriterionValue:
    lambda_id: int
    empirical_risk_ss: float
    penalty: float

    @property
    def total(self) -> float:
        return self.empirical_risk_ss + self.penalty


def empirical_risk_ss(fitted, Y) -> float:
    fitted = np.asarray(fitted, float)
    Y = np.asarray(Y, float)
    if fitted.shape != Y.shape:
        raise InputError(f"length mismatch: {fitted.shape} vs {Y.shape}")
    r = fitted - Y
    return float(r @ r)


def minimal_penalty(stats: SmootherStats, C: float) -> float:
    if C < 0:
        raise InputError("C must be nonnegative")
    return C * stats.minpen_factor


def ideal_penalty(stats: SmootherStats, C: float) -> float:
    if C < 0:
        raise InputError("C must be nonnegative")
    return 2.0 * C * stats.df


def gcv_score(stats: SmootherStats, rss: float, n: int) -> float:
    """``(rss / n) / (1 - df / n)^2``; ``inf`` for members too close to the identity."""
    ratio = stats.df / n
    if ratio > GCV_DF_LIMIT:
        return float("inf")
    return (rss / n) / (1.0 - ratio) ** 2


def gcv_scores(family, Y) -> np.ndarray:
    n = family.n
    rss = family.rss(Y)
    ratio = family.df / n
    out = np.full(len(family), np.inf)
    ok = ratio <= GCV_DF_LIMIT
    out[ok] = (rss[ok] / n) / (1.0 - ratio[ok]) ** 2
    return out


def kfold_indices(n: int, k: int, seed) -> list:
    """Seeded uniform random partition of ``range(n)`` into k near-equal folds."""
    if k < 2:
        raise InputError("need at least two folds")
    if n < k:
        raise InputError(f"cannot split {n} observations into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def kfold_cv_scores(family, Y, k: int = 10, seed=0) -> np.ndarray:
    """Mean over folds of held-out ``SS / |fold|``, for every family member."""
    Y = np.asarray(Y, float)
    n = Y.shape[0]
    folds = kfold_indices(n, k, seed)
    all_idx = np.arange(n)
    total = np.zeros(len(family))
    for test in folds:
        train = np.setdiff1d(all_idx, test)
        if train.size == 0:
            raise InputError("fold with zero training rows")
        pred = family.cv_predictions(train, test, Y)
        total += np.sum((pred - Y[test]) ** 2, axis=1) / test.size
    return total / len(folds)


def kfold_cv_score(family, member: int, Y, k: int = 10, seed=0) -> float:
    return float(kfold_cv_scores(family, Y, k, seed)[member])


def argmin_smallest_df(totals, df) -> int:
    """Index of the minimal total; ties go to the smallest df, then the lowest index."""
    totals = np.asarray(totals, float)
    if totals.size == 0:
        raise InputError("empty family")
    finite = np.isfinite(totals)
    if not finite.any():
        raise InputError("no member has a finite criterion")
    best = totals[finite].min()
    tol = TIE_RTOL * np.max(np.abs(totals[finite]))
    cand = np.flatnonzero(finite & (totals <= best + tol))
    return int(cand[np.argmin(np.asarray(df)[cand])])


def penalty_vector(family, rule: str, C: float = 0.0) -> np.ndarray:
    if rule == "minimal":
        return C * family.minpen_factor
    if rule == "ideal":
        return 2.0 * C * family.df
    if rule == "half-ideal":
        return C * family.df
    if rule == "none":
        return np.zeros(len(family))
    raise InputError(f"unknown penalty rule {rule!r}")


def argmin_over_family(family, Y, rule: str = "none", C: float = 0.0) -> int:
    """Select a member by ``rule`` in {"minimal", "ideal", "half-ideal", "gcv", "none"}."""
    if len(family) == 0:
        raise InputError("empty family")
    if rule == "gcv":
        return argmin_smallest_df(gcv_scores(family, Y), family.df)
    totals = family.rss(Y) + penalty_vector(family, rule, C)
    return argmin_smallest_df(totals, family.df)


def criterion_values(family, Y, rule: str, C: float = 0.0) -> list:
    rss = family.rss(Y)
    pen = penalty_vector(family, rule, C)
    return [CriterionValue(i, float(r), float(p)) for i, (r, p) in enumerate(zip(rss, pen))]
