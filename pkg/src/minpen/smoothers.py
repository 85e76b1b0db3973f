"""Symmetric linear smoothers ``F_hat = A Y`` with spectrum in [0, 1].

Three families are provided, all exposing the same vectorized surface
(``df``, ``tr_ata``, ``minpen_factor``, ``rss``, ``sq_error``, ``bias``,
``fit``, ``matrix``, ``cv_predictions``):

* :class:`RidgePath` -- kernel ridge ``A = K (K + n lam I)^-1`` over a lambda grid,
  evaluated in the eigenbasis of ``K``.
* :class:`ProjectionSet` -- orthogonal projections onto given column spaces.
* :class:`MklGrid` -- ridge on ``sum_j eta_j K_j`` over a grid of weights and lambdas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import InputError, NumericalError
from .kernels import Eigensystem, eigendecompose, symmetrize

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class SmootherStats:
    df: float
    tr_ata: float

    @property
    def minpen_factor(self) -> float:
        return 2.0 * self.df - self.tr_ata


def _shrinkage(mu, nlam) -> np.ndarray:
    """Eigenvalues ``mu / (mu + n lam)`` of the ridge smoother; 0/0 terms are 0."""
    mu = np.asarray(mu, dtype=float)
    nlam = np.asarray(nlam, dtype=float)
    num = np.broadcast_to(mu, np.broadcast_shapes(mu.shape, nlam.shape))
    den = mu + nlam
    return np.divide(num, den, out=np.zeros(den.shape), where=den > 0)


def ridge_stats(eig: Eigensystem, lam: float, n: Optional[int] = None) -> SmootherStats:
    """Trace statistics of ``K (K + n lam I)^-1`` from the eigenvalues of ``K``."""
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    n = eig.n if n is None else n
    s = _shrinkage(eig.eigenvalues, n * lam)
    return SmootherStats(float(s.sum()), float(np.sum(s * s)))


def ridge_fit(eig: Eigensystem, lam: float, Y, n: Optional[int] = None) -> np.ndarray:
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    n = eig.n if n is None else n
    s = _shrinkage(eig.eigenvalues, n * lam)
    Q = eig.eigenvectors
    return Q @ (s * (Q.T @ np.asarray(Y, dtype=float)))


def check_orthonormal(basis) -> np.ndarray:
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2:
        raise InputError("basis must be an (n, k) matrix")
    err = np.max(np.abs(B.T @ B - np.eye(B.shape[1]))) if B.shape[1] else 0.0
    if err > ORTHONORMAL_TOL:
        raise InputError(f"basis columns are not orthonormal (max deviation {err:.3g})")
    return B


def projection_smoother(basis, Y):
    """Stats and fitted values of the orthogonal projection onto ``span(basis)``."""
    B = check_orthonormal(basis)
    k = B.shape[1]
    return SmootherStats(float(k), float(k)), B @ (B.T @ np.asarray(Y, dtype=float))


def default_lambda_grid(eig: Eigensystem, size: Optional[int] = None) -> np.ndarray:
    """Geometric lambda grid, increasing, so that df decreases along the path.

    ``n lam`` spans ``[max(mu_n, 1e-8 mu_1) / 10, 10 mu_1]``, which puts
    members with df close to n and members with df well below sqrt(n) in the
    same family whenever the spectrum allows it. The floor keeps
    ``cond(K + n lam I)`` below about 1e10 for rank-deficient kernels, where
    rounding in the null eigenvalues would otherwise dominate df.
    """
    n = eig.n
    size = max(n, 100) if size is None else int(size)
    mu = eig.eigenvalues
    if mu[0] <= 0:
        raise InputError("kernel matrix is zero; no ridge path can be built")
    lo = max(mu[-1], mu[0] * 1e-8) / 10.0
    hi = 10.0 * mu[0]
    return np.geomspace(lo, hi, size) / n


class _Family:
    """Shared helpers; subclasses fill ``df``, ``tr_ata`` and ``labels``."""

    df: np.ndarray
    tr_ata: np.ndarray
    labels: list
    n: int

    def __len__(self):
        return self.df.shape[0]

    @property
    def minpen_factor(self) -> np.ndarray:
        return 2.0 * self.df - self.tr_ata

    def stats(self, i: int) -> SmootherStats:
        return SmootherStats(float(self.df[i]), float(self.tr_ata[i]))

    def true_risk(self, Y, F) -> np.ndarray:
        return self.sq_error(Y, F) / self.n


class RidgePath(_Family):
    """Kernel ridge smoothers ``A_lam = K (K + n lam I)^-1`` for each lam in a grid.

    Members are ordered by increasing lambda, i.e. decreasing df.
    """

    def __init__(self, eig: Eigensystem, lambdas=None, kernel=None, grid_size=None):
        self.eig = eig
        self.n = eig.n
        lambdas = default_lambda_grid(eig, grid_size) if lambdas is None else np.asarray(lambdas, float)
        if lambdas.ndim != 1 or lambdas.shape[0] < 2:
            raise InputError("a ridge path needs at least two lambda values")
        if np.any(lambdas < 0):
            raise InputError("lambdas must be nonnegative")
        self.lambdas = np.sort(lambdas)
        self._kernel = None if kernel is None else np.asarray(kernel, float)
        self.shrink = _shrinkage(eig.eigenvalues[None, :], self.n * self.lambdas[:, None])
        self.df = self.shrink.sum(axis=1)
        self.tr_ata = np.sum(self.shrink**2, axis=1)
        self.labels = [float(lam) for lam in self.lambdas]

    @classmethod
    def from_kernel(cls, K, lambdas=None, grid_size=None):
        K = symmetrize(K)
        return cls(eigendecompose(K), lambdas, kernel=K, grid_size=grid_size)

    @property
    def kernel(self) -> np.ndarray:
        if self._kernel is None:
            self._kernel = self.eig.reconstruct()
        return self._kernel

    def rss(self, Y) -> np.ndarray:
        z = self.eig.project(Y)
        return ((1.0 - self.shrink) ** 2) @ (z * z)

    def sq_error(self, Y, F) -> np.ndarray:
        z, f = self.eig.project(Y), self.eig.project(F)
        return np.sum((self.shrink * z - f) ** 2, axis=1)

    def bias(self, F) -> np.ndarray:
        f = self.eig.project(F)
        return ((1.0 - self.shrink) ** 2) @ (f * f)

    def fit(self, i: int, Y) -> np.ndarray:
        Q = self.eig.eigenvectors
        return Q @ (self.shrink[i] * (Q.T @ np.asarray(Y, float)))

    def fit_all(self, Y) -> np.ndarray:
        Q = self.eig.eigenvectors
        return (self.shrink * (Q.T @ np.asarray(Y, float))) @ Q.T

    def matrix(self, i: int) -> np.ndarray:
        Q = self.eig.eigenvectors
        return (Q * self.shrink[i]) @ Q.T

    def cv_predictions(self, train, test, Y) -> np.ndarray:
        """Predictions on ``test`` rows for every member, refit on ``train`` rows.

        The regularizer is ``n_train * lam``, i.e. the same lambda on the
        smaller sample.
        """
        K = self.kernel
        Y = np.asarray(Y, float)
        return _ridge_cv_predictions(K, train, test, Y, self.lambdas)


def _ridge_cv_predictions(K, train, test, Y, lambdas) -> np.ndarray:
    eig = eigendecompose(K[np.ix_(train, train)])
    n_tr = len(train)
    den = eig.eigenvalues[None, :] + n_tr * np.asarray(lambdas)[:, None]
    inv = np.divide(1.0, den, out=np.zeros(den.shape), where=den > 0)
    z = eig.project(Y[train])
    alpha = (inv * z) @ eig.eigenvectors.T  # (m, n_tr) dual coefficients
    return alpha @ K[np.ix_(train, test)]


class ProjectionSet(_Family):
    """Orthogonal projections onto the column spaces of orthonormal bases."""

    def __init__(self, bases: Sequence[np.ndarray]):
        if len(bases) < 2:
            raise InputError("a projection family needs at least two members")
        self.bases = [check_orthonormal(B) for B in bases]
        ns = {B.shape[0] for B in self.bases}
        if len(ns) != 1:
            raise InputError("all bases must have the same number of rows")
        self.n = ns.pop()
        self.df = np.array([float(B.shape[1]) for B in self.bases])
        self.tr_ata = self.df.copy()
        self.labels = [int(B.shape[1]) for B in self.bases]

    @classmethod
    def nested(cls, X, dims=None):
        """Nested projections onto the first k columns of ``X`` for each k in ``dims``."""
        X = np.asarray(X, float)
        Q, R = np.linalg.qr(X)
        rank = int(np.sum(np.abs(np.diag(R)) > 1e-10 * max(np.abs(R).max(), 1e-300)))
        dims = range(rank + 1) if dims is None else dims
        return cls([Q[:, :k] for k in dims])

    def fit(self, i: int, Y) -> np.ndarray:
        B = self.bases[i]
        return B @ (B.T @ np.asarray(Y, float))

    def fit_all(self, Y) -> np.ndarray:
        return np.stack([self.fit(i, Y) for i in range(len(self))])

    def rss(self, Y) -> np.ndarray:
        Y = np.asarray(Y, float)
        return np.array([np.sum((Y - self.fit(i, Y)) ** 2) for i in range(len(self))])

    def sq_error(self, Y, F) -> np.ndarray:
        F = np.asarray(F, float)
        return np.array([np.sum((self.fit(i, Y) - F) ** 2) for i in range(len(self))])

    def bias(self, F) -> np.ndarray:
        return self.rss(F)

    def matrix(self, i: int) -> np.ndarray:
        B = self.bases[i]
        return B @ B.T

    def cv_predictions(self, train, test, Y) -> np.ndarray:
        Y = np.asarray(Y, float)
        out = np.zeros((len(self), len(test)))
        for i, B in enumerate(self.bases):
            if B.shape[1] == 0:
                continue
            coef = np.linalg.lstsq(B[train], Y[train], rcond=None)[0]
            out[i] = B[test] @ coef
        return out


def mkl_effective_kernel(kernels: Sequence[np.ndarray], eta) -> np.ndarray:
    """Return ``sum_j eta_j K_j``."""
    eta = np.asarray(eta, float)
    if len(kernels) < 1 or eta.shape != (len(kernels),):
        raise InputError("need one nonnegative weight per kernel")
    if np.any(eta < 0) or not np.any(eta > 0):
        raise InputError("kernel weights must be nonnegative and not all zero")
    shapes = {np.shape(K) for K in kernels}
    if len(shapes) != 1:
        raise InputError("all kernel matrices must have the same shape")
    G = np.zeros(shapes.pop())
    for w, K in zip(eta, kernels):
        if w != 0:
            G += w * np.asarray(K, float)
    return G


def default_eta_grid(p: int = 2, size: int = 11) -> np.ndarray:
    """Weights on the simplex; for two kernels ``(t, 1 - t)`` with t on a uniform grid."""
    if p == 1:
        return np.ones((1, 1))
    if p == 2:
        t = np.linspace(0.0, 1.0, size)
        return np.column_stack([t, 1.0 - t])
    rng = np.random.default_rng(0)
    pts = np.vstack([np.eye(p), np.full((1, p), 1.0 / p), rng.dirichlet(np.ones(p), size)])
    return pts


class MklGrid(_Family):
    """Ridge smoothers on ``sum_j eta_j K_j`` over an (eta, lambda) grid.

    Each weight vector gets its own eigendecomposition and lambda path, so
    member ``i`` is the pair ``labels[i] = (eta, lam)``.
    """

    def __init__(self, kernels, etas=None, grid_size: int = 100, lambdas=None):
        self.kernels = [symmetrize(K) for K in kernels]
        p = len(self.kernels)
        self.etas = default_eta_grid(p) if etas is None else np.atleast_2d(np.asarray(etas, float))
        self.paths = []
        for eta in self.etas:
            G = mkl_effective_kernel(self.kernels, eta)
            self.paths.append(RidgePath.from_kernel(G, lambdas=lambdas, grid_size=grid_size))
        self.n = self.paths[0].n
        self._offsets = np.cumsum([0] + [len(p_) for p_ in self.paths])
        self.df = np.concatenate([p_.df for p_ in self.paths])
        self.tr_ata = np.concatenate([p_.tr_ata for p_ in self.paths])
        self.labels = [
            (tuple(float(e) for e in eta), lam) for eta, p_ in zip(self.etas, self.paths) for lam in p_.labels
        ]

    def _locate(self, i: int):
        e = int(np.searchsorted(self._offsets, i, side="right") - 1)
        return self.paths[e], i - self._offsets[e]

    def rss(self, Y):
        return np.concatenate([p_.rss(Y) for p_ in self.paths])

    def sq_error(self, Y, F):
        return np.concatenate([p_.sq_error(Y, F) for p_ in self.paths])

    def bias(self, F):
        return np.concatenate([p_.bias(F) for p_ in self.paths])

    def fit(self, i: int, Y):
        path, j = self._locate(i)
        return path.fit(j, Y)

    def fit_all(self, Y):
        return np.vstack([p_.fit_all(Y) for p_ in self.paths])

    def matrix(self, i: int):
        path, j = self._locate(i)
        return path.matrix(j)

    def cv_predictions(self, train, test, Y):
        return np.vstack([p_.cv_predictions(train, test, Y) for p_ in self.paths])

    def scaled_weights(self, i: int) -> np.ndarray:
        """Member ``i`` as weights ``eta / (n lam)``, i.e. the equivalent eta at ``n lam = 1``."""
        eta, lam = self.labels[i]
        return np.asarray(eta) / (self.n * lam)


PENALTY_KINDS = ("minimal", "half-ideal", "ideal", "none")


def _penalty_from_traces(kind, tr, tr2):
    if kind == "minimal":
        return 2.0 * tr - tr2
    if kind == "half-ideal":
        return tr
    if kind == "ideal":
        return 2.0 * tr
    if kind == "none":
        return 0.0 * tr
    raise InputError(f"unknown penalty kind {kind!r}")


def mkl_gradient(kernels, eta, lam, Y, C, penalty="minimal"):
    """Criterion ``||(I - A) Y||^2 + C pen(A)`` at ``A = A_{eta,lam}`` and its eta-gradient.

    Uses ``dA/deta_j = n lam M K_j M`` with ``M = (G + n lam I)^-1``, evaluated
    in the eigenbasis of ``G = sum_j eta_j K_j``.

    Returns
    -------
    crit : float
    grad : ndarray of shape (p,)
    parts : dict with ``rss``, ``tr``, ``tr2`` and their gradients
    """
    eta = np.asarray(eta, float)
    Y = np.asarray(Y, float)
    if lam <= 0:
        raise InputError("gradient descent on eta needs lambda > 0")
    n = Y.shape[0]
    nlam = n * lam
    G = mkl_effective_kernel(kernels, eta)
    eig = eigendecompose(G)
    mu, Q = eig.eigenvalues, eig.eigenvectors
    d = 1.0 / (mu + nlam)
    s = mu * d
    z = Q.T @ Y
    w = Q @ (d * z)  # M Y
    w2 = Q @ (d * d * z)  # M^2 Y
    tr, tr2 = s.sum(), np.sum(s * s)
    rss = nlam**2 * np.sum((d * z) ** 2)
    g_tr, g_tr2, g_rss = (np.empty(len(kernels)) for _ in range(3))
    for j, K in enumerate(kernels):
        K = np.asarray(K, float)
        kdiag = np.einsum("ki,ki->i", Q, K @ Q)  # diag(Q^T K_j Q)
        g_tr[j] = nlam * np.sum(d * d * kdiag)
        g_tr2[j] = 2.0 * nlam * np.sum(s * d * d * kdiag)
        g_rss[j] = -2.0 * nlam**2 * (w2 @ K @ w)
    pen = _penalty_from_traces(penalty, tr, tr2)
    g_pen = _penalty_from_traces(penalty, g_tr, g_tr2)
    crit = rss + C * pen
    grad = g_rss + C * g_pen
    if not (np.isfinite(crit) and np.all(np.isfinite(grad))):
        raise NumericalError(f"non-finite MKL criterion or gradient at eta={eta.tolist()}")
    parts = dict(rss=rss, tr=tr, tr2=tr2, g_rss=g_rss, g_tr=g_tr, g_tr2=g_tr2)
    return float(crit), grad, parts


def mkl_criterion(kernels, eta, lam, Y, C, penalty="minimal") -> float:
    eta = np.asarray(eta, float)
    Y = np.asarray(Y, float)
    if not np.any(eta > 0):
        return float(Y @ Y)  # A = 0
    eig = eigendecompose(mkl_effective_kernel(kernels, eta))
    s = _shrinkage(eig.eigenvalues, Y.shape[0] * lam)
    z = eig.project(Y)
    rss = np.sum(((1.0 - s) * z) ** 2)
    return float(rss + C * _penalty_from_traces(penalty, s.sum(), np.sum(s * s)))


def _backtrack(kernels, eta, grad, crit0, lam, Y, C, step, penalty, max_halvings):
    t = float(step)
    for _ in range(max_halvings + 1):
        cand = np.maximum(eta - t * grad, 0.0)
        if np.any(cand > 0):
            crit = mkl_criterion(kernels, cand, lam, Y, C, penalty)
            if crit <= crit0:
                return cand, crit
        t *= 0.5
    return eta.copy(), crit0


def mkl_gradient_step(kernels, eta, lam, Y, C, step, penalty="minimal", max_halvings=30):
    """One projected-gradient step on eta with backtracking.

    The step is halved until the criterion does not increase, at most
    ``max_halvings`` times; if no candidate qualifies, ``eta`` is returned
    unchanged. Negative coordinates are clipped to zero.
    """
    eta = np.asarray(eta, float)
    if np.any(eta < 0):
        raise InputError("eta must be nonnegative")
    crit0, grad, _ = mkl_gradient(kernels, eta, lam, Y, C, penalty)
    return _backtrack(kernels, eta, grad, crit0, lam, Y, C, step, penalty, max_halvings)[0]


def mkl_descent(kernels, eta0, lam, Y, C, n_steps=20, penalty="minimal", rtol=1e-10):
    """Projected gradient descent on eta at fixed lambda.

    Each iteration starts from a step of size ``||eta|| / ||grad||`` and
    backtracks. Stops after ``n_steps`` or when the relative decrease falls
    below ``rtol``.

    Returns
    -------
    eta : ndarray
    crit : float
    """
    eta = np.asarray(eta0, float).copy()
    if np.any(eta < 0):
        raise InputError("eta must be nonnegative")
    crit = None
    for _ in range(n_steps):
        crit, grad, _ = mkl_gradient(kernels, eta, lam, Y, C, penalty)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0:
            break
        step = max(np.linalg.norm(eta), 1e-12) / gnorm
        eta, new_crit = _backtrack(kernels, eta, grad, crit, lam, Y, C, step, penalty, 30)
        done = crit - new_crit <= rtol * max(abs(crit), 1e-300)
        crit = new_crit
        if done:
            break
    if crit is None:
        crit = mkl_criterion(kernels, eta, lam, Y, C, penalty)
    return eta, crit


def mkl_stats(kernels, eta, lam, n=None) -> SmootherStats:
    eig = eigendecompose(mkl_effective_kernel(kernels, eta))
    return ridge_stats(eig, lam, n)
