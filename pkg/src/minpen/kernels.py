"""Kernel functions, kernel matrices and PSD-repaired eigendecompositions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import InputError, NumericalError

KERNEL_KINDS = ("exponential-product", "linear", "precomputed")

# Precomputed matrices with asymmetry below this are symmetrized, above it rejected.
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to evaluate.

    Parameters
    ----------
    kind : str
        One of ``"exponential-product"``, ``"linear"`` or ``"precomputed"``.
    columns : sequence of int, optional
        Restrict evaluation to these coordinates of each point. Used to put
        different kernels on different groups of variables.
    matrix : ndarray, optional
        The n x n kernel matrix, required for ``kind="precomputed"``.
    """

    kind: str = "exponential-product"
    columns: Optional[tuple] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if self.kind == "precomputed":
            if self.matrix is None:
                raise InputError("precomputed kernel requires a matrix")
            object.__setattr__(self, "matrix", symmetrize(self.matrix))

    def select(self, pts):
        pts = as_points(pts)
        if self.columns is None:
            return pts
        if max(self.columns) >= pts.shape[1]:
            raise InputError(f"kernel columns {self.columns} out of range for d={pts.shape[1]}")
        return pts[:, list(self.columns)]


def as_points(points) -> np.ndarray:
    """Validate and return an (n, d) float array of design points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise InputError(f"points must be an (n, d) array with n, d >= 1, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("points contain non-finite coordinates")
    return pts


def symmetrize(matrix) -> np.ndarray:
    K = np.asarray(matrix, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"kernel matrix must be square, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise InputError("kernel matrix contains non-finite entries")
    scale = max(np.max(np.abs(K)), 1.0) if K.size else 1.0
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise InputError(f"kernel matrix is not symmetric (max |K - K^T| = {asym:.3g})")
    return 0.5 * (K + K.T)


def kernel_value(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for a single pair of points."""
    if spec.kind == "precomputed":
        raise InputError("precomputed kernels have no pointwise evaluation")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.columns is not None:
        if max(spec.columns) >= x.shape[0]:
            raise InputError(f"kernel columns {spec.columns} out of range for d={x.shape[0]}")
        x, y = x[list(spec.columns)], y[list(spec.columns)]
    if spec.kind == "exponential-product":
        return float(np.exp(-np.sum(np.abs(x - y))))
    return float(np.dot(x, y))


def cross_kernel(spec: KernelSpec, a, b) -> np.ndarray:
    """Kernel evaluations between two point sets, shape ``(len(a), len(b))``."""
    if spec.kind == "precomputed":
        raise InputError("precomputed kernels have no pointwise evaluation")
    a, b = spec.select(a), spec.select(b)
    if a.shape[1] != b.shape[1]:
        raise InputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if spec.kind == "exponential-product":
        # L1 distance accumulated one coordinate at a time keeps memory at O(n m).
        dist = np.zeros((a.shape[0], b.shape[0]))
        for j in range(a.shape[1]):
            dist += np.abs(a[:, j, None] - b[None, :, j])
        return np.exp(-dist)
    return a @ b.T


def build_kernel_matrix(spec: KernelSpec, pts=None) -> np.ndarray:
    """Assemble the symmetric n x n kernel matrix ``K_ab = k(x_a, x_b)``."""
    if spec.kind == "precomputed":
        K = spec.matrix.copy()
        if pts is not None and as_points(pts).shape[0] != K.shape[0]:
            raise InputError("precomputed kernel size does not match number of points")
        return K
    if pts is None:
        raise InputError("points are required for a non-precomputed kernel")
    pts = as_points(pts)
    K = cross_kernel(spec, pts, pts)
    # Mirror the upper triangle so K is exactly symmetric.
    iu = np.triu_indices(K.shape[0], 1)
    K[(iu[1], iu[0])] = K[iu]
    if not np.all(np.isfinite(K)):
        raise InputError("kernel matrix has non-finite entries")
    return K


@dataclass(frozen=True)
class Eigensystem:
    """Eigendecomposition ``K = Q diag(mu) Q^T`` with ``mu`` sorted descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clip_count: int = 0

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T

    def project(self, v) -> np.ndarray:
        """Coordinates of ``v`` in the eigenbasis."""
        return self.eigenvectors.T @ np.asarray(v, dtype=float)


def eigendecompose(K) -> Eigensystem:
    """Symmetric eigendecomposition, eigenvalues descending and clipped at zero."""
    K = symmetrize(K)
    try:
        mu, Q = np.linalg.eigh(K)
    except np.linalg.LinAlgError as exc:
        try:
            cond = np.linalg.cond(K)
        except np.linalg.LinAlgError:
            cond = float("nan")
        raise NumericalError(
            f"eigendecomposition failed for {K.shape[0]}x{K.shape[0]} matrix "
            f"(condition number {cond:.3g}, max |K| {np.max(np.abs(K)):.3g}): {exc}"
        ) from exc
    mu, Q = mu[::-1], Q[:, ::-1]
    neg = mu < 0
    clip_count = int(np.count_nonzero(neg))
    if clip_count:
        mu = np.where(neg, 0.0, mu)
    return Eigensystem(np.ascontiguousarray(mu), np.ascontiguousarray(Q), clip_count)


def load_points_csv(path, header: bool = False) -> np.ndarray:
    return as_points(np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2))


def load_kernel_csv(path) -> np.ndarray:
    return symmetrize(np.loadtxt(path, delimiter=",", ndmin=2))


def kernel_matrices(specs: Sequence[KernelSpec], pts) -> list:
    return [build_kernel_matrix(s, pts) for s in specs]
