"""Symmetric eigen-decomposition via cyclic Jacobi rotations.

Deterministic: fixed sweep order, no pivot search, no randomness, so the
same input always yields the same eigenvector basis bit for bit.  Intended
for the small dense matrices this package works with (up to a few dozen
rows); accuracy is to machine precision.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, NumericalError

OFF_DIAG_TOL = 1e-12
SYMMETRY_TOL = 1e-10
RESIDUAL_TOL = 1e-10


def _off_norm(a: np.ndarray) -> float:
    n = a.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return math.sqrt(float(np.sum(a[mask] ** 2)))


def check_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate (shape, finiteness, symmetry) and return a float64 copy."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ArgumentError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol * scale:
        raise ArgumentError(f"matrix is asymmetric: max |a - a.T| = {asym:g}")
    return 0.5 * (a + a.T)


def jacobi_eigh(a: np.ndarray, tol: float = OFF_DIAG_TOL,
                max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum of a symmetric matrix.

    Returns (values, vectors) with vectors[:, i] the unit eigenvector for
    values[i].  Order is whatever the sweep produces; it is deterministic
    but not sorted.
    """
    A = check_symmetric(a, tol=SYMMETRY_TOL)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return np.array([A[0, 0]]), V
    scale = math.sqrt(float(np.sum(A ** 2))) or 1.0
    for _ in range(max_sweeps):
        if _off_norm(A) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-3 * tol * scale / n:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                vcol_p = V[:, p].copy()
                vcol_q = V[:, q].copy()
                V[:, p] = c * vcol_p - s * vcol_q
                V[:, q] = s * vcol_p + c * vcol_q
    else:
        raise NumericalError(
            f"Jacobi sweep did not converge in {max_sweeps} sweeps; "
            f"off-diagonal norm {_off_norm(A):g}")
    return np.diag(A).copy(), V


def eigen_max(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and a unit eigenvector of a symmetric matrix.

    The eigenvector sign is fixed (largest-magnitude component positive) so
    repeated calls are reproducible.  Raises NumericalError if the residual
    check ||a v - lam v|| <= 1e-10 * max(1, ||a||) fails.
    """
    values, vectors = jacobi_eigh(a)
    idx = int(np.argmax(values))
    lam = float(values[idx])
    v = vectors[:, idx].copy()
    v /= math.sqrt(float(v @ v))
    j = int(np.argmax(np.abs(v)))
    if v[j] < 0.0:
        v = -v
    a = 0.5 * (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T)
    norm_a = math.sqrt(float(np.sum(a ** 2)))
    residual = math.sqrt(float(np.sum((a @ v - lam * v) ** 2)))
    if residual > RESIDUAL_TOL * max(1.0, norm_a):
        raise NumericalError(
            f"eigenpair residual {residual:g} exceeds tolerance")
    return lam, v
