"""Mixing weights and the moments of the realized averaging matrix.

One consensus round applies a random row-stochastic matrix: entry (i, j)
carries weight w_ij times the Bernoulli indicator that j's message reached
i, and the diagonal absorbs whatever was lost.  Everything downstream needs
just two deterministic summaries of that random matrix: its mean and its
second moment E[M^T M].  Both have closed forms; the second moment equals
(mean)^2 plus twice the graph Laplacian of w_ij^2 p_ij (1 - p_ij), which
keeps it symmetric, doubly stochastic, and positive semidefinite by
construction.

The weight optimizer minimizes lambda_max(second_moment - uniform) over
symmetric doubly stochastic weights by projected subgradient descent; the
feasibility projection is Dykstra's alternating scheme between the affine
set (symmetric, rows sum to one) and the unit box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NumericalError
from .linalg import eigen_max
from .topology import AdjacencyGraph, ReliabilityMatrix

_SYM_TOL = 1e-10
_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic weights with entries in [0, 1]."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ArgumentError(f"weights must be square, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ArgumentError("weights have non-finite entries")
        if np.max(np.abs(w - w.T)) > _SYM_TOL:
            raise ArgumentError("weights must be symmetric")
        if w.min() < -_FEAS_TOL or w.max() > 1.0 + _FEAS_TOL:
            raise ArgumentError("weights must lie in [0, 1]")
        rows = w.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _FEAS_TOL:
            raise ArgumentError("weight rows must sum to 1")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class EffectiveMixing:
    """Moment summaries of the realized averaging matrix for (W, P)."""

    mean: np.ndarray            # expected averaging matrix
    second_moment: np.ndarray   # E[M^T M] of the realized matrix
    drift: float                # mean-preservation defect coefficient
    contraction: float          # dispersion contraction factor per round


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 300
    step_init: float = 0.1
    step_decay: str = "sqrt"      # "sqrt": step_init / sqrt(t), or "constant"
    tolerance: float = 1e-7       # minimum meaningful improvement of the best
    patience: int = 50            # iterations allowed without such improvement
    projection_iters: int = 500

    def __post_init__(self):
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be >= 1")
        if self.step_init <= 0:
            raise ArgumentError("step_init must be positive")
        if self.step_decay not in ("sqrt", "constant"):
            raise ArgumentError("step_decay must be 'sqrt' or 'constant'")
        if self.projection_iters < 1:
            raise ArgumentError("projection_iters must be >= 1")


@dataclass(frozen=True)
class OptimizeResult:
    weights: MixingMatrix
    objective: float
    objective_uniform: float
    iterations: int
    # per-iteration rows: (iter, objective, step_size, projection_residual)
    log_rows: list[tuple[int, float, float, float]] = field(repr=False)


def uniform_weights(n: int) -> MixingMatrix:
    """Equal weight 1/n on every pair, including self."""
    if n < 2:
        raise ArgumentError("need at least two devices")
    return MixingMatrix(weights=np.full((n, n), 1.0 / n))


def metropolis_hastings_weights(graph: AdjacencyGraph) -> MixingMatrix:
    """Degree-based weights on a graph: w_ij = 1 / (1 + max(deg_i, deg_j))."""
    n = graph.n
    deg = graph.degrees().astype(float)
    w = np.zeros((n, n))
    pair_max = np.maximum(deg[:, None], deg[None, :])
    np.divide(1.0, 1.0 + pair_max, out=w, where=graph.adjacency)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(weights=w)


def _check_same_size(w: np.ndarray, p: np.ndarray) -> None:
    if w.shape != p.shape:
        raise ArgumentError(
            f"weights {w.shape} and reliabilities {p.shape} differ in size")


def _mean_raw(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Expected averaging matrix for arbitrary w (no feasibility assumed)."""
    arrived = w * p
    np.fill_diagonal(arrived, 0.0)
    mean = arrived.copy()
    np.fill_diagonal(mean, 1.0 - arrived.sum(axis=1))
    return mean


def _variance_laplacian(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Laplacian of the per-link variance weights w^2 p (1 - p), doubled."""
    c = w * w * p * (1.0 - p)
    np.fill_diagonal(c, 0.0)
    c = c + c.T
    return np.diag(c.sum(axis=1)) - c


def _second_moment_raw(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    mean = _mean_raw(w, p)
    return mean.T @ mean + _variance_laplacian(w, p)


def effective_mean(weights: MixingMatrix, rel: ReliabilityMatrix) -> np.ndarray:
    """Expected averaging matrix: link weights thinned by delivery rates.

    Symmetric, doubly stochastic, entries in [0, 1].
    """
    _check_same_size(weights.weights, rel.probs)
    return _mean_raw(weights.weights, rel.probs)


def effective_second_moment(weights: MixingMatrix,
                            rel: ReliabilityMatrix) -> np.ndarray:
    """E[M^T M] of the realized averaging matrix, in closed form.

    Equals effective_mean squared plus twice the Laplacian of the per-link
    variances w_ij^2 p_ij (1 - p_ij); therefore symmetric, doubly
    stochastic, and positive semidefinite.
    """
    _check_same_size(weights.weights, rel.probs)
    return _second_moment_raw(weights.weights, rel.probs)


def uncorrected_second_moment(weights: MixingMatrix,
                              rel: ReliabilityMatrix) -> np.ndarray:
    """Second-moment variant that ignores the Bernoulli variance of each
    link off the diagonal (i.e. treats E[m^2] as p^2 there).

    Kept for discrepancy reporting only: each off-diagonal entry exceeds
    the exact value by 2 p_ij w_ij^2 (1 - p_ij), so rows sum to more than
    one and the matrix is not doubly stochastic.
    """
    w = weights.weights
    p = rel.probs
    _check_same_size(w, p)
    s = w * p
    q = s.sum(axis=1)
    out = s @ s.T + 2.0 * s - s * (q[:, None] + q[None, :])
    wp_sq = (p * w * w).sum(axis=1)
    s_sq = (s * s).sum(axis=1)
    np.fill_diagonal(out, 1.0 - 2.0 * (q - wp_sq) + (q * q - s_sq))
    return out


def drift_coeff(weights: MixingMatrix, rel: ReliabilityMatrix,
                squared: bool = True) -> float:
    """Coefficient bounding how much one lossy round can move the average.

    2 * max_i sum_j w_ij^2 p_ij (1 - p_ij).  With squared=False the weight
    enters linearly instead; that looser variant is kept selectable for the
    convergence-bound evaluator but is not the default.
    """
    w = weights.weights
    p = rel.probs
    _check_same_size(w, p)
    w_factor = w * w if squared else w
    per_row = (w_factor * p * (1.0 - p)).sum(axis=1)
    return 2.0 * float(per_row.max())


def contraction_rate(second_moment: np.ndarray) -> float:
    """Largest eigenvalue of (second moment - uniform averaging).

    The expected dispersion after one consensus round shrinks by at least
    this factor.  Input must be symmetric doubly stochastic.
    """
    m = np.asarray(second_moment, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ArgumentError(f"expected square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T)) > _SYM_TOL:
        raise ArgumentError("second moment must be symmetric")
    rows = m.sum(axis=1)
    cols = m.sum(axis=0)
    if max(np.max(np.abs(rows - 1.0)), np.max(np.abs(cols - 1.0))) > _FEAS_TOL:
        raise ArgumentError("second moment must be doubly stochastic")
    n = m.shape[0]
    j = np.full((n, n), 1.0 / n)
    lam, _ = eigen_max(m - j)
    if lam < -1e-12:
        raise NumericalError(
            f"contraction rate {lam:g} is negative beyond fp tolerance")
    return max(lam, 0.0)


def effective_mixing(weights: MixingMatrix,
                     rel: ReliabilityMatrix) -> EffectiveMixing:
    """Bundle mean, second moment, drift, and contraction for (W, P)."""
    mean = effective_mean(weights, rel)
    second = effective_second_moment(weights, rel)
    return EffectiveMixing(
        mean=mean,
        second_moment=second,
        drift=drift_coeff(weights, rel),
        contraction=contraction_rate(second),
    )


def _project_affine(x: np.ndarray) -> np.ndarray:
    """Nearest symmetric matrix with all row sums equal to one."""
    n = x.shape[0]
    y = 0.5 * (x + x.T)
    r = y.sum(axis=1)
    s = (n - y.sum()) / n
    mu = (2.0 * (1.0 - r) - s) / n
    return y + 0.5 * (mu[:, None] + mu[None, :])


def _project_feasible_info(m: np.ndarray,
                           max_cycles: int = 500) -> tuple[np.ndarray, float, int]:
    x = np.asarray(m, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ArgumentError(f"expected square matrix, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("matrix has non-finite entries")
    p_inc = np.zeros_like(x)
    q_inc = np.zeros_like(x)
    residual = np.inf
    for cycle in range(1, max_cycles + 1):
        y = _project_affine(x + p_inc)
        p_inc = x + p_inc - y
        x_new = np.clip(y + q_inc, 0.0, 1.0)
        q_inc = y + q_inc - x_new
        delta = float(np.max(np.abs(x_new - x)))
        x = x_new
        residual = float(np.max(np.abs(x.sum(axis=1) - 1.0)))
        if residual <= 1e-9 and delta <= 1e-10:
            return x, residual, cycle
    raise NumericalError(
        f"feasibility projection did not converge in {max_cycles} cycles; "
        f"row-sum residual {residual:g}")


def project_feasible(m: np.ndarray, max_cycles: int = 500) -> np.ndarray:
    """Nearest symmetric doubly stochastic matrix with entries in [0, 1].

    Dykstra's alternating projections between the affine part and the unit
    box; row sums land within 1e-9.  Already-feasible input comes back
    unchanged.
    """
    x, _, _ = _project_feasible_info(m, max_cycles=max_cycles)
    return x


def _objective_raw(w: np.ndarray, p: np.ndarray) -> tuple[float, np.ndarray]:
    """lambda_max(second_moment(w) - uniform) and its top eigenvector."""
    n = w.shape[0]
    m = _second_moment_raw(w, p)
    j = np.full((n, n), 1.0 / n)
    return eigen_max(m - j)


def _gradient_raw(w: np.ndarray, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Partials of v^T second_moment(w) v w.r.t. each off-diagonal w[a, b]."""
    mean_v = _mean_raw(w, p) @ v
    dv = v[None, :] - v[:, None]
    return 2.0 * mean_v[:, None] * p * dv + 2.0 * w * p * (1.0 - p) * dv * dv


def mixing_objective(weights: MixingMatrix, rel: ReliabilityMatrix) -> float:
    """Objective the weight optimizer minimizes: the contraction rate."""
    _check_same_size(weights.weights, rel.probs)
    lam, _ = _objective_raw(weights.weights, rel.probs)
    return max(lam, 0.0)


def objective_gradient(weights: MixingMatrix,
                       rel: ReliabilityMatrix) -> np.ndarray:
    """Subgradient of the contraction-rate objective at feasible weights.

    Via the top eigenvector v of (second moment - uniform): the directional
    derivative along dW is <grad, dW> for symmetric dW.  The returned matrix
    is symmetrized; away from eigenvalue crossings it matches central finite
    differences.
    """
    w = weights.weights
    p = rel.probs
    _check_same_size(w, p)
    _, v = _objective_raw(w, p)
    g = _gradient_raw(w, p, v)
    return 0.5 * (g + g.T)


def optimize_weights(rel: ReliabilityMatrix,
                     options: OptimizerOptions | None = None) -> OptimizeResult:
    """Minimize the contraction rate over feasible mixing weights.

    Projected subgradient descent from uniform weights with best-iterate
    tracking, so the result is never worse than uniform.  The log rows
    record (iteration, objective, step size, projection residual); the
    running best objective is nonincreasing.
    """
    opts = options or OptimizerOptions()
    p = rel.probs
    n = rel.n
    w = np.full((n, n), 1.0 / n)
    lam, v = _objective_raw(w, p)
    best_w = w.copy()
    best_obj = lam
    log_rows = [(0, lam, 0.0, 0.0)]
    marker_obj = best_obj
    marker_iter = 0
    iterations = 0
    for t in range(1, opts.max_iters + 1):
        grad = _gradient_raw(w, p, v)
        grad = 0.5 * (grad + grad.T)
        if opts.step_decay == "sqrt":
            step = opts.step_init / np.sqrt(t)
        else:
            step = opts.step_init
        w, resid, _ = _project_feasible_info(
            w - step * grad, max_cycles=opts.projection_iters)
        lam, v = _objective_raw(w, p)
        log_rows.append((t, lam, float(step), resid))
        iterations = t
        if lam < best_obj:
            best_obj = lam
            best_w = w.copy()
        if marker_obj - best_obj >= opts.tolerance:
            marker_obj = best_obj
            marker_iter = t
        elif t - marker_iter >= opts.patience:
            break
    return OptimizeResult(
        weights=MixingMatrix(weights=best_w),
        objective=max(best_obj, 0.0),
        objective_uniform=max(log_rows[0][1], 0.0),
        iterations=iterations,
        log_rows=log_rows,
    )
