"""Verification oracles, problem constants, and the convergence bound.

The moment formulas in `mixing` are closed-form expressions; everything
here cross-checks them by independent means (exhaustive enumeration of
delivery patterns, Monte Carlo simulation, finite differences, grid
search) and packages the checks into a reportable suite.  The module also
estimates the smoothness/noise/heterogeneity constants of a device fleet
and evaluates the stationarity bound they imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, CapacityError
from .linalg import eigen_max, jacobi_eigh
from .mixing import (MixingMatrix, OptimizerOptions, drift_coeff,
                     effective_mean, effective_second_moment,
                     mixing_objective, objective_gradient, optimize_weights,
                     project_feasible, uncorrected_second_moment,
                     uniform_weights)
from .objectives import (LogisticObjective, QuadraticObjective,
                         global_gradient, global_loss, quadratic_optimum)
from .rng import RandomStream
from .topology import ReliabilityMatrix
from .training import consensus_trajectories, masked_mix_batch

ENUMERATION_MAX_DEVICES = 5
_ENUM_CHUNK = 1 << 16


def _enumerate_moments(weights: MixingMatrix,
                       rel: ReliabilityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Mean and E[A^T A] of the realized matrix by exhausting all masks.

    Sums over every pattern of the n(n-1) directed per-entry delivery
    bits, weighting each realized matrix by its probability.  Exponential
    in the fleet size, so it refuses more than ENUMERATION_MAX_DEVICES.
    """
    n = weights.n
    if rel.n != n:
        raise ArgumentError("weights and reliabilities differ in size")
    if n > ENUMERATION_MAX_DEVICES:
        raise CapacityError(
            f"enumeration over 2^{n * (n - 1)} patterns is out of reach; "
            f"max fleet size is {ENUMERATION_MAX_DEVICES}")
    links = [(dst, src) for dst in range(n) for src in range(n) if dst != src]
    n_bits = len(links)
    p_link = np.array([rel.probs[dst, src] for dst, src in links])
    w_link = np.array([weights.weights[dst, src] for dst, src in links])
    shifts = np.arange(n_bits, dtype=np.uint64)
    diag = np.arange(n)

    mean = np.zeros((n, n))
    second = np.zeros((n, n))
    total = 1 << n_bits
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total),
                        dtype=np.uint64)
        bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)
        probs = np.prod(np.where(bits, p_link, 1.0 - p_link), axis=1)
        realized = np.zeros((len(idx), n, n))
        hit = np.where(bits, w_link, 0.0)
        for b, (dst, src) in enumerate(links):
            realized[:, dst, src] = hit[:, b]
        realized[:, diag, diag] = 1.0 - realized.sum(axis=2)
        mean += np.einsum("c,cij->ij", probs, realized)
        second += np.einsum("c,cji,cjk->ik", probs, realized, realized)
    return mean, second


def enumerate_mean(weights: MixingMatrix,
                   rel: ReliabilityMatrix) -> np.ndarray:
    mean, _ = _enumerate_moments(weights, rel)
    return mean


def enumerate_second_moment(weights: MixingMatrix,
                            rel: ReliabilityMatrix) -> np.ndarray:
    _, second = _enumerate_moments(weights, rel)
    return second


def exact_mean_drift(x: np.ndarray, weights: MixingMatrix,
                     rel: ReliabilityMatrix) -> float:
    """E||mean(x') - mean(x)||^2 for one lossy round, in closed form.

    Paired asymmetric deliveries are the only source of mean movement;
    each unordered pair contributes 2 w^2 p (1-p) ||x_i - x_j||^2 / n^2.
    """
    x = np.asarray(x, dtype=float)
    n = weights.n
    if x.ndim != 2 or x.shape[0] != n:
        raise ArgumentError(f"parameters must be ({n}, d), got {x.shape}")
    gram = x @ x.T
    sq = np.diag(gram)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * gram
    c = weights.weights ** 2 * rel.probs * (1.0 - rel.probs)
    return float(np.sum(np.triu(c * dist_sq, k=1)) * 2.0 / n ** 2)


@dataclass(frozen=True)
class DriftBoundReport:
    exact: float        # closed-form expected squared mean movement
    bound: float        # provable envelope 2 kappa / n^2 * dispersion
    half_bound: float   # the same with half the constant; can be violated
    holds: bool
    half_holds: bool


def drift_bound_check(x: np.ndarray, weights: MixingMatrix,
                      rel: ReliabilityMatrix) -> DriftBoundReport:
    """Exact mean drift against its dispersion envelope.

    The envelope with constant 2 kappa / n^2 always holds; the halved
    variant is reported because it fails on small fleets (two devices,
    even weights, coin-flip links already exceed it).
    """
    x = np.asarray(x, dtype=float)
    exact = exact_mean_drift(x, weights, rel)
    kappa = drift_coeff(weights, rel, squared=True)
    centered = x - x.mean(axis=0)
    dispersion = float(np.sum(centered ** 2))
    bound = 2.0 * kappa / weights.n ** 2 * dispersion
    half = 0.5 * bound
    tol = 1e-12 * max(1.0, abs(bound))
    return DriftBoundReport(exact=exact, bound=bound, half_bound=half,
                            holds=exact <= bound + tol,
                            half_holds=exact <= half + tol)


def _random_feasible(n: int, stream: RandomStream, idx: int) -> MixingMatrix:
    raw = stream.uniforms("probe", idx, n, 0, 0, n * n).reshape(n, n)
    return MixingMatrix(project_feasible(raw))


def _random_reliability(n: int, stream: RandomStream,
                        idx: int) -> ReliabilityMatrix:
    raw = stream.uniforms("probe", idx, n, 1, 0, n * n).reshape(n, n)
    probs = (raw + raw.T) / 2.0
    np.fill_diagonal(probs, 0.0)
    return ReliabilityMatrix(probs)


def convexity_probe(n: int, segments: int, stream: RandomStream,
                    alphas: tuple[float, ...] = (0.25, 0.5, 0.75)) -> float:
    """Worst violation of segment convexity for the contraction objective.

    Draws random feasible endpoint pairs over random reliabilities and
    compares the objective at interior blend points with the chord.  A
    convex objective keeps every violation at rounding level.
    """
    if segments < 1:
        raise ArgumentError("segments must be >= 1")
    worst = 0.0
    for s in range(segments):
        rel = _random_reliability(n, stream, 3 * s)
        w1 = _random_feasible(n, stream, 3 * s + 1)
        w2 = _random_feasible(n, stream, 3 * s + 2)
        f1 = mixing_objective(w1, rel)
        f2 = mixing_objective(w2, rel)
        for alpha in alphas:
            blend = MixingMatrix(alpha * w1.weights + (1 - alpha) * w2.weights)
            chord = alpha * f1 + (1 - alpha) * f2
            worst = max(worst, mixing_objective(blend, rel) - chord)
    return worst


def subgradient_check(n: int, instances: int, stream: RandomStream,
                      bumps: int = 6, step: float = 1e-6,
                      gap_floor: float = 1e-4) -> tuple[float, int]:
    """Finite-difference validation of the objective subgradient.

    For random instances with a clear top-eigenvalue gap (where the
    objective is differentiable), compares directional derivatives along
    random symmetric off-diagonal bumps against central differences.
    Returns the worst relative error and how many instances qualified.
    """
    worst = 0.0
    checked = 0
    for inst in range(instances):
        rel = _random_reliability(n, stream, 1000 + 2 * inst)
        w = _random_feasible(n, stream, 1000 + 2 * inst + 1)
        m = effective_second_moment(w, rel) - np.full((n, n), 1.0 / n)
        values, _ = jacobi_eigh(m)
        top_two = np.sort(values)[-2:]
        if top_two[1] - top_two[0] < gap_floor:
            continue
        checked += 1
        grad = objective_gradient(w, rel)
        pair_count = n * (n - 1) // 2
        picks = stream.uniforms("probe", 2000 + inst, n, 2, 0, bumps)
        for u in picks:
            flat = min(int(u * pair_count), pair_count - 1)
            a, b = _pair_from_index(flat, n)
            bump = np.zeros((n, n))
            bump[a, b] = bump[b, a] = step
            hi = _objective_at(w.weights + bump, rel)
            lo = _objective_at(w.weights - bump, rel)
            fd = (hi - lo) / (4.0 * step)
            analytic = grad[a, b]
            err = abs(analytic - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst, checked


def _pair_from_index(flat: int, n: int) -> tuple[int, int]:
    for a in range(n):
        row = n - 1 - a
        if flat < row:
            return a, a + 1 + flat
        flat -= row
    raise ArgumentError("pair index out of range")


def _objective_at(w: np.ndarray, rel: ReliabilityMatrix) -> float:
    from .mixing import _objective_raw
    lam, _ = _objective_raw(w, rel.probs)
    return lam


def optimizer_grid_check(p: float, grid_points: int = 10001,
                         options: OptimizerOptions | None = None
                         ) -> tuple[float, float]:
    """Two-device optimizer against a dense grid over the single weight.

    Returns (optimizer objective, grid-best objective); the optimizer
    should match the grid to within its resolution.
    """
    if not 0.0 < p < 1.0:
        raise ArgumentError("link reliability must be in (0, 1)")
    probs = np.array([[0.0, p], [p, 0.0]])
    rel = ReliabilityMatrix(probs)
    result = optimize_weights(rel, options or OptimizerOptions())
    best = math.inf
    for w in np.linspace(0.0, 1.0, grid_points):
        m = MixingMatrix(np.array([[1.0 - w, w], [w, 1.0 - w]]))
        best = min(best, mixing_objective(m, rel))
    return result.objective, best


@dataclass(frozen=True)
class EnvelopeReport:
    """Monte Carlo dispersion curve against the geometric envelope."""

    empirical: np.ndarray   # mean dispersion per step, step 0 first
    stderr: np.ndarray      # standard error of each mean
    envelope: np.ndarray    # contraction^t * initial dispersion
    violations: int         # steps where the mean exceeds envelope + 3 se
    passed: bool


def dispersion_envelope_check(weights: MixingMatrix, rel: ReliabilityMatrix,
                              x0: np.ndarray, steps: int, trials: int,
                              stream: RandomStream) -> EnvelopeReport:
    """Check E[dispersion_t] <= contraction^t * dispersion_0 by simulation."""
    m = effective_second_moment(weights, rel)
    from .mixing import contraction_rate
    rho = contraction_rate(m)
    curves = consensus_trajectories(x0, weights, rel, steps, trials, stream)
    empirical = curves.mean(axis=0)
    stderr = curves.std(axis=0, ddof=1) / math.sqrt(trials)
    envelope = empirical[0] * rho ** np.arange(steps + 1)
    over = empirical > envelope + 3.0 * stderr
    violations = int(np.sum(over[1:]))  # step 0 is deterministic
    return EnvelopeReport(empirical=empirical, stderr=stderr,
                          envelope=envelope, violations=violations,
                          passed=violations == 0)


@dataclass(frozen=True)
class ProblemConstants:
    """Scalar constants describing a device fleet's optimization problem."""

    smoothness: float            # gradient Lipschitz constant
    noise_variance: float        # per-device stochastic gradient variance
    heterogeneity: float         # device-to-fleet gradient spread
    initial_gap: float           # loss at the start minus the optimum
    noise_sampled: bool = False
    heterogeneity_sampled: bool = True


def _quadratic_smoothness(obj: QuadraticObjective) -> float:
    values, _ = jacobi_eigh(obj.curvature)
    return float(values.max())


def _logistic_noise_variance(obj: LogisticObjective, x: np.ndarray) -> float:
    if obj.batch_size is None:
        return 0.0
    margins = obj.labels * (obj.features @ x)
    # d/dm log(1 + e^-m) = -sigmoid(-m)
    sig = 1.0 / (1.0 + np.exp(margins))
    per_sample = -(obj.labels * sig)[:, None] * obj.features
    centered = per_sample - per_sample.mean(axis=0)
    return float(np.mean(np.sum(centered ** 2, axis=1))) / obj.batch_size


def estimate_constants(objectives: list, x0: np.ndarray,
                       stream: RandomStream, probes: int = 16,
                       probe_spread: float = 1.0,
                       best_loss: float | None = None) -> ProblemConstants:
    """Measure the constants the convergence bound needs.

    Smoothness is exact for quadratics and a curvature bound for logistic
    fleets.  Gradient noise is exact for additive-noise quadratics and
    sampled for minibatch logistic fleets.  Heterogeneity has no finite
    uniform value for distinct quadratics, so it is always the sampled
    maximum over probe points around the start.  The initial gap uses the
    closed-form optimum when one exists, otherwise `best_loss` (or a zero
    floor, valid for nonnegative losses).
    """
    if not objectives:
        raise ArgumentError("need at least one objective")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 2 or x0.shape[0] != len(objectives):
        raise ArgumentError(
            f"x0 must be ({len(objectives)}, d), got {x0.shape}")
    if probes < 0:
        raise ArgumentError("probes must be >= 0")
    n = len(objectives)
    d = x0.shape[1]
    center = x0.mean(axis=0)

    all_quadratic = all(isinstance(o, QuadraticObjective) for o in objectives)
    if all_quadratic:
        smoothness = max(_quadratic_smoothness(o) for o in objectives)
    else:
        smoothness = max(o.curvature_bound() for o in objectives)

    points = [center]
    for k in range(probes):
        offset = probe_spread * stream.normals("probe", 0, k, 3, 0, d)
        points.append(center + offset)

    noise_sampled = not all_quadratic
    if all_quadratic:
        noise_variance = max(o.noise_variance() for o in objectives)
    else:
        noise_variance = 0.0
        for x in points:
            for o in objectives:
                noise_variance = max(noise_variance,
                                     _logistic_noise_variance(o, x))

    heterogeneity = 0.0
    for x in points:
        fleet = global_gradient(objectives, x)
        spread = sum(float(np.sum((o.gradient(x) - fleet) ** 2))
                     for o in objectives) / n
        heterogeneity = max(heterogeneity, spread)

    start_loss = global_loss(objectives, center)
    if all_quadratic:
        optimum = quadratic_optimum(objectives)
        initial_gap = start_loss - global_loss(objectives, optimum)
    elif best_loss is not None:
        initial_gap = start_loss - best_loss
    else:
        initial_gap = start_loss
    initial_gap = max(initial_gap, 0.0)

    return ProblemConstants(smoothness=smoothness,
                            noise_variance=noise_variance,
                            heterogeneity=heterogeneity,
                            initial_gap=initial_gap,
                            noise_sampled=noise_sampled,
                            heterogeneity_sampled=True)


@dataclass(frozen=True)
class BoundReport:
    """Evaluation of the stationarity bound for one configuration."""

    rhs: float          # bound on the average squared fleet gradient
    feasible: bool      # whether the step size satisfies the bound's regime
    step_limit: float   # largest step size the regime admits
    feedback: float     # the self-coupling term; must stay below one half


def convergence_bound(constants: ProblemConstants, gamma: float, T: int,
                      n: int, drift: float, contraction: float) -> BoundReport:
    """Bound on min-over-time expected squared gradient after T rounds.

    `drift` is the linear-weight mean-drift coefficient and `contraction`
    the per-round dispersion factor of the mixing in use.  Requires
    contraction < 1 (some averaging progress per round).
    """
    if gamma <= 0.0:
        raise ArgumentError("gamma must be positive")
    if T < 1:
        raise ArgumentError("T must be >= 1")
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if drift < 0.0:
        raise ArgumentError("drift must be nonnegative")
    if not 0.0 <= contraction < 1.0:
        raise ArgumentError(
            f"contraction must lie in [0, 1), got {contraction}")

    L = constants.smoothness
    sigma_sq = constants.noise_variance
    zeta_sq = constants.heterogeneity
    gap = constants.initial_gap
    rho = contraction
    kappa = drift

    sqrt_rho = math.sqrt(rho)
    if rho > 0.0:
        step_limit = min(1.0, (1.0 / sqrt_rho - 1.0) / 4.0) / L
    else:
        step_limit = 1.0 / L
    feasible = gamma * L <= step_limit * L + 1e-15

    shrink = (1.0 - sqrt_rho) ** 2
    feedback = 6.0 * gamma ** 2 * L ** 2 * rho / shrink if rho > 0 else 0.0
    if feedback >= 0.5:
        return BoundReport(rhs=math.inf, feasible=False,
                           step_limit=step_limit, feedback=feedback)

    descent = (gap / (gamma * T)
               + gamma * L * sigma_sq / n
               + 2.0 * gamma * L * kappa * sigma_sq / n
               + 6.0 * L * kappa * gamma * zeta_sq / n)
    lag_scale = (L ** 2
                 + 2.0 * L * kappa / (gamma * n)
                 + 2.0 * (3.0 * n + 1.0) * L ** 3 * gamma * kappa / n)
    if rho > 0.0:
        lag = (2.0 * gamma ** 2 * sigma_sq * rho / (1.0 - rho)
               + 6.0 * gamma ** 2 * zeta_sq * rho / shrink)
    else:
        lag = 0.0
    rhs = (descent * (1.0 - feedback) / (1.0 - 2.0 * feedback)
           + lag_scale * lag / (1.0 - 2.0 * feedback))
    return BoundReport(rhs=rhs, feasible=feasible, step_limit=step_limit,
                       feedback=feedback)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    threshold: float
    details: str

    def to_obj(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed),
                "observed": float(self.observed),
                "threshold": float(self.threshold), "details": self.details}


@dataclass(frozen=True)
class VerifyOptions:
    seed: int = 0
    trials: int = 10000
    enumeration_instances: int = 50
    drift_instances: int = 1000
    convexity_segments: int = 100
    gradient_instances: int = 20
    envelope_devices: int = 8
    envelope_steps: int = 50
    envelope_trials: int = 2000

    def __post_init__(self):
        for name in ("trials", "enumeration_instances", "drift_instances",
                     "convexity_segments", "gradient_instances",
                     "envelope_steps", "envelope_trials"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.envelope_devices < 2:
            raise ArgumentError("envelope_devices must be >= 2")


def _check_enumeration(opts: VerifyOptions,
                       stream: RandomStream) -> CheckResult:
    worst = 0.0
    count = 0
    for n in (2, 3, 4):
        for inst in range(opts.enumeration_instances):
            idx = 10000 + n * 1000 + inst
            rel = _random_reliability(n, stream, idx)
            w = _random_feasible(n, stream, idx)
            mean_e, second_e = _enumerate_moments(w, rel)
            worst = max(worst,
                        float(np.max(np.abs(mean_e - effective_mean(w, rel)))),
                        float(np.max(np.abs(
                            second_e - effective_second_moment(w, rel)))))
            count += 1
    return CheckResult(
        name="moment-enumeration", passed=worst <= 1e-12, observed=worst,
        threshold=1e-12,
        details=f"closed-form moments vs full mask enumeration on {count} "
                "instances at fleet sizes 2-4")


def _check_discrepancy(opts: VerifyOptions,
                       stream: RandomStream) -> CheckResult:
    # the uncorrected second moment differs off-diagonal by 2 p w^2 (1-p)
    worst = 0.0
    for inst in range(opts.enumeration_instances):
        n = 2 + inst % 4
        idx = 20000 + inst
        rel = _random_reliability(n, stream, idx)
        w = _random_feasible(n, stream, idx)
        exact = effective_second_moment(w, rel)
        loose = uncorrected_second_moment(w, rel)
        predicted = 2.0 * rel.probs * w.weights ** 2 * (1.0 - rel.probs)
        gap = loose - exact
        np.fill_diagonal(gap, 0.0)
        worst = max(worst, float(np.max(np.abs(gap - predicted))))
    return CheckResult(
        name="uncorrected-discrepancy", passed=worst <= 1e-12,
        observed=worst, threshold=1e-12,
        details="off-diagonal excess of the uncorrected second moment "
                "matches 2 p w^2 (1-p) entrywise")


def _check_one_step_moments(opts: VerifyOptions,
                            stream: RandomStream) -> CheckResult:
    n, d = 4, 8
    rel = _random_reliability(n, stream, 30000)
    w = _random_feasible(n, stream, 30000)
    x0 = stream.normals("mcx0", 0, 0, 0, 0, n * d).reshape(n, d)
    samples = masked_mix_batch(x0, w, rel, t=0, stream=stream,
                               trials=opts.trials)
    worst_z = 0.0
    mean_pred = effective_mean(w, rel) @ x0
    mean_hat = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(opts.trials)
    z = np.abs(mean_hat - mean_pred) / np.maximum(se, 1e-300)
    worst_z = float(np.max(z))
    m = effective_second_moment(w, rel)
    sq = np.einsum("tik,tik->t", samples, samples)
    sq_pred = float(np.einsum("ik,ij,jk->", x0, m, x0))
    sq_se = sq.std(ddof=1) / math.sqrt(opts.trials)
    worst_z = max(worst_z, abs(float(sq.mean()) - sq_pred) / sq_se)
    comparisons = n * d + 1
    # the worst of many z-scores needs more headroom than a single one;
    # 4.0 keeps the family false-alarm rate near the single-test 3-sigma
    return CheckResult(
        name="one-step-moments", passed=worst_z <= 4.0, observed=worst_z,
        threshold=4.0,
        details=f"worst z-score across {comparisons} statistics (every mean "
                f"entry plus the quadratic form) over {opts.trials} "
                "one-round trials")


def _check_mean_drift_mc(opts: VerifyOptions,
                         stream: RandomStream) -> CheckResult:
    n, d = 4, 6
    rel = _random_reliability(n, stream, 40000)
    w = _random_feasible(n, stream, 40000)
    x0 = stream.normals("mcx0", 1, 0, 0, 0, n * d).reshape(n, d)
    samples = masked_mix_batch(x0, w, rel, t=1, stream=stream,
                               trials=opts.trials)
    moves = samples.mean(axis=1) - x0.mean(axis=0)
    drift_samples = np.sum(moves ** 2, axis=1)
    predicted = exact_mean_drift(x0, w, rel)
    se = drift_samples.std(ddof=1) / math.sqrt(opts.trials)
    z = abs(float(drift_samples.mean()) - predicted) / se
    return CheckResult(
        name="mean-drift-monte-carlo", passed=z <= 3.0, observed=z,
        threshold=3.0,
        details=f"simulated squared mean movement vs closed form over "
                f"{opts.trials} trials, z-score")


def _check_drift_bound_sweep(opts: VerifyOptions,
                             stream: RandomStream) -> CheckResult:
    worst = -math.inf
    half_violations = 0
    for inst in range(opts.drift_instances):
        n = 2 + inst % 4
        idx = 50000 + inst
        rel = _random_reliability(n, stream, idx)
        w = _random_feasible(n, stream, idx)
        d = 1 + inst % 3
        x = stream.normals("probe", idx, n, 4, 0, n * d).reshape(n, d)
        report = drift_bound_check(x, w, rel)
        worst = max(worst, report.exact - report.bound)
        if not report.half_holds:
            half_violations += 1
    return CheckResult(
        name="drift-bound-sweep", passed=worst <= 1e-12, observed=worst,
        threshold=1e-12,
        details=f"exact drift minus envelope over {opts.drift_instances} "
                f"random instances; halved constant failed on "
                f"{half_violations} of them")


def _check_drift_counterexample() -> CheckResult:
    # two devices, even weights, coin-flip link, parameters delta apart:
    # exact drift is delta^2/32, twice the halved-constant envelope
    delta = 1.0
    rel = ReliabilityMatrix(np.array([[0.0, 0.5], [0.5, 0.0]]))
    w = uniform_weights(2)
    x = np.array([[0.0], [delta]])
    report = drift_bound_check(x, w, rel)
    margin = report.exact - report.half_bound
    return CheckResult(
        name="drift-bound-counterexample", passed=margin > 0.0,
        observed=margin, threshold=0.0,
        details="two-device case where exact drift (1/32) strictly exceeds "
                "the halved-constant envelope (1/64); the doubled constant "
                "is the correct one")


def _check_convexity(opts: VerifyOptions,
                     stream: RandomStream) -> CheckResult:
    worst = convexity_probe(6, opts.convexity_segments, stream)
    return CheckResult(
        name="objective-convexity", passed=worst <= 1e-9, observed=worst,
        threshold=1e-9,
        details=f"chord violations across {opts.convexity_segments} random "
                "segments of six-device instances")


def _check_subgradient(opts: VerifyOptions,
                       stream: RandomStream) -> CheckResult:
    worst, checked = subgradient_check(5, opts.gradient_instances, stream)
    return CheckResult(
        name="subgradient-direction", passed=worst <= 1e-5 and checked > 0,
        observed=worst, threshold=1e-5,
        details=f"central finite differences on {checked} instances with a "
                "clear top-eigenvalue gap")


def _check_optimizer_grid() -> CheckResult:
    worst = 0.0
    for p in (0.2, 0.5, 0.8):
        obj, grid_best = optimizer_grid_check(p)
        worst = max(worst, abs(obj - grid_best))
    return CheckResult(
        name="optimizer-grid", passed=worst <= 1e-3, observed=worst,
        threshold=1e-3,
        details="two-device optimizer objective vs dense single-weight grid "
                "at reliabilities 0.2, 0.5, 0.8")


def _check_optimizer_not_worse(opts: VerifyOptions,
                               stream: RandomStream) -> CheckResult:
    worst = -math.inf
    instances = 5
    for inst in range(instances):
        n = 3 + inst % 3
        rel = _random_reliability(n, stream, 60000 + inst)
        result = optimize_weights(rel)
        worst = max(worst, result.objective - result.objective_uniform)
    return CheckResult(
        name="optimizer-not-worse", passed=worst <= 1e-6, observed=worst,
        threshold=1e-6,
        details=f"optimized minus uniform objective on {instances} random "
                "instances; positive means the optimizer lost ground")


def _check_envelope(opts: VerifyOptions, stream: RandomStream) -> CheckResult:
    n, d = opts.envelope_devices, 2
    rel = _random_reliability(n, stream, 70000)
    w = _random_feasible(n, stream, 70000)
    x0 = stream.normals("mcx0", 2, 0, 0, 0, n * d).reshape(n, d)
    report = dispersion_envelope_check(w, rel, x0, opts.envelope_steps,
                                       opts.envelope_trials, stream)
    return CheckResult(
        name="dispersion-envelope", passed=report.passed,
        observed=float(report.violations), threshold=0.0,
        details=f"steps where mean dispersion exceeded the geometric "
                f"envelope by 3 standard errors, over {opts.envelope_steps} "
                f"rounds and {opts.envelope_trials} trials")


def run_verification_suite(options: VerifyOptions | None = None
                           ) -> list[CheckResult]:
    """Run every consistency check and return one result per check."""
    opts = options or VerifyOptions()
    stream = RandomStream(opts.seed)
    return [
        _check_enumeration(opts, stream),
        _check_discrepancy(opts, stream),
        _check_one_step_moments(opts, stream),
        _check_mean_drift_mc(opts, stream),
        _check_drift_bound_sweep(opts, stream),
        _check_drift_counterexample(),
        _check_convexity(opts, stream),
        _check_subgradient(opts, stream),
        _check_optimizer_grid(),
        _check_optimizer_not_worse(opts, stream),
        _check_envelope(opts, stream),
    ]
