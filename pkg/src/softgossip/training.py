"""Decentralized training loops over lossy and reliable transports.

All devices advance in lockstep: each iteration takes local stochastic
gradient half-steps from the same parameter snapshot, then runs exactly one
communication round.  On the lossy path the round applies per-entry
delivery masks and patches losses with the receiver's own values, so it
always costs one round.  The reliable baseline averages exactly over a
connected graph but pays as many rounds as the slowest retransmitting link
needs that iteration.

The *_batch functions evolve many independent trials of the lossy
consensus at once for Monte Carlo verification.  They consume the same
per-link mask streams as the sequential step functions; with a single
trial the trajectories are bit-identical to the sequential path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigurationError
from .mixing import MixingMatrix
from .objectives import global_gradient, global_loss
from .rng import RandomStream
from .topology import AdjacencyGraph, ReliabilityMatrix, is_connected
from .transport import GRANULARITIES, tcp_rounds

PROTOCOLS = ("soft-udp", "tcp-baseline", "consensus-only")


def check_parameters(x: np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate a parameter matrix: one row per device, all entries finite."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ArgumentError(f"parameters must be (n, d), got {x.shape}")
    if n is not None and x.shape[0] != n:
        raise ArgumentError(f"expected {n} device rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("parameters have non-finite entries")
    return x


@dataclass
class MetricsTrace:
    """Per-iteration records of one run; row 0 is the initial state."""

    iter: list[int]
    epoch: list[float]
    comm_rounds_cum: list[int]
    loss_mean_model: list[float]
    grad_norm_sq: list[float]
    dispersion: list[float]

    def columns(self) -> list[tuple[str, list]]:
        return [("iter", self.iter), ("epoch", self.epoch),
                ("comm_rounds_cum", self.comm_rounds_cum),
                ("loss_mean_model", self.loss_mean_model),
                ("grad_norm_sq", self.grad_norm_sq),
                ("dispersion", self.dispersion)]


@dataclass(frozen=True)
class RunResult:
    metrics: MetricsTrace
    final_params: np.ndarray
    final_iteration: int


def local_gradients(objectives: list, x: np.ndarray, t: int,
                    stream: RandomStream) -> np.ndarray:
    """Stack of per-device stochastic gradients at iteration t."""
    x = check_parameters(x, len(objectives))
    return np.stack([obj.stochastic_gradient(x[i], t, i, stream)
                     for i, obj in enumerate(objectives)])


def _mask_draws(d: int, granularity: str, packet_size: int):
    """Number of stream draws per link and the packet expansion map."""
    if granularity not in GRANULARITIES:
        raise ArgumentError(
            f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    if packet_size < 1:
        raise ArgumentError("packet_size must be >= 1")
    if granularity == "per-dimension":
        return d, None
    n_draws = -(-d // packet_size)
    return n_draws, np.repeat(np.arange(n_draws), packet_size)[:d]


def _masked_mix(x: np.ndarray, weights: MixingMatrix, rel: ReliabilityMatrix,
                t: int, stream: RandomStream, granularity: str,
                packet_size: int) -> np.ndarray:
    n, d = x.shape
    w = weights.weights
    p = rel.probs
    n_draws, expand = _mask_draws(d, granularity, packet_size)
    out = x.copy()
    for src in range(n):
        for dst in range(n):
            if src == dst or w[dst, src] == 0.0:
                continue
            u = stream.uniforms("mask", t, src, dst, 0, n_draws)
            hit = u < p[dst, src]
            if expand is not None:
                hit = hit[expand]
            out[dst] += w[dst, src] * hit * (x[src] - x[dst])
    return out


def consensus_step(x: np.ndarray, weights: MixingMatrix,
                   rel: ReliabilityMatrix, t: int, stream: RandomStream,
                   granularity: str = "per-dimension",
                   packet_size: int = 1) -> np.ndarray:
    """One lossy averaging round: weighted pull of whatever arrived."""
    x = check_parameters(x, weights.n)
    if weights.n != rel.n:
        raise ArgumentError("weights and reliabilities differ in size")
    return _masked_mix(x, weights, rel, t, stream, granularity, packet_size)


def lossy_sgd_step(x: np.ndarray, objectives: list, weights: MixingMatrix,
                   rel: ReliabilityMatrix, gamma: float, t: int,
                   stream: RandomStream, granularity: str = "per-dimension",
                   packet_size: int = 1) -> np.ndarray:
    """Gradient half-step then one lossy averaging round (one comm round)."""
    x = check_parameters(x, weights.n)
    if gamma < 0.0:
        raise ArgumentError("gamma must be nonnegative")
    half = x - gamma * local_gradients(objectives, x, t, stream)
    return _masked_mix(half, weights, rel, t, stream, granularity, packet_size)


def reliable_sgd_step(x: np.ndarray, objectives: list,
                      graph_weights: MixingMatrix, graph: AdjacencyGraph,
                      rel: ReliabilityMatrix, gamma: float, t: int,
                      stream: RandomStream) -> tuple[np.ndarray, int]:
    """Gradient half-step then exact averaging over the graph.

    Returns the new parameters and the number of communication rounds the
    retransmitting exchange needed this iteration.
    """
    x = check_parameters(x, graph.n)
    w = graph_weights.weights
    off = ~np.eye(graph.n, dtype=bool)
    if np.any((w != 0.0) & off & ~graph.adjacency):
        raise ArgumentError("weights place mass outside the graph's edges")
    half = x - gamma * local_gradients(objectives, x, t, stream)
    rounds = tcp_rounds(graph, rel, t, stream)
    return w @ half, rounds


def masked_mix_batch(x: np.ndarray, weights: MixingMatrix,
                     rel: ReliabilityMatrix, t: int, stream: RandomStream,
                     trials: int) -> np.ndarray:
    """Apply one lossy averaging round to `trials` independent copies.

    Trial r consumes mask indices [r*d, (r+1)*d) of each link stream, so
    trial 0 reproduces the sequential consensus_step bit for bit.
    """
    x = check_parameters(x, weights.n)
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    n, d = x.shape
    w = weights.weights
    p = rel.probs
    states = np.broadcast_to(x, (trials, n, d)).copy()
    return _masked_mix_batch_states(states, w, p, t, stream)


def _masked_mix_batch_states(states: np.ndarray, w: np.ndarray,
                             p: np.ndarray, t: int,
                             stream: RandomStream) -> np.ndarray:
    trials, n, d = states.shape
    out = states.copy()
    for src in range(n):
        for dst in range(n):
            if src == dst or w[dst, src] == 0.0:
                continue
            u = stream.uniforms("mask", t, src, dst, 0, trials * d)
            hit = (u < p[dst, src]).reshape(trials, d)
            out[:, dst] += w[dst, src] * hit * (states[:, src] - states[:, dst])
    return out


def consensus_trajectories(x0: np.ndarray, weights: MixingMatrix,
                           rel: ReliabilityMatrix, steps: int, trials: int,
                           stream: RandomStream) -> np.ndarray:
    """Dispersion of many consensus-only trials at each step.

    Returns (trials, steps + 1): column t holds sum_i ||x_i - mean||^2 per
    trial after t rounds, all trials starting from the same x0.
    """
    x0 = check_parameters(x0, weights.n)
    if steps < 0 or trials < 1:
        raise ArgumentError("steps must be >= 0 and trials >= 1")
    n, d = x0.shape
    states = np.broadcast_to(x0, (trials, n, d)).copy()
    out = np.empty((trials, steps + 1))

    def dispersion(s):
        centered = s - s.mean(axis=1, keepdims=True)
        return np.sum(centered ** 2, axis=(1, 2))

    out[:, 0] = dispersion(states)
    for t in range(steps):
        states = _masked_mix_batch_states(states, weights.weights, rel.probs,
                                          t, stream)
        out[:, t + 1] = dispersion(states)
    return out


def run_experiment(protocol: str, x0: np.ndarray, objectives: list | None,
                   weights: MixingMatrix, rel: ReliabilityMatrix,
                   iterations: int, stream: RandomStream,
                   gamma: float = 0.0,
                   graph: AdjacencyGraph | None = None,
                   granularity: str = "per-dimension", packet_size: int = 1,
                   stop_loss: float | None = None) -> RunResult:
    """Run one protocol for `iterations` rounds and record metrics.

    soft-udp and consensus-only cost one communication round per iteration;
    tcp-baseline pays the retransmission count of its slowest link.  With
    stop_loss set, the run ends early once the mean-model loss reaches it.
    """
    if protocol not in PROTOCOLS:
        raise ConfigurationError(
            f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    if iterations < 0:
        raise ConfigurationError("iterations must be nonnegative")
    x = check_parameters(x0, weights.n)
    needs_gradients = protocol != "consensus-only"
    if needs_gradients:
        if objectives is None:
            raise ConfigurationError(f"{protocol} requires objectives")
        if len(objectives) != x.shape[0]:
            raise ConfigurationError(
                f"{len(objectives)} objectives for {x.shape[0]} devices")
    if protocol == "tcp-baseline":
        if graph is None:
            raise ConfigurationError("tcp-baseline requires a graph")
        if not is_connected(graph):
            raise ConfigurationError(
                "tcp-baseline requires a connected graph")

    iters_per_epoch = 1.0
    if objectives:
        iters_per_epoch = objectives[0].iterations_per_epoch

    metrics = MetricsTrace([], [], [], [], [], [])
    rounds_cum = 0

    def record(t):
        mean_model = x.mean(axis=0)
        if objectives:
            loss = global_loss(objectives, mean_model)
            grad = global_gradient(objectives, mean_model)
            grad_sq = float(grad @ grad)
        else:
            loss = float("nan")
            grad_sq = float("nan")
        centered = x - mean_model
        metrics.iter.append(t)
        metrics.epoch.append(t / iters_per_epoch)
        metrics.comm_rounds_cum.append(rounds_cum)
        metrics.loss_mean_model.append(loss)
        metrics.grad_norm_sq.append(grad_sq)
        metrics.dispersion.append(float(np.sum(centered ** 2)))
        return loss

    loss = record(0)
    final_t = 0
    for t in range(iterations):
        if stop_loss is not None and objectives and loss <= stop_loss:
            break
        if protocol == "soft-udp":
            x = lossy_sgd_step(x, objectives, weights, rel, gamma, t, stream,
                               granularity, packet_size)
            rounds_cum += 1
        elif protocol == "consensus-only":
            x = consensus_step(x, weights, rel, t, stream, granularity,
                               packet_size)
            rounds_cum += 1
        else:
            x, rounds = reliable_sgd_step(x, objectives, weights, graph, rel,
                                          gamma, t, stream)
            rounds_cum += rounds
        final_t = t + 1
        loss = record(final_t)
    return RunResult(metrics=metrics, final_params=x, final_iteration=final_t)


def initial_parameters(n: int, d: int, stream: RandomStream,
                       mode: str = "same", scale: float = 1.0) -> np.ndarray:
    """Starting parameters: one shared random point or one per device."""
    if mode == "same":
        row = scale * stream.normals("init", 0, 0, 0, 0, d)
        return np.tile(row, (n, 1))
    if mode == "spread":
        flat = scale * stream.normals("init", 0, 0, 0, 0, n * d)
        return flat.reshape(n, d)
    raise ConfigurationError(f"init mode must be 'same' or 'spread', got {mode!r}")
