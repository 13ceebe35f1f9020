"""Lossy transport simulation.

Each ordered pair (src, dst) gets its own mask stream addressed by
(iteration, src, dst), so delivery outcomes are reproducible and
independent across links, directions, and iterations.  Masks are drawn per
entry by default; packet mode draws one Bernoulli per contiguous group of
``packet_size`` entries.  The retransmission baseline counts how many
send/acknowledge rounds a lossless exchange would need: every directed
delivery retries until its first success, and the slowest link sets the
round count for the iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, RetransmissionError
from .rng import RandomStream
from .topology import AdjacencyGraph, ReliabilityMatrix

GRANULARITIES = ("per-dimension", "packet")


@dataclass(frozen=True)
class MaskSet:
    """Delivery indicators for one iteration.

    arrived[dst, src, k] is True when entry k sent by src reached dst.
    Self rows (dst == src) are unused and kept False.
    """

    arrived: np.ndarray
    iteration: int

    def __post_init__(self):
        a = np.asarray(self.arrived)
        if a.ndim != 3 or a.shape[0] != a.shape[1]:
            raise ArgumentError(f"arrived must be (n, n, d), got {a.shape}")
        object.__setattr__(self, "arrived", a.astype(bool))


def sample_masks(rel: ReliabilityMatrix, d: int, t: int, stream: RandomStream,
                 granularity: str = "per-dimension",
                 packet_size: int = 1) -> MaskSet:
    """Draw delivery masks for every ordered pair at iteration t.

    Packet mode with packet_size 1 consumes the stream exactly like
    per-dimension mode, so the two are bit-identical in that case.
    """
    if d < 1:
        raise ArgumentError("dimension d must be >= 1")
    if granularity not in GRANULARITIES:
        raise ArgumentError(
            f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    if packet_size < 1:
        raise ArgumentError("packet_size must be >= 1")
    n = rel.n
    p = rel.probs
    arrived = np.zeros((n, n, d), dtype=bool)
    if granularity == "per-dimension":
        n_draws = d
        expand = None
    else:
        n_draws = -(-d // packet_size)
        expand = np.repeat(np.arange(n_draws), packet_size)[:d]
    for src in range(n):
        for dst in range(n):
            if src == dst:
                continue
            u = stream.uniforms("mask", t, src, dst, 0, n_draws)
            hit = u < p[dst, src]
            arrived[dst, src] = hit if expand is None else hit[expand]
    return MaskSet(arrived=arrived, iteration=t)


def fill_missing(received: np.ndarray, arrived: np.ndarray,
                 local: np.ndarray) -> np.ndarray:
    """Patch undelivered entries with the receiver's own values."""
    received = np.asarray(received, dtype=float)
    local = np.asarray(local, dtype=float)
    arrived = np.asarray(arrived, dtype=bool)
    if received.shape != local.shape or received.shape != arrived.shape:
        raise ArgumentError(
            f"shape mismatch: received {received.shape}, "
            f"mask {arrived.shape}, local {local.shape}")
    return np.where(arrived, received, local)


def retransmission_attempts(u: float, p: float) -> int:
    """Attempts until first success for one directed delivery.

    Inverse-CDF draw: the result is geometric with success probability p.
    """
    if p >= 1.0:
        return 1
    if p <= 0.0:
        raise RetransmissionError("zero-reliability link never delivers")
    return max(1, math.ceil(math.log1p(-u) / math.log1p(-p)))


def tcp_rounds(graph: AdjacencyGraph, rel: ReliabilityMatrix, t: int,
               stream: RandomStream) -> int:
    """Rounds a lossless synchronized exchange needs at iteration t.

    Every directed delivery along a graph edge retries until it succeeds
    (acknowledgements themselves never fail); the iteration completes when
    the slowest delivery does.  Returns 0 for an edgeless graph.
    """
    if graph.n != rel.n:
        raise ArgumentError(
            f"graph has {graph.n} nodes but reliabilities are {rel.n}")
    worst = 0
    for i, j in graph.edges():
        p = rel.probs[i, j]
        if p <= 0.0:
            raise RetransmissionError(
                f"edge ({i}, {j}) has zero reliability and never delivers")
        for src, dst in ((i, j), (j, i)):
            u = float(stream.uniforms("tcp", t, src, dst, 0, 1)[0])
            worst = max(worst, retransmission_attempts(u, p))
    return worst


def delivery_statistics(rel: ReliabilityMatrix, d: int, steps: int,
                        stream: RandomStream) -> list[tuple[int, int, float]]:
    """Empirical delivered fraction per ordered pair over several steps.

    Returns (src, dst, delivered_fraction) rows for auditing mask streams
    against the reliability matrix.
    """
    if steps < 1:
        raise ArgumentError("steps must be >= 1")
    n = rel.n
    totals = np.zeros((n, n))
    for t in range(steps):
        masks = sample_masks(rel, d, t, stream)
        totals += masks.arrived.sum(axis=2).T  # [src, dst] orientation
    rows = []
    for src in range(n):
        for dst in range(n):
            if src == dst:
                continue
            rows.append((src, dst, float(totals[src, dst] / (steps * d))))
    return rows
