"""Device layouts, link reliabilities, and threshold graphs.

Devices live at fixed positions in the unit square.  Each unordered pair is
joined by a lossy link whose per-entry delivery probability decays with
distance: p = k ** ((d / r) ** 2) with 0 < k < 1 and a reference range r.
A threshold graph keeps only links strictly more reliable than a cutoff;
that graph is what the retransmission baseline runs on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .rng import RandomStream

_SYM_TOL = 1e-10


@dataclass(frozen=True)
class DeviceLayout:
    """Positions of n devices in the unit square, one row per device."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ArgumentError(f"positions must be (n, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ArgumentError("need at least two devices")
        if not np.all(np.isfinite(pos)):
            raise ArgumentError("positions have non-finite entries")
        if pos.min() < 0.0 or pos.max() > 1.0:
            raise ArgumentError("positions must lie in the unit square")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ReliabilityMatrix:
    """Pairwise delivery probabilities: symmetric, zero diagonal, in [0, 1]."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ArgumentError(f"probs must be square, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ArgumentError("probs have non-finite entries")
        if np.max(np.abs(p - p.T)) > _SYM_TOL:
            raise ArgumentError("probs must be symmetric")
        if np.any(np.diag(p) != 0.0):
            raise ArgumentError("diagonal must be zero (no self links)")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ArgumentError("probs must lie in [0, 1]")
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected simple graph as a boolean adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ArgumentError(f"adjacency must be square, got {a.shape}")
        a = a.astype(bool)
        if not np.array_equal(a, a.T):
            raise ArgumentError("adjacency must be symmetric")
        if np.any(np.diag(a)):
            raise ArgumentError("no self loops allowed")
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> list[tuple[int, int]]:
        i_idx, j_idx = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i_idx.tolist(), j_idx.tolist()))


def generate_layout(n: int, seed: int) -> DeviceLayout:
    """Draw n device positions i.i.d. uniform in the unit square."""
    if n < 2:
        raise ArgumentError("need at least two devices")
    stream = RandomStream(seed=seed)
    flat = stream.uniforms("layout", count=2 * n)
    return DeviceLayout(positions=flat.reshape(n, 2))


def reliability_from_layout(layout: DeviceLayout, k: float = 0.7,
                            r: float = 0.4) -> ReliabilityMatrix:
    """Distance-decay reliabilities p[i, j] = k ** ((d_ij / r) ** 2)."""
    if not 0.0 < k < 1.0:
        raise ArgumentError("decay base k must satisfy 0 < k < 1")
    if r <= 0.0:
        raise ArgumentError("reference range r must be positive")
    pos = layout.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist_sq = np.sum(diff * diff, axis=2)
    probs = k ** (dist_sq / (r * r))
    np.fill_diagonal(probs, 0.0)
    return ReliabilityMatrix(probs=probs)


def threshold_graph(rel: ReliabilityMatrix, p_delta: float) -> AdjacencyGraph:
    """Keep links strictly more reliable than p_delta."""
    if not 0.0 <= p_delta <= 1.0:
        raise ArgumentError("p_delta must lie in [0, 1]")
    adj = rel.probs > p_delta
    np.fill_diagonal(adj, False)
    return AdjacencyGraph(adjacency=adj)


def is_connected(graph: AdjacencyGraph) -> bool:
    """Breadth-first reachability from device 0."""
    n = graph.n
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(graph.adjacency[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


def reliability_cdf(rel: ReliabilityMatrix) -> list[tuple[float, float]]:
    """Empirical CDF of the upper-triangle link reliabilities.

    Returns (value, cumulative fraction) at each distinct value, ascending.
    """
    n = rel.n
    iu = np.triu_indices(n, k=1)
    vals = np.sort(rel.probs[iu])
    total = vals.size
    points = []
    idx = 0
    while idx < total:
        v = vals[idx]
        while idx < total and vals[idx] == v:
            idx += 1
        points.append((float(v), idx / total))
    return points
