"""Local training objectives and their synthetic generators.

Each device owns one objective.  Quadratics are stored as (curvature
matrix, linear term, offset) with gradient A x - b; the generator builds
them centered on per-device optima so losses are nonnegative and the global
optimum has a closed form.  Logistic objectives hold a local data shard;
heterogeneity comes from a per-device bias added to the label-generating
margin, which skews the label mix across devices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .linalg import jacobi_eigh
from .rng import RandomStream


@dataclass(frozen=True)
class QuadraticObjective:
    """f(x) = 0.5 x'Ax - b'x + offset with A symmetric positive definite."""

    curvature: np.ndarray
    linear: np.ndarray
    offset: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.curvature, dtype=float)
        b = np.asarray(self.linear, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ArgumentError(f"curvature must be square, got {a.shape}")
        if b.shape != (a.shape[0],):
            raise ArgumentError("linear term does not match curvature size")
        if np.max(np.abs(a - a.T)) > 1e-10:
            raise ArgumentError("curvature must be symmetric")
        if self.noise_std < 0.0:
            raise ArgumentError("noise_std must be nonnegative")
        object.__setattr__(self, "curvature", 0.5 * (a + a.T))
        object.__setattr__(self, "linear", b)

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    @property
    def iterations_per_epoch(self) -> float:
        return 1.0

    def loss(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.curvature @ x - self.linear @ x
                     + self.offset)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.curvature @ np.asarray(x, dtype=float) - self.linear

    def stochastic_gradient(self, x: np.ndarray, t: int, device: int,
                            stream: RandomStream) -> np.ndarray:
        g = self.gradient(x)
        if self.noise_std == 0.0:
            return g
        noise = stream.normals("noise", t, device, 0, 0, self.dim)
        return g + self.noise_std * noise

    def noise_variance(self) -> float:
        """Exact E||stochastic - exact||^2 of the gradient."""
        return self.dim * self.noise_std ** 2


@dataclass(frozen=True)
class LogisticObjective:
    """Binary logistic regression on a local shard, labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray
    reg: float = 0.0
    batch_size: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labs = np.asarray(self.labels, dtype=float)
        if feats.ndim != 2:
            raise ArgumentError(f"features must be 2-D, got {feats.shape}")
        if labs.shape != (feats.shape[0],):
            raise ArgumentError("labels do not match feature rows")
        if not np.all(np.isin(labs, (-1.0, 1.0))):
            raise ArgumentError("labels must be -1 or +1")
        if self.reg < 0.0:
            raise ArgumentError("reg must be nonnegative")
        if self.batch_size is not None and not (
                1 <= self.batch_size <= feats.shape[0]):
            raise ArgumentError("batch_size must be in [1, shard size]")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> int:
        return self.features.shape[0]

    @property
    def iterations_per_epoch(self) -> float:
        if self.batch_size is None:
            return 1.0
        return self.samples / self.batch_size

    def loss(self, x: np.ndarray) -> float:
        margins = self.labels * (self.features @ np.asarray(x, dtype=float))
        # log(1 + exp(-m)) computed stably for both signs
        losses = np.logaddexp(0.0, -margins)
        return float(losses.mean() + 0.5 * self.reg * np.dot(x, x))

    def _gradient_of(self, rows: np.ndarray, labs: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
        margins = labs * (rows @ x)
        coef = -labs / (1.0 + np.exp(margins))
        return rows.T @ coef / rows.shape[0] + self.reg * x

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._gradient_of(self.features, self.labels, x)

    def stochastic_gradient(self, x: np.ndarray, t: int, device: int,
                            stream: RandomStream) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.batch_size is None:
            return self.gradient(x)
        u = stream.uniforms("batch", t, device, 0, 0, self.batch_size)
        idx = np.minimum((u * self.samples).astype(int), self.samples - 1)
        return self._gradient_of(self.features[idx], self.labels[idx], x)

    def curvature_bound(self) -> float:
        """Smoothness constant: max feature row norm squared / 4 plus reg."""
        row_sq = np.sum(self.features ** 2, axis=1)
        return float(row_sq.max() / 4.0 + self.reg)


LocalObjective = QuadraticObjective | LogisticObjective


def global_loss(objectives: list, x: np.ndarray) -> float:
    return float(np.mean([obj.loss(x) for obj in objectives]))


def global_gradient(objectives: list, x: np.ndarray) -> np.ndarray:
    return np.mean([obj.gradient(x) for obj in objectives], axis=0)


def quadratic_optimum(objectives: list[QuadraticObjective]) -> np.ndarray:
    """Closed-form minimizer of the average quadratic loss.

    Solves sum_i (A_i x - b_i) = 0.
    """
    if not objectives or not all(
            isinstance(o, QuadraticObjective) for o in objectives):
        raise ArgumentError("need a nonempty list of quadratic objectives")
    a_total = sum(o.curvature for o in objectives)
    b_total = sum(o.linear for o in objectives)
    return np.linalg.solve(a_total, b_total)


def curvature_constant(objectives: list) -> float:
    """Smoothness constant L for the worst device.

    Exact top curvature eigenvalue for quadratics; the standard bound for
    logistic shards.
    """
    worst = 0.0
    for obj in objectives:
        if isinstance(obj, QuadraticObjective):
            values, _ = jacobi_eigh(obj.curvature)
            worst = max(worst, float(values.max()))
        elif isinstance(obj, LogisticObjective):
            worst = max(worst, obj.curvature_bound())
        else:
            raise ArgumentError(f"unknown objective type: {type(obj)!r}")
    return worst


def _random_rotation(dim: int, stream: RandomStream, device: int) -> np.ndarray:
    g = stream.normals("rotation", 0, device, 0, 0, dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def make_quadratic_objectives(n: int, dim: int, seed: int,
                              curvature_range: tuple[float, float] = (1.0, 4.0),
                              optimum_spread: float = 1.0,
                              noise_std: float = 0.0
                              ) -> list[QuadraticObjective]:
    """Per-device quadratics centered on spread-out local optima.

    Every device shares the curvature spectrum (so the smoothness constant
    is curvature_range[1] exactly) under its own rotation; local optima are
    drawn at scale optimum_spread, which controls heterogeneity.  Losses are
    offset so each local minimum value is zero.
    """
    if n < 1 or dim < 1:
        raise ArgumentError("n and dim must be positive")
    lo, hi = curvature_range
    if not 0.0 < lo <= hi:
        raise ArgumentError("curvature_range must satisfy 0 < lo <= hi")
    stream = RandomStream(seed=seed)
    spectrum = np.linspace(lo, hi, dim)
    out = []
    for i in range(n):
        rot = _random_rotation(dim, stream, i)
        a = rot @ np.diag(spectrum) @ rot.T
        a = 0.5 * (a + a.T)
        center = optimum_spread * stream.normals("center", 0, i, 0, 0, dim)
        b = a @ center
        offset = float(0.5 * center @ b)
        out.append(QuadraticObjective(curvature=a, linear=b, offset=offset,
                                      noise_std=noise_std))
    return out


def make_logistic_objectives(n: int, dim: int, samples_per_device: int,
                             seed: int, label_skew: float = 0.0,
                             reg: float = 1e-2,
                             batch_size: int | None = None
                             ) -> list[LogisticObjective]:
    """Synthetic logistic shards from a shared ground-truth separator.

    label_skew adds a per-device bias ramp to the label-generating margin,
    so devices see different label mixes without changing the feature
    distribution.
    """
    if n < 1 or dim < 1 or samples_per_device < 1:
        raise ArgumentError("n, dim, samples_per_device must be positive")
    stream = RandomStream(seed=seed)
    truth = stream.normals("separator", 0, 0, 0, 0, dim)
    truth /= math.sqrt(float(truth @ truth)) / 2.0
    out = []
    for i in range(n):
        feats = stream.normals("features", 0, i, 0, 0,
                               samples_per_device * dim)
        feats = feats.reshape(samples_per_device, dim)
        bias = 0.0
        if n > 1:
            bias = label_skew * (2.0 * i / (n - 1) - 1.0)
        margin = feats @ truth + bias
        prob_pos = 1.0 / (1.0 + np.exp(-margin))
        u = stream.uniforms("labels", 0, i, 0, 0, samples_per_device)
        labels = np.where(u < prob_pos, 1.0, -1.0)
        out.append(LogisticObjective(features=feats, labels=labels, reg=reg,
                                     batch_size=batch_size))
    return out
