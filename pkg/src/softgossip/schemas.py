"""Request and response bodies for the service endpoints.

Every model rejects unknown keys so a typo in a config file or client
payload fails loudly instead of silently falling back to a default.
Matrices travel as flat row-major lists with an explicit size, matching
the on-disk JSON layout.
"""

from __future__ import annotations

from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class MatrixPayload(StrictModel):
    """Square matrix as a flat row-major list."""

    n: int = Field(ge=1)
    data: list[float]


class Array2dPayload(StrictModel):
    """Rectangular array, one row per device."""

    n: int = Field(ge=1)
    dim: int = Field(ge=1)
    data: list[float]


class TopologyRequest(StrictModel):
    version: int = 1
    devices: int = Field(ge=2)
    seed: int = 0
    decay_base: float = Field(default=0.7, gt=0.0, lt=1.0)
    decay_range: float = Field(default=0.4, gt=0.0)


class TopologyResponse(StrictModel):
    version: int = 1
    devices: int
    seed: int
    decay_base: float
    decay_range: float
    positions: Array2dPayload
    reliability: MatrixPayload
    cdf_values: list[float]
    cdf_fractions: list[float]


class OptimizeRequest(StrictModel):
    version: int = 1
    reliability: MatrixPayload
    mode: Literal["uniform", "metropolis-hastings", "optimized"] = "optimized"
    threshold: float = Field(default=0.0, ge=0.0, lt=1.0)
    max_iters: int = Field(default=300, ge=1)
    step_init: float = Field(default=0.1, gt=0.0)
    step_decay: Literal["sqrt", "constant"] = "sqrt"
    tolerance: float = Field(default=1e-7, ge=0.0)
    patience: int = Field(default=50, ge=1)


class OptimizerLogRow(StrictModel):
    iter: int
    objective: float
    step_size: float
    projection_residual: float


class OptimizeResponse(StrictModel):
    version: int = 1
    mode: str
    weights: MatrixPayload
    objective: float
    objective_uniform: float
    iterations: int
    drift_squared: float
    drift_linear: float
    log: list[OptimizerLogRow]


class QuadraticSpec(StrictModel):
    kind: Literal["quadratic"] = "quadratic"
    dim: int = Field(ge=1)
    seed: int = 0
    curvature_min: float = Field(default=1.0, gt=0.0)
    curvature_max: float = Field(default=4.0, gt=0.0)
    optimum_spread: float = Field(default=1.0, ge=0.0)
    noise_std: float = Field(default=0.0, ge=0.0)


class LogisticSpec(StrictModel):
    kind: Literal["logistic"] = "logistic"
    dim: int = Field(ge=1)
    seed: int = 0
    samples_per_device: int = Field(ge=1)
    label_skew: float = Field(default=0.0, ge=0.0)
    reg: float = Field(default=1e-2, ge=0.0)
    batch_size: int | None = Field(default=None, ge=1)


ObjectiveSpec = Union[QuadraticSpec, LogisticSpec]


class RunRequest(StrictModel):
    version: int = 1
    protocol: Literal["soft-udp", "tcp-baseline", "consensus-only"]
    reliability: MatrixPayload
    weights: MatrixPayload
    iterations: int = Field(ge=0)
    seed: int = 0
    gamma: float = Field(default=0.0, ge=0.0)
    objective: ObjectiveSpec | None = Field(default=None,
                                            discriminator="kind")
    init_mode: Literal["same", "spread"] = "same"
    init_scale: float = Field(default=1.0, ge=0.0)
    granularity: Literal["per-dimension", "packet"] = "per-dimension"
    packet_size: int = Field(default=1, ge=1)
    threshold: float = Field(default=0.0, ge=0.0, lt=1.0)
    stop_loss: float | None = None


class MetricsPayload(StrictModel):
    iter: list[int]
    epoch: list[float]
    comm_rounds_cum: list[int]
    # None stands for an undefined value (no objectives configured)
    loss_mean_model: list[float | None]
    grad_norm_sq: list[float | None]
    dispersion: list[float]


class RunResponse(StrictModel):
    version: int = 1
    protocol: str
    devices: int
    dim: int
    final_iteration: int
    metrics: MetricsPayload
    final_params: Array2dPayload


class VerifyRequest(StrictModel):
    version: int = 1
    seed: int = 0
    trials: int = Field(default=10000, ge=1)
    enumeration_instances: int = Field(default=50, ge=1)
    drift_instances: int = Field(default=1000, ge=1)
    convexity_segments: int = Field(default=100, ge=1)
    gradient_instances: int = Field(default=20, ge=1)
    envelope_devices: int = Field(default=8, ge=2)
    envelope_steps: int = Field(default=50, ge=1)
    envelope_trials: int = Field(default=2000, ge=1)


class CheckPayload(StrictModel):
    name: str
    passed: bool = Field(alias="pass")
    observed: float
    threshold: float
    details: str


class VerifyResponse(StrictModel):
    version: int = 1
    all_pass: bool
    checks: list[CheckPayload]


class BoundRequest(StrictModel):
    version: int = 1
    gamma: float = Field(gt=0.0)
    iterations: int = Field(ge=1)
    devices: int = Field(ge=1)
    smoothness: float = Field(gt=0.0)
    noise_variance: float = Field(default=0.0, ge=0.0)
    heterogeneity: float = Field(default=0.0, ge=0.0)
    initial_gap: float = Field(default=0.0, ge=0.0)
    # give the mixing figures directly, or matrices to compute them from
    drift: float | None = Field(default=None, ge=0.0)
    contraction: float | None = Field(default=None, ge=0.0)
    reliability: MatrixPayload | None = None
    weights: MatrixPayload | None = None


class BoundResponse(StrictModel):
    version: int = 1
    # None means the self-coupling term diverged and no finite bound exists
    rhs: float | None
    feasible: bool
    step_limit: float
    feedback: float
    drift: float
    contraction: float


class HealthResponse(StrictModel):
    status: str
    version: str
