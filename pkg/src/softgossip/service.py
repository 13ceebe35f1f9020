"""HTTP service exposing the laboratory's operations.

The CLI is a thin client of this app; by default it mounts it in-process,
so the same handlers serve both local one-shot commands and a long-lived
deployment behind uvicorn.  Domain errors map to structured JSON: 400
with kind "configuration" for bad inputs, 500 with kind "numerical" for
computations that failed to converge.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__
from .analysis import (VerifyOptions, convergence_bound,
                       run_verification_suite)
from .errors import ConfigurationError, NumericalError, SoftGossipError
from .matio import array2d_to_obj, matrix_from_obj, matrix_to_obj
from .mixing import (MixingMatrix, OptimizerOptions, contraction_rate,
                     drift_coeff, effective_second_moment,
                     metropolis_hastings_weights, mixing_objective,
                     optimize_weights, uniform_weights)
from .objectives import make_logistic_objectives, make_quadratic_objectives
from .rng import RandomStream
from .schemas import (Array2dPayload, BoundRequest, BoundResponse,
                      CheckPayload, HealthResponse, LogisticSpec,
                      MatrixPayload, MetricsPayload, OptimizeRequest,
                      OptimizeResponse, OptimizerLogRow, QuadraticSpec,
                      RunRequest, RunResponse, TopologyRequest,
                      TopologyResponse, VerifyRequest, VerifyResponse)
from .topology import (ReliabilityMatrix, generate_layout, reliability_cdf,
                       reliability_from_layout, threshold_graph)
from .training import initial_parameters, run_experiment


def _matrix(payload: MatrixPayload) -> np.ndarray:
    return matrix_from_obj({"n": payload.n, "data": payload.data})


def _matrix_payload(m: np.ndarray) -> MatrixPayload:
    return MatrixPayload(**matrix_to_obj(m))


def _array_payload(m: np.ndarray) -> Array2dPayload:
    return Array2dPayload(**array2d_to_obj(m))


def _optional(values: list[float]) -> list[float | None]:
    return [None if math.isnan(v) else v for v in values]


def _build_objectives(spec: QuadraticSpec | LogisticSpec | None, n: int):
    if spec is None:
        return None
    if isinstance(spec, QuadraticSpec):
        if spec.curvature_max < spec.curvature_min:
            raise ConfigurationError(
                "curvature_max must be >= curvature_min")
        return make_quadratic_objectives(
            n, spec.dim, seed=spec.seed,
            curvature_range=(spec.curvature_min, spec.curvature_max),
            optimum_spread=spec.optimum_spread, noise_std=spec.noise_std)
    return make_logistic_objectives(
        n, spec.dim, samples_per_device=spec.samples_per_device,
        seed=spec.seed, label_skew=spec.label_skew, reg=spec.reg,
        batch_size=spec.batch_size)


def create_app() -> FastAPI:
    app = FastAPI(title="softgossip", version=__version__)

    @app.exception_handler(NumericalError)
    async def numerical_error(request, exc):
        return JSONResponse(status_code=500,
                            content={"detail": str(exc),
                                     "kind": "numerical"})

    @app.exception_handler(SoftGossipError)
    async def domain_error(request, exc):
        return JSONResponse(status_code=400,
                            content={"detail": str(exc),
                                     "kind": "configuration"})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/topology/generate", response_model=TopologyResponse)
    def topology_generate(req: TopologyRequest):
        layout = generate_layout(req.devices, req.seed)
        rel = reliability_from_layout(layout, k=req.decay_base,
                                      r=req.decay_range)
        cdf = reliability_cdf(rel)
        return TopologyResponse(
            devices=req.devices, seed=req.seed, decay_base=req.decay_base,
            decay_range=req.decay_range,
            positions=_array_payload(layout.positions),
            reliability=_matrix_payload(rel.probs),
            cdf_values=[v for v, _ in cdf],
            cdf_fractions=[f for _, f in cdf])

    @app.post("/weights/optimize", response_model=OptimizeResponse)
    def weights_optimize(req: OptimizeRequest):
        rel = ReliabilityMatrix(_matrix(req.reliability))
        uniform = uniform_weights(rel.n)
        objective_uniform = mixing_objective(uniform, rel)
        log_rows: list[tuple[int, float, float, float]] = []
        if req.mode == "uniform":
            weights = uniform
            iterations = 0
        elif req.mode == "metropolis-hastings":
            graph = threshold_graph(rel, req.threshold)
            weights = metropolis_hastings_weights(graph)
            iterations = 0
        else:
            options = OptimizerOptions(
                max_iters=req.max_iters, step_init=req.step_init,
                step_decay=req.step_decay, tolerance=req.tolerance,
                patience=req.patience)
            result = optimize_weights(rel, options)
            weights = result.weights
            iterations = result.iterations
            log_rows = result.log_rows
        return OptimizeResponse(
            mode=req.mode, weights=_matrix_payload(weights.weights),
            objective=mixing_objective(weights, rel),
            objective_uniform=objective_uniform, iterations=iterations,
            drift_squared=drift_coeff(weights, rel, squared=True),
            drift_linear=drift_coeff(weights, rel, squared=False),
            log=[OptimizerLogRow(iter=i, objective=o, step_size=s,
                                 projection_residual=r)
                 for i, o, s, r in log_rows])

    @app.post("/experiments/run", response_model=RunResponse)
    def experiments_run(req: RunRequest):
        rel = ReliabilityMatrix(_matrix(req.reliability))
        weights = MixingMatrix(_matrix(req.weights))
        objectives = _build_objectives(req.objective, weights.n)
        if req.protocol != "consensus-only" and objectives is None:
            raise ConfigurationError(
                f"{req.protocol} requires an objective spec")
        dim = req.objective.dim if req.objective is not None else 2
        stream = RandomStream(req.seed)
        x0 = initial_parameters(weights.n, dim, stream, mode=req.init_mode,
                                scale=req.init_scale)
        graph = None
        if req.protocol == "tcp-baseline":
            graph = threshold_graph(rel, req.threshold)
        result = run_experiment(
            req.protocol, x0, objectives, weights, rel, req.iterations,
            stream, gamma=req.gamma, graph=graph,
            granularity=req.granularity, packet_size=req.packet_size,
            stop_loss=req.stop_loss)
        m = result.metrics
        return RunResponse(
            protocol=req.protocol, devices=weights.n, dim=dim,
            final_iteration=result.final_iteration,
            metrics=MetricsPayload(
                iter=m.iter, epoch=m.epoch,
                comm_rounds_cum=m.comm_rounds_cum,
                loss_mean_model=_optional(m.loss_mean_model),
                grad_norm_sq=_optional(m.grad_norm_sq),
                dispersion=m.dispersion),
            final_params=_array_payload(result.final_params))

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest):
        options = VerifyOptions(
            seed=req.seed, trials=req.trials,
            enumeration_instances=req.enumeration_instances,
            drift_instances=req.drift_instances,
            convexity_segments=req.convexity_segments,
            gradient_instances=req.gradient_instances,
            envelope_devices=req.envelope_devices,
            envelope_steps=req.envelope_steps,
            envelope_trials=req.envelope_trials)
        results = run_verification_suite(options)
        checks = [CheckPayload(**r.to_obj()) for r in results]
        return VerifyResponse(all_pass=all(c.passed for c in checks),
                              checks=checks)

    @app.post("/bound", response_model=BoundResponse)
    def bound(req: BoundRequest):
        from .analysis import ProblemConstants
        drift = req.drift
        contraction = req.contraction
        if drift is None or contraction is None:
            if req.reliability is None or req.weights is None:
                raise ConfigurationError(
                    "give drift and contraction, or reliability and "
                    "weights matrices to compute them from")
            rel = ReliabilityMatrix(_matrix(req.reliability))
            weights = MixingMatrix(_matrix(req.weights))
            if drift is None:
                drift = drift_coeff(weights, rel, squared=False)
            if contraction is None:
                contraction = contraction_rate(
                    effective_second_moment(weights, rel))
        constants = ProblemConstants(
            smoothness=req.smoothness, noise_variance=req.noise_variance,
            heterogeneity=req.heterogeneity, initial_gap=req.initial_gap)
        report = convergence_bound(constants, req.gamma, req.iterations,
                                   req.devices, drift, contraction)
        return BoundResponse(
            rhs=None if math.isinf(report.rhs) else report.rhs,
            feasible=bool(report.feasible), step_limit=report.step_limit,
            feedback=report.feedback, drift=drift, contraction=contraction)

    return app


app = create_app()
