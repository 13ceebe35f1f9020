"""Command-line client for the service.

Every subcommand builds a request, posts it to the service, and writes
the response to files; with no --server it mounts the app in-process, so
no network or daemon is involved.  All file output goes through atomic
writes with round-trip float formatting, making repeat runs with the same
arguments byte-identical.

Exit codes: 0 success, 1 a verification check failed, 2 bad
configuration or arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import math
import os
import sys

import httpx
import numpy as np

from . import __version__
from .errors import (ArgumentError, CheckFailure, ConfigurationError,
                     NumericalError, SoftGossipError)
from .matio import (atomic_write_text, dump_json, format_float,
                    matrix_from_csv, matrix_to_csv, matrix_to_obj,
                    table_to_csv)

METRICS_HEADER = ("iter", "epoch", "comm_rounds_cum", "loss_mean_model",
                  "grad_norm_sq", "dispersion")


class ServiceClient:
    """Posts requests either to a remote server or the in-process app."""

    def __init__(self, server: str | None):
        self._server = server
        if server is None:
            from .service import create_app
            self._app = create_app()

    def post(self, path: str, payload: dict) -> dict:
        if self._server is None:
            return asyncio.run(self._post_in_process(path, payload))
        try:
            with httpx.Client(base_url=self._server,
                              timeout=httpx.Timeout(600.0)) as client:
                resp = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise ConfigurationError(
                f"cannot reach server {self._server}: {exc}") from exc
        return _handle_response(resp)

    async def _post_in_process(self, path: str, payload: dict) -> dict:
        transport = httpx.ASGITransport(app=self._app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://service.local",
                                     timeout=None) as client:
            resp = await client.post(path, json=payload)
        return _handle_response(resp)


def _handle_response(resp: httpx.Response) -> dict:
    if resp.status_code == 200:
        return resp.json()
    try:
        body = resp.json()
    except ValueError:
        raise ConfigurationError(
            f"server returned status {resp.status_code}") from None
    detail = body.get("detail", "request failed")
    if body.get("kind") == "numerical":
        raise NumericalError(str(detail))
    if resp.status_code == 422:
        raise ConfigurationError(f"invalid request: {_format_422(detail)}")
    raise ConfigurationError(str(detail))


def _format_422(detail) -> str:
    if not isinstance(detail, list):
        return str(detail)
    parts = []
    for item in detail:
        loc = ".".join(str(x) for x in item.get("loc", []) if x != "body")
        parts.append(f"{loc}: {item.get('msg', 'invalid')}")
    return "; ".join(parts) or "invalid request"


def _read_matrix(path: str):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return matrix_from_csv(text)


def _matrix_payload(path: str) -> dict:
    return matrix_to_obj(_read_matrix(path))


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    atomic_write_text(path, text)
    return path


def _nan_for_none(values: list) -> list[float]:
    return [float("nan") if v is None else float(v) for v in values]


# defaults per subcommand; config files and flags override these
GENERATE_DEFAULTS = {"seed": 0, "decay_base": 0.7, "decay_range": 0.4,
                     "out": "."}
OPTIMIZE_DEFAULTS = {"mode": "optimized", "threshold": 0.0, "max_iters": 300,
                     "step_init": 0.1, "step_decay": "sqrt",
                     "tolerance": 1e-7, "patience": 50, "out": "."}
RUN_DEFAULTS = {"weight_mode": "file", "weights": None, "seed": 0,
                "gamma": 0.0, "objective": "none", "dim": 2,
                "objective_seed": 0, "curvature_min": 1.0,
                "curvature_max": 4.0, "optimum_spread": 1.0,
                "noise_std": 0.0, "samples_per_device": 32,
                "label_skew": 0.0, "reg": 1e-2, "batch_size": None,
                "init_mode": "same", "init_scale": 1.0,
                "granularity": "per-dimension", "packet_size": 1,
                "threshold": 0.0, "stop_loss": None, "out": "."}
VERIFY_DEFAULTS = {"seed": 0, "trials": 10000, "enumeration_instances": 50,
                   "drift_instances": 1000, "convexity_segments": 100,
                   "gradient_instances": 20, "envelope_devices": 8,
                   "envelope_steps": 50, "envelope_trials": 2000, "out": "."}
BOUND_DEFAULTS = {"noise_variance": 0.0, "heterogeneity": 0.0,
                  "initial_gap": 0.0, "drift": None, "contraction": None,
                  "reliability": None, "weights": None, "out": "."}
SERVE_DEFAULTS = {"host": "127.0.0.1", "port": 8000}

REQUIRED = {
    "generate": ("devices",),
    "optimize-weights": ("reliability",),
    "run": ("protocol", "reliability", "iterations"),
    "verify": (),
    "bound": ("gamma", "iterations", "devices", "smoothness"),
    "serve": (),
}


def _merge_options(command: str, defaults: dict, args: argparse.Namespace
                   ) -> dict:
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as handle:
                config = json.load(handle)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(
                f"cannot load config {config_path}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigurationError("config file must hold a JSON object")
        known = set(defaults) | set(REQUIRED[command])
        unknown = sorted(set(config) - known)
        if unknown:
            raise ConfigurationError(
                f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(config)
    for key, value in vars(args).items():
        if key in ("func", "config", "server", "command", "defaults"):
            continue
        merged[key] = value
    missing = [key for key in REQUIRED[command] if merged.get(key) is None]
    if missing:
        raise ConfigurationError(
            f"{command} needs: {', '.join('--' + k.replace('_', '-') for k in missing)}")
    return merged


def cmd_generate(client: ServiceClient, opts: dict) -> int:
    body = client.post("/topology/generate", {
        "devices": opts["devices"], "seed": opts["seed"],
        "decay_base": opts["decay_base"],
        "decay_range": opts["decay_range"]})
    out = opts["out"]
    layout = {"version": 1, "devices": body["devices"], "seed": body["seed"],
              "decay_base": body["decay_base"],
              "decay_range": body["decay_range"],
              "positions": body["positions"]}
    _write(out, "layout.json", dump_json(layout))
    rel = np.array(body["reliability"]["data"]).reshape(
        body["reliability"]["n"], body["reliability"]["n"])
    _write(out, "reliability.csv", matrix_to_csv(rel))
    _write(out, "reliability_cdf.csv", table_to_csv([
        ("value", body["cdf_values"]),
        ("fraction", body["cdf_fractions"])]))
    print(f"wrote layout.json, reliability.csv, reliability_cdf.csv "
          f"to {out} ({body['devices']} devices)")
    return 0


def cmd_optimize_weights(client: ServiceClient, opts: dict) -> int:
    body = client.post("/weights/optimize", {
        "reliability": _matrix_payload(opts["reliability"]),
        "mode": opts["mode"], "threshold": opts["threshold"],
        "max_iters": opts["max_iters"], "step_init": opts["step_init"],
        "step_decay": opts["step_decay"], "tolerance": opts["tolerance"],
        "patience": opts["patience"]})
    out = opts["out"]
    w = np.array(body["weights"]["data"]).reshape(body["weights"]["n"],
                                                  body["weights"]["n"])
    _write(out, "weights.csv", matrix_to_csv(w))
    summary = {"version": 1, "mode": body["mode"],
               "objective": body["objective"],
               "objective_uniform": body["objective_uniform"],
               "iterations": body["iterations"],
               "drift_squared": body["drift_squared"],
               "drift_linear": body["drift_linear"]}
    _write(out, "weights_summary.json", dump_json(summary))
    log = body["log"]
    _write(out, "optimizer_log.csv", table_to_csv([
        ("iter", [row["iter"] for row in log]),
        ("objective", [row["objective"] for row in log]),
        ("step_size", [row["step_size"] for row in log]),
        ("projection_residual",
         [row["projection_residual"] for row in log])]))
    print(f"wrote weights.csv, weights_summary.json, optimizer_log.csv "
          f"to {out} (mode={body['mode']}, "
          f"objective={format_float(body['objective'])}, "
          f"uniform={format_float(body['objective_uniform'])})")
    return 0


def _resolve_weights(client: ServiceClient, opts: dict,
                     reliability: dict) -> dict:
    mode = opts["weight_mode"]
    if mode == "file":
        if opts["weights"] is None:
            raise ConfigurationError(
                "run needs --weights when --weight-mode is file")
        return matrix_to_obj(_read_matrix(opts["weights"]))
    if mode not in ("uniform", "metropolis-hastings", "optimized"):
        raise ConfigurationError(f"unknown weight mode {mode!r}")
    body = client.post("/weights/optimize", {
        "reliability": reliability, "mode": mode,
        "threshold": opts["threshold"]})
    return body["weights"]


def _objective_spec(opts: dict) -> dict | None:
    kind = opts["objective"]
    if kind == "none":
        return None
    if kind == "quadratic":
        return {"kind": "quadratic", "dim": opts["dim"],
                "seed": opts["objective_seed"],
                "curvature_min": opts["curvature_min"],
                "curvature_max": opts["curvature_max"],
                "optimum_spread": opts["optimum_spread"],
                "noise_std": opts["noise_std"]}
    if kind == "logistic":
        return {"kind": "logistic", "dim": opts["dim"],
                "seed": opts["objective_seed"],
                "samples_per_device": opts["samples_per_device"],
                "label_skew": opts["label_skew"], "reg": opts["reg"],
                "batch_size": opts["batch_size"]}
    raise ConfigurationError(f"unknown objective kind {kind!r}")


def cmd_run(client: ServiceClient, opts: dict) -> int:
    reliability = _matrix_payload(opts["reliability"])
    weights = _resolve_weights(client, opts, reliability)
    body = client.post("/experiments/run", {
        "protocol": opts["protocol"], "reliability": reliability,
        "weights": weights, "iterations": opts["iterations"],
        "seed": opts["seed"], "gamma": opts["gamma"],
        "objective": _objective_spec(opts),
        "init_mode": opts["init_mode"], "init_scale": opts["init_scale"],
        "granularity": opts["granularity"],
        "packet_size": opts["packet_size"],
        "threshold": opts["threshold"], "stop_loss": opts["stop_loss"]})
    out = opts["out"]
    metrics = body["metrics"]
    _write(out, "metrics.csv", table_to_csv([
        ("iter", metrics["iter"]),
        ("epoch", [float(v) for v in metrics["epoch"]]),
        ("comm_rounds_cum", metrics["comm_rounds_cum"]),
        ("loss_mean_model", _nan_for_none(metrics["loss_mean_model"])),
        ("grad_norm_sq", _nan_for_none(metrics["grad_norm_sq"])),
        ("dispersion", [float(v) for v in metrics["dispersion"]])]))
    final = {"version": 1, "protocol": body["protocol"],
             "devices": body["devices"], "dim": body["dim"],
             "final_iteration": body["final_iteration"],
             "params": body["final_params"]}
    _write(out, "final_params.json", dump_json(final))
    last_loss = metrics["loss_mean_model"][-1]
    loss_text = "nan" if last_loss is None else format_float(last_loss)
    print(f"wrote metrics.csv, final_params.json to {out} "
          f"(protocol={body['protocol']}, "
          f"iterations={body['final_iteration']}, "
          f"rounds={metrics['comm_rounds_cum'][-1]}, "
          f"final_loss={loss_text}, "
          f"final_dispersion={format_float(metrics['dispersion'][-1])})")
    return 0


def cmd_verify(client: ServiceClient, opts: dict) -> int:
    body = client.post("/verify", {
        "seed": opts["seed"], "trials": opts["trials"],
        "enumeration_instances": opts["enumeration_instances"],
        "drift_instances": opts["drift_instances"],
        "convexity_segments": opts["convexity_segments"],
        "gradient_instances": opts["gradient_instances"],
        "envelope_devices": opts["envelope_devices"],
        "envelope_steps": opts["envelope_steps"],
        "envelope_trials": opts["envelope_trials"]})
    report = {"version": 1, "all_pass": body["all_pass"],
              "checks": body["checks"]}
    _write(opts["out"], "report.json", dump_json(report))
    for check in body["checks"]:
        status = "PASS" if check["pass"] else "FAIL"
        print(f"[{status}] {check['name']}: "
              f"observed={format_float(check['observed'])} "
              f"threshold={format_float(check['threshold'])}")
    failed = [c["name"] for c in body["checks"] if not c["pass"]]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        raise CheckFailure(f"verification failed: {', '.join(failed)}")
    print(f"all {len(body['checks'])} checks passed; "
          f"report.json written to {opts['out']}")
    return 0


def cmd_bound(client: ServiceClient, opts: dict) -> int:
    payload = {"gamma": opts["gamma"], "iterations": opts["iterations"],
               "devices": opts["devices"],
               "smoothness": opts["smoothness"],
               "noise_variance": opts["noise_variance"],
               "heterogeneity": opts["heterogeneity"],
               "initial_gap": opts["initial_gap"]}
    if opts["drift"] is not None:
        payload["drift"] = opts["drift"]
    if opts["contraction"] is not None:
        payload["contraction"] = opts["contraction"]
    if opts["reliability"] is not None:
        payload["reliability"] = _matrix_payload(opts["reliability"])
    if opts["weights"] is not None:
        payload["weights"] = _matrix_payload(opts["weights"])
    body = client.post("/bound", payload)
    record = {"version": 1, "gamma": opts["gamma"],
              "iterations": opts["iterations"], "devices": opts["devices"],
              "smoothness": opts["smoothness"],
              "noise_variance": opts["noise_variance"],
              "heterogeneity": opts["heterogeneity"],
              "initial_gap": opts["initial_gap"], "drift": body["drift"],
              "contraction": body["contraction"], "rhs": body["rhs"],
              "feasible": body["feasible"],
              "step_limit": body["step_limit"],
              "feedback": body["feedback"]}
    _write(opts["out"], "bound.json", dump_json(record))
    rhs_text = ("no finite bound" if body["rhs"] is None
                else format_float(body["rhs"]))
    print(f"wrote bound.json to {opts['out']} (rhs={rhs_text}, "
          f"feasible={body['feasible']}, "
          f"step_limit={format_float(body['step_limit'])})")
    return 0


def cmd_serve(opts: dict) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=opts["host"], port=opts["port"])
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default runs "
                             "the service in-process")
    parser.add_argument("--config", default=None,
                        help="JSON file of option defaults (flags override)")
    parser.add_argument("--out", default=argparse.SUPPRESS,
                        help="directory for output files (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softgossip",
        description="decentralized SGD over lossy links: topology and "
                    "mixing-weight tools, experiment runner, verification "
                    "suite, and convergence bound")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("generate",
                       help="sample device positions and link reliabilities")
    _add_common(p)
    p.add_argument("--devices", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--decay-base", dest="decay_base", type=float, default=S,
                   help="reliability at the reference distance")
    p.add_argument("--decay-range", dest="decay_range", type=float,
                   default=S, help="reference distance of the decay")
    p.set_defaults(func=cmd_generate, defaults=GENERATE_DEFAULTS)

    p = sub.add_parser("optimize-weights",
                       help="compute mixing weights for a reliability matrix")
    _add_common(p)
    p.add_argument("--reliability", default=S,
                   help="reliability matrix CSV (from generate)")
    p.add_argument("--mode", choices=("uniform", "metropolis-hastings",
                                      "optimized"), default=S)
    p.add_argument("--threshold", type=float, default=S,
                   help="edge threshold for metropolis-hastings")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    p.add_argument("--step-init", dest="step_init", type=float, default=S)
    p.add_argument("--step-decay", dest="step_decay",
                   choices=("sqrt", "constant"), default=S)
    p.add_argument("--tolerance", type=float, default=S)
    p.add_argument("--patience", type=int, default=S)
    p.set_defaults(func=cmd_optimize_weights, defaults=OPTIMIZE_DEFAULTS)

    p = sub.add_parser("run", help="run a training or consensus experiment")
    _add_common(p)
    p.add_argument("--protocol", choices=("soft-udp", "tcp-baseline",
                                          "consensus-only"), default=S)
    p.add_argument("--reliability", default=S)
    p.add_argument("--weight-mode", dest="weight_mode",
                   choices=("uniform", "metropolis-hastings", "optimized",
                            "file"), default=S)
    p.add_argument("--weights", default=S,
                   help="weights CSV, used when --weight-mode is file")
    p.add_argument("--iterations", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--gamma", type=float, default=S, help="step size")
    p.add_argument("--objective", choices=("quadratic", "logistic", "none"),
                   default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--objective-seed", dest="objective_seed", type=int,
                   default=S)
    p.add_argument("--curvature-min", dest="curvature_min", type=float,
                   default=S)
    p.add_argument("--curvature-max", dest="curvature_max", type=float,
                   default=S)
    p.add_argument("--optimum-spread", dest="optimum_spread", type=float,
                   default=S)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=S)
    p.add_argument("--samples-per-device", dest="samples_per_device",
                   type=int, default=S)
    p.add_argument("--label-skew", dest="label_skew", type=float, default=S)
    p.add_argument("--reg", type=float, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--init-mode", dest="init_mode",
                   choices=("same", "spread"), default=S)
    p.add_argument("--init-scale", dest="init_scale", type=float, default=S)
    p.add_argument("--granularity", choices=("per-dimension", "packet"),
                   default=S)
    p.add_argument("--packet-size", dest="packet_size", type=int, default=S)
    p.add_argument("--threshold", type=float, default=S,
                   help="edge threshold for the tcp-baseline graph and "
                        "metropolis-hastings weights")
    p.add_argument("--stop-loss", dest="stop_loss", type=float, default=S,
                   help="stop once the mean-model loss reaches this value")
    p.set_defaults(func=cmd_run, defaults=RUN_DEFAULTS)

    p = sub.add_parser("verify", help="run the verification suite")
    _add_common(p)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--enumeration-instances", dest="enumeration_instances",
                   type=int, default=S)
    p.add_argument("--drift-instances", dest="drift_instances", type=int,
                   default=S)
    p.add_argument("--convexity-segments", dest="convexity_segments",
                   type=int, default=S)
    p.add_argument("--gradient-instances", dest="gradient_instances",
                   type=int, default=S)
    p.add_argument("--envelope-devices", dest="envelope_devices", type=int,
                   default=S)
    p.add_argument("--envelope-steps", dest="envelope_steps", type=int,
                   default=S)
    p.add_argument("--envelope-trials", dest="envelope_trials", type=int,
                   default=S)
    p.set_defaults(func=cmd_verify, defaults=VERIFY_DEFAULTS)

    p = sub.add_parser("bound",
                       help="evaluate the convergence bound for a setup")
    _add_common(p)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--iterations", type=int, default=S)
    p.add_argument("--devices", type=int, default=S)
    p.add_argument("--smoothness", type=float, default=S)
    p.add_argument("--noise-variance", dest="noise_variance", type=float,
                   default=S)
    p.add_argument("--heterogeneity", type=float, default=S)
    p.add_argument("--initial-gap", dest="initial_gap", type=float,
                   default=S)
    p.add_argument("--drift", type=float, default=S)
    p.add_argument("--contraction", type=float, default=S)
    p.add_argument("--reliability", default=S,
                   help="reliability CSV; with --weights, computes drift "
                        "and contraction")
    p.add_argument("--weights", default=S, help="weights CSV")
    p.set_defaults(func=cmd_bound, defaults=BOUND_DEFAULTS)

    p = sub.add_parser("serve", help="start the service with uvicorn")
    p.add_argument("--host", default=S)
    p.add_argument("--port", type=int, default=S)
    p.set_defaults(func=cmd_serve, defaults=SERVE_DEFAULTS)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge_options(args.command, args.defaults, args)
        if args.func is cmd_serve:
            return cmd_serve(opts)
        client = ServiceClient(getattr(args, "server", None))
        return args.func(client, opts)
    except CheckFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SoftGossipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
