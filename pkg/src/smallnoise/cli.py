"""Command line front end.

Subcommands: simulate, filter, density, rate, sweep, crosscheck, check-model.
A JSON config file (--config) supplies defaults; individual flags override
single values. Exit codes: 0 success, 2 config/schema problems, 3 numerical
failures, 4 I/O failures. Every failure writes one machine-readable JSON
object to stderr. Every output directory receives the resolved config that
produced it. --threads only parallelizes independent cells and never changes
output bytes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .density import DensityEstimate
from .errors import ConfigError, IOFailureError, SmallNoiseError
from .experiments import (
    SweepConfig,
    crosscheck_estimators,
    filter_tracking_experiment,
    run_sweep,
    write_crosscheck_csv,
)
from .filters import reverse_and_rescale, run_approximate_filter
from .models import BUILTIN_NAMES, builtin_model
from .pathdensity import reference_density
from .rate import RateTable, rate_function
from .sde import TimeGrid, simulate_pair

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "smallnoise run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string", "enum": list(BUILTIN_NAMES)},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "prior_mean": {"type": "number"},
                "prior_var": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "numeric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "eps_list": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "ds": {"type": "number", "exclusiveMinimum": 0},
                "dt_obs": {"type": "number", "exclusiveMinimum": 0},
                "n_paths": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "seeds": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 1,
                },
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min", "max", "n"],
                    "properties": {
                        "min": {"type": "number"},
                        "max": {"type": "number"},
                        "n": {"type": "integer", "minimum": 3},
                    },
                },
                "x_half_window": {"type": "number", "exclusiveMinimum": 0},
                "grid_points": {"type": "integer", "minimum": 3},
                "x": {"type": "number"},
                "x1": {"type": "number"},
                "z": {"type": "number"},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "method": {
                    "type": "string",
                    "enum": ["auto", "kalman", "grid-bayes", "picard-mc"],
                },
                "set_window": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "threads": {"type": "integer", "minimum": 1},
            },
        },
        "io": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"out": {"type": "string"}},
        },
    },
}

_NUMERIC_DEFAULTS = {
    "eps": 0.3,
    "dt": 1e-3,
    "ds": 1e-2,
    "n_paths": 20000,
    "seed": 0,
    "method": "auto",
    "threads": 1,
    "x_half_window": 1.0,
    "grid_points": 41,
    "T": 20.0,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(
            json.dumps({"error": {"type": "ArgumentError", "message": message}}) + "\n"
        )
        raise SystemExit(2)


def _build_parser() -> _Parser:
    p = _Parser(prog="smallnoise", description=__doc__)
    p.add_argument("--version", action="version", version=f"smallnoise {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (
        "simulate",
        "filter",
        "density",
        "rate",
        "sweep",
        "crosscheck",
        "check-model",
        "tracking",
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--model", type=str, default=None)
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--paths", type=int, default=None, dest="n_paths")
        sp.add_argument("--grid-min", type=float, default=None)
        sp.add_argument("--grid-max", type=float, default=None)
        sp.add_argument("--grid-n", type=int, default=None)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--c", type=float, default=None)
        sp.add_argument("--prior-mean", type=float, default=None)
        sp.add_argument("--prior-var", type=float, default=None)
        sp.add_argument("--dt", type=float, default=None)
        sp.add_argument("--ds", type=float, default=None)
        sp.add_argument("--dt-obs", type=float, default=None)
        sp.add_argument("--method", type=str, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--x", type=float, default=None)
        sp.add_argument("--x1", type=float, default=None)
        sp.add_argument("--z", type=float, default=None)
        sp.add_argument("--T", type=float, default=None)
        sp.add_argument("--eps-list", type=str, default=None)
        sp.add_argument("--seeds", type=str, default=None)
        sp.add_argument("--set-window", type=str, default=None)
        sp.add_argument("--x-half-window", type=float, default=None)
        sp.add_argument("--grid-points", type=int, default=None)
    return p


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailureError(f"cannot read config file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")


def _csv_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _csv_ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


def _merge(args) -> dict:
    cfg = _load_config(args.config)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}")
    model = dict(cfg.get("model", {}))
    numeric = dict(_NUMERIC_DEFAULTS)
    numeric.update(cfg.get("numeric", {}))
    io = dict(cfg.get("io", {}))

    if args.model is not None:
        model["name"] = args.model
    for k in ("alpha", "c", "prior_mean", "prior_var"):
        v = getattr(args, k)
        if v is not None:
            model[k] = v
    for k in (
        "eps", "seed", "n_paths", "dt", "ds", "dt_obs", "method", "threads",
        "x", "x1", "z", "T", "x_half_window", "grid_points",
    ):
        v = getattr(args, k)
        if v is not None:
            numeric[k] = v
    if args.eps_list is not None:
        numeric["eps_list"] = _csv_floats(args.eps_list)
    if args.seeds is not None:
        numeric["seeds"] = _csv_ints(args.seeds)
    if args.set_window is not None:
        sw = _csv_floats(args.set_window)
        if len(sw) != 2:
            raise ConfigError("--set-window needs exactly two numbers")
        numeric["set_window"] = sw
    if args.grid_min is not None or args.grid_max is not None or args.grid_n is not None:
        g = dict(numeric.get("grid", {}))
        if args.grid_min is not None:
            g["min"] = args.grid_min
        if args.grid_max is not None:
            g["max"] = args.grid_max
        if args.grid_n is not None:
            g["n"] = args.grid_n
        if set(g) != {"min", "max", "n"}:
            raise ConfigError("grid needs all of --grid-min, --grid-max, --grid-n")
        numeric["grid"] = g
    if args.out is not None:
        io["out"] = args.out

    model.setdefault("name", "linear-ou")
    resolved = {"model": model, "numeric": numeric, "io": io}
    jsonschema.validate(
        {
            "model": model,
            "numeric": {k: v for k, v in numeric.items() if k in
                        CONFIG_SCHEMA["properties"]["numeric"]["properties"]},
            "io": io,
        },
        CONFIG_SCHEMA,
    )
    return resolved


def _model_from(resolved):
    params = {k: v for k, v in resolved["model"].items() if k != "name"}
    return builtin_model(resolved["model"]["name"], **params)


def _out_dir(resolved, required=True):
    out = resolved["io"].get("out")
    if out is None:
        if required:
            raise ConfigError("an output directory is required (--out)")
        return None
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise IOFailureError(f"cannot create output directory {out}: {exc}")
    return out


def _write_json(path, obj) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IOFailureError(f"cannot write {path}: {exc}")


def _echo_config(out, resolved) -> None:
    # The echo records the scientific configuration only. Worker count never
    # changes output bytes and the destination is evident from file location,
    # so neither is included; reruns into any directory stay bit-identical.
    echo = {
        "model": dict(resolved["model"]),
        "numeric": {k: v for k, v in resolved["numeric"].items() if k != "threads"},
    }
    _write_json(os.path.join(out, "resolved_config.json"), echo)


def _grid_from(resolved, x1=None):
    num = resolved["numeric"]
    if "grid" in num:
        g = num["grid"]
        if not g["max"] > g["min"]:
            raise ConfigError(f"grid max must exceed min, got {g}")
        return np.linspace(g["min"], g["max"], g["n"])
    center = x1 if x1 is not None else 0.0
    return np.linspace(
        center - num["x_half_window"], center + num["x_half_window"], num["grid_points"]
    )


def _simulate(resolved):
    model = _model_from(resolved)
    num = resolved["numeric"]
    grid = TimeGrid(0.0, 1.0, int(round(1.0 / num["dt"])))
    x0 = model.draw_initial(num["seed"])
    X, Y = simulate_pair(model, num["eps"], grid, x0, num["seed"])
    return model, X, Y


def _cmd_simulate(resolved):
    out = _out_dir(resolved)
    model, X, Y = _simulate(resolved)
    X.to_csv(os.path.join(out, "X.csv"))
    Y.to_csv(os.path.join(out, "Y.csv"))
    _write_json(
        os.path.join(out, "metadata.json"),
        {
            "model": model.name,
            "eps": resolved["numeric"]["eps"],
            "seed": resolved["numeric"]["seed"],
            "dt": resolved["numeric"]["dt"],
            "x0": float(X.values[0]),
            "x1": X.terminal,
        },
    )
    _echo_config(out, resolved)
    return 0


def _cmd_filter(resolved):
    out = _out_dir(resolved)
    model, X, Y = _simulate(resolved)
    num = resolved["numeric"]
    F = run_approximate_filter(Y, model, num["eps"])
    R = reverse_and_rescale(F, ds=num["ds"])
    with open(os.path.join(out, "M.csv"), "w", newline="") as fh:
        fh.write("t,value\n")
        for t, v in zip(F.grid.times(), F.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
    with open(os.path.join(out, "m_tilde.csv"), "w", newline="") as fh:
        fh.write("s,value\n")
        for s, v in zip(R.s_grid, R.values):
            fh.write(f"{float(s)!r},{float(v)!r}\n")
    _write_json(
        os.path.join(out, "metadata.json"),
        {
            "model": model.name,
            "eps": num["eps"],
            "seed": num["seed"],
            "dt": num["dt"],
            "ds_effective": R.ds,
            "x1": X.terminal,
            "filter_terminal": F.terminal,
        },
    )
    _echo_config(out, resolved)
    return 0


def _cmd_density(resolved):
    out = _out_dir(resolved)
    model, X, Y = _simulate(resolved)
    num = resolved["numeric"]
    xgrid = _grid_from(resolved, x1=X.terminal)
    est = reference_density(
        model,
        num["eps"],
        Y,
        xgrid,
        method=num["method"],
        ds=num["ds"],
        n_paths=num["n_paths"],
        seed=num["seed"],
        dt_obs=num.get("dt_obs"),
    )
    est.to_csv(os.path.join(out, "density.csv"))
    meta = {
        "model": model.name,
        "eps": num["eps"],
        "seed": num["seed"],
        "method": est.method,
        "x1": X.terminal,
    }
    meta.update(
        {k: v for k, v in est.metadata.items() if isinstance(v, (int, float, bool, str, list))}
    )
    _write_json(os.path.join(out, "metadata.json"), meta)
    _echo_config(out, resolved)
    return 0


def _cmd_rate(resolved):
    model = _model_from(resolved)
    num = resolved["numeric"]
    if "x1" not in num:
        raise ConfigError("rate needs --x1 (anchor point)")
    x1 = num["x1"]
    if "x" in num:
        j = float(rate_function(num["x"], x1, model))
        sys.stdout.write(f"J({num['x']:g}, {x1:g}) = {j:.6f}\n")
    out = _out_dir(resolved, required=False)
    if out is not None:
        xgrid = _grid_from(resolved, x1=x1)
        table = RateTable.build(model, x1, xgrid)
        table.check_invariants(model.h0)
        table.to_csv(os.path.join(out, "rate.csv"))
        _echo_config(out, resolved)
    elif "x" not in num:
        raise ConfigError("rate needs --x (point evaluation) or --out (table)")
    return 0


def _cmd_sweep(resolved):
    out = _out_dir(resolved)
    num = resolved["numeric"]
    if "eps_list" not in num or "seeds" not in num:
        raise ConfigError("sweep needs eps_list and seeds")
    params = {k: v for k, v in resolved["model"].items() if k != "name"}
    cfg = SweepConfig(
        model_name=resolved["model"]["name"],
        model_params=params,
        eps_list=num["eps_list"],
        seeds=num["seeds"],
        x_half_window=num["x_half_window"],
        grid_points=num["grid_points"],
        method=num["method"],
        dt=num["dt"],
        ds=num["ds"],
        n_paths=num["n_paths"],
        set_window=tuple(num["set_window"]) if "set_window" in num else None,
        threads=num["threads"],
    )
    report = run_sweep(cfg)
    report.write(out)
    _echo_config(out, resolved)
    return 0


def _cmd_crosscheck(resolved):
    out = _out_dir(resolved)
    num = resolved["numeric"]
    params = {k: v for k, v in resolved["model"].items() if k != "name"}
    result = crosscheck_estimators(
        resolved["model"]["name"],
        num["eps"],
        num["seed"],
        model_params=params,
        dt=num["dt"],
        ds=num["ds"],
        n_paths=num["n_paths"],
        x_half_window=num["x_half_window"],
        grid_points=num["grid_points"],
    )
    write_crosscheck_csv(result, os.path.join(out, "crosscheck.csv"))
    _write_json(os.path.join(out, "crosscheck.json"), result)
    _echo_config(out, resolved)
    return 0


def _cmd_check_model(resolved):
    model = _model_from(resolved)
    from .models import check_assumptions

    report = check_assumptions(model)
    out = _out_dir(resolved, required=False)
    payload = report.to_json()
    if out is not None:
        _write_json(os.path.join(out, "assumptions.json"), payload)
        _echo_config(out, resolved)
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_tracking(resolved):
    out = _out_dir(resolved)
    num = resolved["numeric"]
    if "eps_list" not in num or "seeds" not in num:
        raise ConfigError("tracking needs eps_list and seeds")
    params = {k: v for k, v in resolved["model"].items() if k != "name"}
    stats = filter_tracking_experiment(
        resolved["model"]["name"],
        num["eps_list"],
        num["seeds"],
        model_params=params,
        dt=num["dt"],
        ds=num["ds"],
    )
    stats.save(os.path.join(out, "tracking.json"))
    _echo_config(out, resolved)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "filter": _cmd_filter,
    "density": _cmd_density,
    "rate": _cmd_rate,
    "sweep": _cmd_sweep,
    "crosscheck": _cmd_crosscheck,
    "check-model": _cmd_check_model,
    "tracking": _cmd_tracking,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        resolved = _merge(args)
        return _COMMANDS[args.command](resolved)
    except SmallNoiseError as exc:
        sys.stderr.write(json.dumps({"error": exc.payload()}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(
            json.dumps({"error": {"type": "OSError", "message": str(exc)}}) + "\n"
        )
        return 4


if __name__ == "__main__":
    sys.exit(main())
