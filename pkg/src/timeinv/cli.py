"""Command-line entry point: ``timeinv {density,check,simulate,verify}``.

Exit codes: 0 success or pass, 1 check failed, 2 usage or configuration
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from timeinv import inversion as inv
from timeinv import models as M
from timeinv import simulate as S
from timeinv import suites
from timeinv.errors import (ConfigError, DomainError, NumericFailure, PreconditionError,
                            TimeInvError)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CHECK_NAMES = ["homogeneity", "factorization", "htransform", "semistable", "euler",
               "h-invariance"]

SUITE_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SuiteReport",
    "type": "object",
    "required": ["suite", "config", "pass", "results"],
    "properties": {
        "suite": {"enum": ["analytic", "montecarlo", "all"]},
        "config": {"type": "object"},
        "timestamp": {"type": "string"},
        "pass": {"type": "boolean"},
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "pass", "statistic", "threshold", "relation"],
                "properties": {
                    "name": {"type": "string"},
                    "pass": {"type": "boolean"},
                    "statistic": {"type": ["number", "null"]},
                    "threshold": {"type": "number"},
                    "relation": {"enum": ["<=", ">"]},
                    "details": {"type": "object"},
                    "seconds": {"type": "number"},
                },
            },
        },
    },
    "additionalProperties": False,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# input parsing


def load_model_config(arg: str) -> dict:
    """A model config from a JSON file, or inline JSON starting with '{'."""
    text = arg
    if not arg.lstrip().startswith("{"):
        try:
            text = Path(arg).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read model config {arg!r}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model config is not valid JSON: {exc}") from None
    return doc


_IDENTITY = re.compile(r"^(-?)I(\d+)$")


def parse_state(text: str, model: M.ProcessModel) -> np.ndarray | float:
    """Number, JSON array (row-major nested for matrices) or identity shorthand 'I2'/'-I2'."""
    text = text.strip()
    hit = _IDENTITY.match(text)
    if hit:
        val = np.eye(int(hit.group(2))) * (-1.0 if hit.group(1) else 1.0)
    else:
        try:
            val = np.asarray(json.loads(text), dtype=float)
        except (json.JSONDecodeError, ValueError, TypeError):
            raise ConfigError(f"cannot parse state {text!r}") from None
    shape = model.state_shape
    if val.shape != shape:
        if val.size != (int(np.prod(shape)) if shape else 1):
            raise ConfigError(f"state {text!r} has shape {val.shape}, model expects {shape}")
        val = val.reshape(shape)
    return float(val) if not shape else val


def default_x0(model: M.ProcessModel):
    if model.is_matrix:
        return np.eye(model.state_shape[0])
    if model.state_shape:
        return np.linspace(1.0, 0.25, model.state_shape[0])
    return 1.0


def resolved_config(doc: dict, model: M.ProcessModel) -> dict:
    return {"model": model.name, "params": _jsonable(model.params), "input": doc}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(doc: dict, out: str | None) -> None:
    if out:
        Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_density(args) -> int:
    doc = load_model_config(args.model)
    model = M.model_from_config(doc)
    x, y = parse_state(args.x, model), parse_state(args.y, model)
    lp = float(model.log_density(args.t, x, y))
    out = {"config": resolved_config(doc, model), "t": args.t, "x": _jsonable(x),
           "y": _jsonable(y), "log_density": _jsonable(lp),
           "density": _jsonable(math.exp(lp) if lp < 709.78 else math.inf)}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def _load_grid(path: str | None, model):
    if path is None:
        return None
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {path!r}: {exc}") from None
    try:
        return inv.InversionGrid.from_dict(doc)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


def cmd_check(args) -> int:
    doc = load_model_config(args.model)
    model = M.model_from_config(doc)
    grid = _load_grid(args.grid, model)
    tol = args.tol if args.tol is not None else inv.DEFAULT_TOL[args.check]
    if tol <= 0:
        raise ConfigError("--tol must be positive")
    if args.check == "h-invariance":
        if args.against:
            other_doc = load_model_config(args.against)
            other = M.model_from_config(other_doc)
        elif model.base is not None:
            other, other_doc = model.base, {"model": model.base.name}
        else:
            raise ConfigError("h-invariance needs --against MODEL for a model that is not "
                              "declared as an h-transform")
        report = inv.check_h_invariance(model, other, grid, tol)
        config = {"model": resolved_config(doc, model),
                  "against": resolved_config(other_doc, other)}
    else:
        report = inv.CHECKS[args.check](model, grid, tol)
        config = resolved_config(doc, model)
    print(report.summary())
    body = report.to_dict()
    body["config"] = config
    _emit(body, args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_simulate(args) -> int:
    doc = load_model_config(args.model)
    model = M.model_from_config(doc)
    times = S.parse_grid_spec(args.grid)
    if args.paths < 1:
        raise ConfigError("--paths must be >= 1")
    x0 = parse_state(args.x0, model) if args.x0 is not None else default_x0(model)
    ens = S.simulate(model, x0, times, args.paths, args.seed, substeps=args.substeps)
    ens.params["config"] = resolved_config(doc, model)
    ens.write_csv(args.out)
    print(f"{ens.scheme}: {ens.n_paths} paths x {len(ens.times)} times -> {args.out}")
    for w in ens.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.paths < 10_000:
        raise ConfigError("--paths must be >= 10000")
    results = []
    if args.suite in ("analytic", "all"):
        results += suites.run_analytic()
    if args.suite in ("montecarlo", "all"):
        results += suites.run_montecarlo(args.paths, args.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    report = {"suite": args.suite, "config": {"paths": args.paths, "seed": args.seed},
              "pass": ok, "results": []}
    for r in results:
        d = _jsonable(r.to_dict())
        if args.no_timestamp:
            d.pop("seconds")
        report["results"].append(d)
    if not args.no_timestamp:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    _emit(report, args.out)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="timeinv", description="Time-inversion checks for Markov processes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("density", help="evaluate a transition density")
    d.add_argument("--model", required=True, help="model config (JSON file or inline)")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--x", required=True)
    d.add_argument("--y", required=True)
    d.set_defaults(func=cmd_density)

    c = sub.add_parser("check", help="run one time-inversion check on the standard grid")
    c.add_argument("--model", required=True)
    c.add_argument("--check", required=True, choices=CHECK_NAMES)
    c.add_argument("--grid", help="JSON grid override")
    c.add_argument("--tol", type=float)
    c.add_argument("--out")
    c.add_argument("--against", help="second model for h-invariance")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="simulate paths to CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--paths", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--grid", required=True, help="log:<min>:<max>:<count>")
    s.add_argument("--out", required=True)
    s.add_argument("--x0", help="starting state (default 1, ones-like or identity)")
    s.add_argument("--substeps", type=int, default=S.DEFAULT_SUBSTEPS)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run the verification battery")
    v.add_argument("--suite", required=True, choices=["analytic", "montecarlo", "all"])
    v.add_argument("--paths", type=int, default=50_000)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--out")
    v.add_argument("--no-timestamp", action="store_true",
                   help="omit timestamps and timings for byte-identical reports")
    v.set_defaults(func=cmd_verify)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TimeInvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
