"""Batch driver: validate -> family -> profile -> dispersion -> evans sweep -> zero count.

Each subcommand runs the pipeline up to its own stage.  All stages are
deterministic functions of the config and seed, so an interrupted run is
resumed by re-running the later subcommand against the same config.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import model as models
from .errors import ConfigError, EvansflowError, PreconditionError
from .evans import (
    DEFAULT_R,
    DEFAULT_R0,
    DEFAULT_R1,
    count_zeros_halfplane,
    evaluate_nodes,
    halfplane_contour,
    write_sweep_csv,
    write_zero_count_json,
)
from .model import ModelSpec, load_model, normalize_model, validate_assumptions
from .profile import ShockContext, write_profile_csv
from .shock import build_shock_family, write_family_csv
from .spectral import dispersion_margin, write_dispersion_csv

log = logging.getLogger("evansflow")

STAGES = ("validate", "family", "profile", "dispersion", "evans-sweep", "zero-count")
EXIT_STABLE, EXIT_UNSTABLE, EXIT_PRECONDITION = 0, 1, 2
BUILTINS = {
    "hyperbolic_burgers": models.hyperbolic_burgers,
    "decoupled_pair": models.decoupled_pair,
    "coupled_pair": models.coupled_pair,
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    eps: list
    out_dir: Path
    r0: float = DEFAULT_R0
    r1: float = DEFAULT_R1
    R: float = DEFAULT_R
    delta: Optional[float] = None
    arc_nodes: int = 64
    axis_per_decade: int = 12
    indent_nodes: int = 24
    profile_tol: float = 1e-10
    seed: int = 0
    workers: int = 1
    model_source: str = ""

    def __post_init__(self):
        self.eps = sorted(float(e) for e in self.eps)
        for name in ("r0", "r1", "R", "profile_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.delta is not None and not 0 < self.delta < self.R:
            raise ConfigError("delta must lie in (0, R)")
        if min(self.arc_nodes, self.axis_per_decade, self.indent_nodes) < 4:
            raise ConfigError("contour resolution too coarse")
        if any(not 0 < e <= self.model.delta for e in self.eps):
            raise ConfigError(f"eps values must lie in (0, {self.model.delta}]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        self.out_dir = Path(self.out_dir)


def _resolve_model(entry, base: Path) -> tuple[ModelSpec, str]:
    if isinstance(entry, dict):
        if "builtin" in entry:
            name = entry["builtin"]
            if name not in BUILTINS:
                raise ConfigError(f"unknown builtin model {name!r}")
            return BUILTINS[name](**entry.get("args", {})), f"builtin:{name}"
        return ModelSpec.from_config(entry), "inline"
    if isinstance(entry, str):
        if entry.startswith("builtin:"):
            return _resolve_model({"builtin": entry.split(":", 1)[1]}, base)
        path = Path(entry)
        if not path.is_absolute():
            path = base / path
        return load_model(path), str(entry)
    raise ConfigError("model must be a path, 'builtin:<name>' or an inline config")


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, path.parent, overrides)


def config_from_dict(raw: dict, base: Path = Path("."), overrides: Optional[dict] = None
                     ) -> ExperimentConfig:
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "model" not in raw:
        raise ConfigError("config needs a 'model' entry")
    model, source = _resolve_model(raw["model"], Path(base))
    contour = raw.get("contour", {})
    tol = raw.get("tolerances", {})
    try:
        return ExperimentConfig(
            model=model, eps=list(raw.get("eps", [])), out_dir=Path(raw.get("out", "out")),
            r0=float(raw.get("r0", DEFAULT_R0)), r1=float(raw.get("r1", DEFAULT_R1)),
            R=float(raw.get("R", DEFAULT_R)),
            delta=None if raw.get("delta") is None else float(raw["delta"]),
            arc_nodes=int(contour.get("arc_nodes", 64)),
            axis_per_decade=int(contour.get("axis_per_decade", 12)),
            indent_nodes=int(contour.get("indent_nodes", 24)),
            profile_tol=float(tol.get("profile", 1e-10)), seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)), model_source=source)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


@dataclass
class RunReport:
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    verdict: str = "inconclusive"
    exit_code: int = EXIT_UNSTABLE

    def as_dict(self, include_timings: bool = False) -> dict:
        out = {"stages": self.stages, "scalars": self.scalars, "files": sorted(self.files),
               "verdict": self.verdict, "exit_code": self.exit_code}
        if include_timings:
            out["timings"] = self.timings
        return out


def _plain(obj):
    """Recursively convert numpy / complex values into JSON-friendly objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _plain(float(obj.real)), "im": _plain(float(obj.imag))}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _dump(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_dump(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + _dump(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(repr(obj))
        return format(obj, ".17g") if obj != int(obj) or abs(obj) >= 1e17 else f"{obj:.1f}"
    return json.dumps(obj)


def emit_report(report: RunReport, format: str = "json", include_timings: bool = False) -> str:
    """Deterministic serialization: sorted keys, floats with 17 significant digits."""
    data = _plain(report.as_dict(include_timings))
    if format == "json":
        return _dump(data) + "\n"
    if format != "text":
        raise ConfigError(f"unknown report format {format!r}")
    lines = [f"{'stage':<14} status"]
    for name in STAGES:
        if name in data["stages"]:
            lines.append(f"{name:<14} {data['stages'][name]}")
    for key in sorted(data["scalars"]):
        lines.append(f"{key} = {json.dumps(data['scalars'][key], sort_keys=True)}")
    lines.append(f"verdict: {data['verdict']} (exit {data['exit_code']})")
    return "\n".join(lines) + "\n"


def _tag(eps: float) -> str:
    return f"{eps:.6g}".replace(".", "p")


def run_experiment(config: ExperimentConfig, stop_after: str = "zero-count") -> RunReport:
    if stop_after not in STAGES:
        raise ConfigError(f"unknown stage {stop_after!r}")
    last = STAGES.index(stop_after)
    report = RunReport()
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    state = {}

    def stage_validate():
        rep = validate_assumptions(config.model, seed=config.seed)
        report.scalars["assumptions"] = rep.flags
        report.scalars["gnl_value"] = rep.gnl_value
        path = out / "validate.json"
        path.write_text(_dump(_plain({"flags": rep.flags, "margins": rep.margins,
                                      "gnl_value": rep.gnl_value, "a": rep.a_value,
                                      "gamma0": rep.gamma0})) + "\n")
        report.files.append(path.name)
        if not rep.passed:
            failed = sorted(k for k, ok in rep.flags.items() if not ok)
            raise PreconditionError(f"assumptions violated: {', '.join(failed)}")
        state["model"] = normalize_model(config.model)[0]

    def stage_family():
        fam = build_shock_family(state["model"], config.eps)
        state["family"] = fam
        state["contexts"] = {e: ShockContext(state["model"], e, fam) for e in config.eps}
        report.scalars["shock_speeds"] = {_tag(e): s for e, s in zip(config.eps, fam.s_of_eps)}
        path = write_family_csv(fam, out / "family.csv")
        report.files.append(path.name)

    def stage_profile():
        for e, ctx in state["contexts"].items():
            grid = ctx.profile(tol=config.profile_tol)
            path = write_profile_csv(grid, out / f"profile_eps{_tag(e)}.csv")
            report.files.append(path.name)

    def stage_dispersion():
        nus = {}
        for e, ctx in state["contexts"].items():
            rep = dispersion_margin(ctx, e, R=config.R)
            if not (rep.minus.sk1 and rep.minus.sk2 and rep.plus.sk1 and rep.plus.sk2
                    and rep.boundary_consistent):
                raise EvansflowError(f"eps={e}: dispersion checks failed")
            nus[_tag(e)] = rep.nu
            path = write_dispersion_csv(rep, out / f"dispersion_eps{_tag(e)}.csv")
            report.files.append(path.name)
        report.scalars["nu"] = nus

    def _delta(e):
        return config.delta if config.delta is not None else 1e-3 * e * e

    def stage_sweep():
        for e, ctx in state["contexts"].items():
            contour = halfplane_contour(_delta(e), config.R, config.arc_nodes,
                                        config.axis_per_decade, config.indent_nodes)
            samples = evaluate_nodes(ctx, ctx.profile(tol=config.profile_tol), contour.nodes,
                                     "standard", config.workers, r0=config.r0, r1=config.r1)
            path = write_sweep_csv(samples, out / f"sweep_eps{_tag(e)}.csv")
            report.files.append(path.name)

    def stage_zero_count():
        summary = {}
        for e, ctx in state["contexts"].items():
            rep = count_zeros_halfplane(ctx, ctx.profile(tol=config.profile_tol), e, config.R,
                                        _delta(e), arc_nodes=config.arc_nodes,
                                        axis_per_decade=config.axis_per_decade,
                                        indent_nodes=config.indent_nodes, workers=config.workers,
                                        r0=config.r0, r1=config.r1)
            path = write_zero_count_json(rep, out / f"zero_count_eps{_tag(e)}.json")
            report.files.append(path.name)
            summary[_tag(e)] = {"winding": rep.winding, "E0": rep.E0, "dE0": rep.dE0,
                                "stable": rep.stable}
        state["zero_counts"] = summary
        report.scalars["zero_count"] = summary

    runners = dict(zip(STAGES, (stage_validate, stage_family, stage_profile, stage_dispersion,
                                stage_sweep, stage_zero_count)))
    failure = None
    for name in STAGES[:last + 1]:
        if name != "validate" and not config.eps:
            report.stages[name] = "skipped"
            continue
        start = time.perf_counter()
        try:
            runners[name]()
            report.stages[name] = "ok"
        except PreconditionError as exc:
            report.stages[name] = f"failed: {exc}"
            failure = EXIT_PRECONDITION
        except EvansflowError as exc:
            report.stages[name] = f"failed: {type(exc).__name__}: {exc}"
            failure = EXIT_UNSTABLE
        finally:
            report.timings[name] = time.perf_counter() - start
        if failure is not None:
            log.error("stage %s: %s", name, report.stages[name])
            break

    if failure == EXIT_PRECONDITION:
        report.verdict, report.exit_code = "precondition-failure", EXIT_PRECONDITION
    elif failure is not None:
        report.verdict, report.exit_code = "inconclusive", EXIT_UNSTABLE
    elif "zero_counts" in state:
        stable = all(v["stable"] for v in state["zero_counts"].values())
        report.verdict = "stable" if stable else "unstable"
        report.exit_code = EXIT_STABLE if stable else EXIT_UNSTABLE
    else:
        report.verdict, report.exit_code = "passed", EXIT_STABLE
    path = out / "report.json"
    report.files.append(path.name)
    path.write_text(emit_report(report, "json"))
    return report


def _parse_eps(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --eps list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evansflow",
                                     description="Evans-function stability pipeline for small "
                                                 "viscous shocks of hyperbolic conservation laws.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("full",):
        p = sub.add_parser(name, help=f"run the pipeline through '{name}'")
        p.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--eps", type=str, help="comma-separated eps list (overrides config)")
        p.add_argument("--stage", choices=STAGES, help="last stage to run (with 'full')")
        p.add_argument("--workers", type=int, help="threads for contour evaluation")
        p.add_argument("--seed", type=int, help="seed for assumption sampling")
        p.add_argument("--format", choices=("json", "text"), default="text",
                       help="report format on stdout")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("EVANSFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {"out": None if args.out is None else str(args.out),
                 "eps": None if args.eps is None else _parse_eps(args.eps),
                 "workers": args.workers, "seed": args.seed}
    try:
        config = load_config(args.config, overrides)
    except (PreconditionError, EvansflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    stop = args.command if args.command != "full" else (args.stage or STAGES[-1])
    report = run_experiment(config, stop)
    sys.stdout.write(emit_report(report, args.format))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
