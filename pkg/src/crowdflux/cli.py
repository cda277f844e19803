"""Command-line front end.

    crowdflux run            --config NAME|PATH [--out DIR] [--threshold X]
    crowdflux sweep          --config NAME|PATH [--out DIR] [--workers N] [--threshold X]
    crowdflux validate       [--config NAME|PATH] [--out DIR] [--workers N]
    crowdflux properties     [--seed N] [--out DIR]
    crowdflux emit-snapshots --config NAME|PATH [--out DIR] [--times T ...]

``--config`` takes a file path or the name of a bundled scenario
(``crowdflux list`` prints them).  Output files are written only after all
results are collected; floats use Python's shortest round-trip repr, so
files are exact and byte-identical across runs and worker counts.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, bundled_names, bundled_path, parse_config
from .errors import ConfigurationError, CrowdfluxError
from .experiments import run_property_suite, run_sweep, run_validation, simulate
from .observables import SimOutput

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

VALIDATION_ORDER_RANGE = (0.8, 1.1)


def fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def snapshot_name(t: float) -> str:
    return f"snapshot_{float(t):g}.csv"


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_timeseries(path: Path, out: SimOutput) -> None:
    header = ["t", *(f"q_{label}" for label in out.site_labels), "exit_density", "mass"]
    rows = (
        [fmt(t), *(fmt(q) for q in qs), fmt(e), fmt(m)]
        for t, qs, e, m in zip(out.times, out.q_history, out.exit_trace, out.mass_history)
    )
    _write_csv(path, header, rows)


def write_snapshots(out_dir: Path, out: SimOutput) -> list[str]:
    names = []
    for t, rho in sorted(out.snapshots.items()):
        name = snapshot_name(t)
        _write_csv(out_dir / name, ["x", "rho"], ([fmt(x), fmt(r)] for x, r in zip(out.centers, rho)))
        names.append(name)
    return names


def resolve_config(arg: str) -> ScenarioConfig:
    path = Path(arg)
    if not path.exists() and arg in bundled_names():
        path = bundled_path(arg)
    if not path.exists():
        raise ConfigurationError(f"config {arg!r} is neither a file nor a bundled scenario ({', '.join(bundled_names())})")
    return parse_config(path)


def _out_dir(args, cfg: ScenarioConfig | None, default: str) -> Path:
    out = Path(args.out or (cfg.output_dir if cfg is not None else default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_summary(cfg: ScenarioConfig, out: SimOutput) -> dict:
    return {
        "name": cfg.name,
        "evacuation_time": out.evacuation_time,
        "evac_threshold": cfg.evac_threshold,
        "n_cells": int(out.centers.size),
        "dx": cfg.dx,
        "dt": cfg.dt,
        "steps": out.n_steps,
        "initial_mass": out.initial_mass,
        "linf_violation": out.linf_violation(cfg.rho_max),
        "max_relative_conservation_error": out.max_relative_conservation_error(),
        "snapshots": [snapshot_name(t) for t in sorted(out.snapshots)],
    }


def cmd_run(args) -> int:
    cfg = _with_threshold(resolve_config(args.config), args.threshold)
    out = simulate(cfg)
    d = _out_dir(args, cfg, "out")
    write_timeseries(d / "timeseries.csv", out)
    write_snapshots(d, out)
    _write_json(d / "summary.json", _run_summary(cfg, out))
    print(f"{cfg.name}: evacuation time {fmt(out.evacuation_time) or 'not reached'} -> {d}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _with_threshold(resolve_config(args.config), args.threshold)
    table = run_sweep(cfg.sweep_spec(), workers=args.workers)
    d = _out_dir(args, cfg, "out")
    _write_csv(d / "sweep.csv", ["param", "evac_time"], ([fmt(p.value), fmt(p.evacuation_time)] for p in table.points))
    vmin, tmin = table.argmin()
    summary = {
        "name": cfg.name,
        "parameter": table.parameter,
        "points": len(table.points),
        "argmin": vmin,
        "min_evac_time": tmin,
        "max_linf_violation": max(p.linf_violation for p in table.points),
        "max_relative_conservation_error": max(p.conservation_error for p in table.points),
    }
    if table.parameter == "obstacle_d":
        baseline = replace(cfg.without_site("obstacle"), sweep=None)
        summary["baseline_evac_time"] = simulate(baseline).evacuation_time
    _write_json(d / "summary.json", summary)
    print(f"{cfg.name}: {len(table.points)} points, minimum {fmt(tmin)} at {table.parameter}={vmin:g} -> {d}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = resolve_config(args.config)
    rep = run_validation(cfg, workers=args.workers)
    lo, hi = VALIDATION_ORDER_RANGE
    checks = [
        {"name": "errors_strictly_decreasing", "passed": rep.strictly_decreasing},
        {"name": "order_in_range", "passed": lo <= rep.order <= hi, "range": [lo, hi]},
        {"name": "linf_bounds", "passed": rep.linf_violation <= 1e-12, "tolerance": 1e-12},
    ]
    report = {"kind": "validation", **rep.to_dict(), "checks": checks, "passed": all(c["passed"] for c in checks)}
    d = _out_dir(args, cfg, "out")
    _write_json(d / "report.json", report)
    print(f"order {rep.order:.4f}, errors {', '.join(f'{e:.3e}' for e in rep.errors)} -> {d / 'report.json'}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_properties(args) -> int:
    report = {"kind": "properties", **run_property_suite(args.seed)}
    d = _out_dir(args, None, "out/properties")
    _write_json(d / "report.json", report)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_emit_snapshots(args) -> int:
    cfg = _with_threshold(resolve_config(args.config), args.threshold)
    if args.times:
        cfg = replace(cfg, snapshot_times=tuple(args.times))
    if not cfg.snapshot_times:
        raise ConfigurationError("no snapshot times given (config snapshot_times or --times)")
    cfg = replace(cfg, t_end=max(cfg.t_end, max(cfg.snapshot_times) + cfg.dt))
    out = simulate(cfg)
    d = _out_dir(args, cfg, "out")
    names = write_snapshots(d, out)
    missing = sorted(set(cfg.snapshot_times) - set(out.snapshots))
    print(f"wrote {len(names)} snapshot(s) -> {d}")
    if missing:
        print(f"not reached: {missing}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def _with_threshold(cfg: ScenarioConfig, threshold: float | None) -> ScenarioConfig:
    if threshold is None:
        return cfg
    if threshold <= 0:
        raise ConfigurationError("--threshold must be positive")
    return replace(cfg, evac_threshold=threshold)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdflux", description="Constrained finite-volume crowd evacuation runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help, config_required=True, default_config=None):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=fn)
        if config_required:
            p.add_argument("--config", required=default_config is None, default=default_config,
                           help="scenario file or bundled scenario name")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        return p

    p = add("run", cmd_run, "single simulation: timeseries.csv, snapshots, summary.json")
    p.add_argument("--threshold", type=float, help="evacuation mass threshold override")
    p = add("sweep", cmd_sweep, "parameter sweep: sweep.csv, summary.json")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--threshold", type=float, help="evacuation mass threshold override")
    p = add("validate", cmd_validate, "self-convergence study: report.json", default_config="validation")
    p.add_argument("--workers", type=int, default=1)
    p = add("properties", cmd_properties, "randomised property suite: report.json", config_required=False)
    p.add_argument("--seed", type=int, default=0)
    p = add("emit-snapshots", cmd_emit_snapshots, "density frames as snapshot_<t>.csv")
    p.add_argument("--times", type=float, nargs="+", help="override the config's snapshot times")
    p.add_argument("--threshold", type=float, help="evacuation mass threshold override")
    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = args.func(args)
        for msg in dict.fromkeys(str(w.message) for w in caught):
            print(f"warning: {msg}", file=sys.stderr)
        return code
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CrowdfluxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
