"""Command-line interface: run, sweep, validate, analytic.

Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 partial sweep failure. QUGRID_OUT_ROOT overrides the output root.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analytic, metrics, sim
from .config import (ScenarioConfig, apply_override, parse_scenario,
                     parse_scenario_dict)
from .errors import IoError, ParseError, QugridError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


def _load_scenario(args) -> ScenarioConfig:
    path = Path(args.scenario)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    for item in args.override or []:
        if "=" not in item:
            raise ValidationError("override", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(raw, key, value)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    return parse_scenario_dict(raw, name_hint=path.stem)


def _out_dir(args, default_name: str) -> Path:
    root = os.environ.get("QUGRID_OUT_ROOT")
    if args.out:
        base = Path(args.out)
    elif root:
        base = Path(root) / default_name
    else:
        base = Path("out") / default_name
    return base


def run_experiment(config: ScenarioConfig, out_dir: Path) -> dict:
    """Execute one scenario and write the three output artifacts."""
    if config.mode == "analytic":
        analytic.write_curves(config.analytic, out_dir)
        return {"scenario": config.name, "mode": "analytic"}
    log = sim.run(config)
    return metrics.write_outputs(log, out_dir)


def _sweep_cell(args_tuple):
    raw, axis, value, seed, cell_dir = args_tuple
    cell_raw = json.loads(json.dumps(raw))
    if axis == "n_nodes":
        cell_raw.setdefault("topology", {})["n_nodes"] = value
    elif axis == "topology":
        cell_raw.setdefault("topology", {})["kind"] = value
    elif axis == "defense_tier":
        cell_raw.setdefault("defense", {})["tier"] = value
    elif axis == "attack_kind":
        for attack in cell_raw.get("attacks", []):
            attack["kind"] = value
    elif axis == "intensity":
        for attack in cell_raw.get("attacks", []):
            attack["intensity"] = value
    elif axis == "seed":
        seed = int(value)
    cell_raw["master_seed"] = seed
    try:
        config = parse_scenario_dict(cell_raw, name_hint=cell_raw.get("name", "cell"))
        summary = run_experiment(config, Path(cell_dir))
    except QugridError as exc:
        return cell_dir, {"_error": str(exc)}
    return cell_dir, summary


def run_sweep(raw: dict, config: ScenarioConfig, out_dir: Path, parallel: int) -> int:
    """One subdirectory per (axis value, seed); merged sweep_summary.csv.

    Cells are independent single-threaded runs, so the merged output is a
    pure function of (spec, seeds) regardless of parallelism.
    """
    spec = config.sweep
    if spec is None:
        raise ValidationError("sweep", "scenario has no sweep section")
    cells = []
    for value in spec.values:
        for seed in spec.seeds:
            cell_dir = out_dir / f"{spec.axis}={value}" / f"seed={seed}"
            cells.append((raw, spec.axis, value, seed, str(cell_dir)))
    results: dict[str, dict] = {}
    failures: list[str] = []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_sweep_cell, cells))
    else:
        outcomes = [_sweep_cell(cell) for cell in cells]
    for cell_dir, summary in outcomes:
        if "_error" in summary:
            failures.append(f"{cell_dir}: {summary['_error']}")
        else:
            results[cell_dir] = summary

    rows = []
    for (raw_, axis, value, seed, cell_dir) in cells:
        summary = results.get(cell_dir)
        if summary is None:
            continue
        row = {"axis": axis, "value": value, "seed": seed}
        row.update({k: v for k, v in summary.items() if not isinstance(v, dict)})
        rows.append(row)
    rows.sort(key=lambda r: (str(r["value"]), r["seed"]))
    if rows:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep_summary.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})
    if failures:
        for failure in failures:
            print(f"sweep cell failed: {failure}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qugrid",
                                     description="Quantum-augmented microgrid simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="Run one scenario and write outputs.")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--override", action="append", metavar="KEY=VALUE")

    p_sweep = sub.add_parser("sweep", help="Run the scenario's sweep section.")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--seeds", type=int, default=None,
                         help="Use seeds 1..N, overriding the sweep section.")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--parallel", type=int, default=1)
    p_sweep.add_argument("--override", action="append", metavar="KEY=VALUE")

    p_val = sub.add_parser("validate", help="Validate a scenario file.")
    p_val.add_argument("--scenario", required=True)

    p_ana = sub.add_parser("analytic", help="Evaluate closed-form curves to CSV.")
    p_ana.add_argument("--scenario", default=None,
                       help="Analytic-mode scenario file (optional).")
    p_ana.add_argument("--curves", default=None,
                       choices=sorted(analytic.CURVES),
                       help="Curve family when no scenario file is given.")
    p_ana.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.cmd == "validate":
            config = parse_scenario(args.scenario)
            print(f"ok: {config.name} ({config.topology_kind.value}, "
                  f"{config.n_nodes} nodes, {config.duration_s:.0f} s)")
            return EXIT_OK
        if args.cmd == "analytic":
            if args.scenario:
                config = parse_scenario(args.scenario)
                out = _out_dir(args, config.name)
                path = analytic.write_curves(config.analytic, out)
            elif args.curves:
                from .config import AnalyticConfig
                out = _out_dir(args, args.curves)
                path = analytic.write_curves(AnalyticConfig(curves=args.curves), out)
            else:
                print("analytic: need --scenario or --curves", file=sys.stderr)
                return EXIT_VALIDATION
            print(f"wrote {path}")
            return EXIT_OK
        if args.cmd == "run":
            config = _load_scenario(args)
            out = _out_dir(args, config.name)
            summary = run_experiment(config, out)
            print(json.dumps(summary, indent=2))
            return EXIT_OK
        if args.cmd == "sweep":
            path = Path(args.scenario)
            raw = json.loads(path.read_text())
            for item in args.override or []:
                key, value = item.split("=", 1)
                apply_override(raw, key, value)
            if args.seeds is not None:
                raw.setdefault("sweep", {})["seeds"] = list(range(1, args.seeds + 1))
            config = parse_scenario_dict(raw, name_hint=path.stem)
            out = _out_dir(args, config.name)
            return run_sweep(raw, config, out, args.parallel)
    except (ValidationError, ParseError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except QugridError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
