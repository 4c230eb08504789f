"""Deterministic rendering of the four figure families.

Every renderer reads the simulator's output files, never its internals,
draws onto a fixed-size canvas, and returns the plotted data so callers
can verify that re-rendering the same inputs is data-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spec import FigureSpec, MissingInput, SchemaMismatch

FIGSIZE = (10.0, 6.0)
DPI = 120
BAND_COLOR = "#d62728"
BAND_ALPHA = 0.15


def read_csv_columns(path: Path, columns: list[str]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaMismatch(f"{path} lacks columns {missing}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in columns}


def read_summary(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    return json.loads(path.read_text())


def _apply_bands(ax, bands):
    for start, end, label in bands:
        ax.axvspan(float(start), float(end), color=BAND_COLOR, alpha=BAND_ALPHA,
                   label=label or None)


def render_timeseries(spec: FigureSpec, inputs: list[Path]) -> dict:
    """Stacked panels of timeseries columns, one line per input run."""
    panels = spec.options.get("panels")
    if not panels:
        raise SchemaMismatch("timeseries spec needs options.panels")
    labels = spec.options.get("labels") or [p.name for p in inputs]
    fig, axes = plt.subplots(len(panels), 1, figsize=FIGSIZE, sharex=True)
    if len(panels) == 1:
        axes = [axes]
    data = {}
    for ax, panel in zip(axes, panels):
        column = panel["column"]
        for run_dir, label in zip(inputs, labels):
            cols = read_csv_columns(run_dir / "timeseries.csv", ["t", column])
            ax.plot(cols["t"] / 60.0, cols[column], label=label, linewidth=1.0)
            data[f"{label}:{column}"] = cols[column]
        ax.set_ylabel(panel.get("ylabel", column))
        _apply_bands(ax, spec.band_annotations)
        ax.legend(loc="upper right", fontsize=7)
    axes[-1].set_xlabel("time (min)")
    if spec.title:
        fig.suptitle(spec.title)
    return data


def render_analytic_curves(spec: FigureSpec, inputs: list[Path]) -> dict:
    """Side-by-side panels of closed-form curve CSVs."""
    panels = spec.options.get("panels")
    if not panels:
        raise SchemaMismatch("analytic_curves spec needs options.panels")
    fig, axes = plt.subplots(1, len(panels), figsize=FIGSIZE)
    if len(panels) == 1:
        axes = [axes]
    data = {}
    for ax, panel in zip(axes, panels):
        csv_name = panel["file"]
        path = next((p / csv_name for p in inputs if (p / csv_name).exists()), None)
        if path is None:
            raise MissingInput(f"{csv_name} not found under any input directory")
        x_col = panel["x"]
        series_by = panel.get("series_by")
        y_cols = panel["y"] if isinstance(panel["y"], list) else [panel["y"]]
        cols = read_csv_columns(path, [x_col] + y_cols
                                + ([series_by] if series_by else []))
        if series_by:
            for level in sorted(set(cols[series_by])):
                mask = cols[series_by] == level
                for y in y_cols:
                    ax.plot(cols[x_col][mask], cols[y][mask], marker="o",
                            markersize=3, label=f"{series_by}={level:g}")
                    data[f"{csv_name}:{y}:{level:g}"] = cols[y][mask]
        else:
            for y in y_cols:
                ax.plot(cols[x_col], cols[y], label=y)
                data[f"{csv_name}:{y}"] = cols[y]
        for threshold in panel.get("hlines", []):
            ax.axhline(threshold, linestyle="--", linewidth=0.8, color="gray")
        if panel.get("logy"):
            ax.set_yscale("log")
        ax.set_xlabel(panel.get("xlabel", x_col))
        ax.set_ylabel(panel.get("ylabel", ", ".join(y_cols)))
        ax.legend(fontsize=7)
    if spec.title:
        fig.suptitle(spec.title)
    return data


def render_grouped_bars(spec: FigureSpec, inputs: list[Path]) -> dict:
    """One bar group per metric, one bar per input run directory."""
    metrics = spec.options.get("metrics")
    if not metrics:
        raise SchemaMismatch("grouped_bars spec needs options.metrics")
    labels = spec.options.get("labels") or [p.name for p in inputs]
    summaries = [read_summary(p) for p in inputs]
    for summary in summaries:
        missing = [m for m in metrics if m not in summary]
        if missing:
            raise SchemaMismatch(f"summary lacks keys {missing}")
    fig, axes = plt.subplots(1, len(metrics), figsize=FIGSIZE)
    if len(metrics) == 1:
        axes = [axes]
    data = {}
    x = np.arange(len(labels))
    for ax, metric in zip(axes, metrics):
        values = np.array([float(s[metric]) for s in summaries])
        ax.bar(x, values, width=0.7)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
        ax.set_ylabel(metric)
        data[metric] = values
    if spec.title:
        fig.suptitle(spec.title)
    return data


def render_scaling_lines(spec: FigureSpec, inputs: list[Path]) -> dict:
    """Metric vs sweep value from sweep_summary.csv, one line per series."""
    metrics = spec.options.get("metrics")
    if not metrics:
        raise SchemaMismatch("scaling_lines spec needs options.metrics")
    series_key = spec.options.get("series_key", "value")
    path = inputs[0] / "sweep_summary.csv"
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    needed = {series_key, "value", "seed"} | set(metrics)
    missing = sorted(needed - set(rows[0]))
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {missing}")
    x_key = spec.options.get("x_key", "n_nodes")
    fig, axes = plt.subplots(1, len(metrics), figsize=FIGSIZE)
    if len(metrics) == 1:
        axes = [axes]
    data = {}
    series_levels = sorted({r[series_key] for r in rows})
    for ax, metric in zip(axes, metrics):
        for level in series_levels:
            points: dict[float, list[float]] = {}
            for r in rows:
                if r[series_key] != level:
                    continue
                x = float(r[x_key]) if x_key in r else float(r["value"])
                points.setdefault(x, []).append(float(r[metric]))
            xs = sorted(points)
            means = np.array([np.mean(points[x]) for x in xs])
            ax.plot(xs, means, marker="o", markersize=3, label=str(level))
            data[f"{metric}:{level}"] = means
        ax.set_xlabel(x_key)
        ax.set_ylabel(metric)
        ax.legend(fontsize=7)
    if spec.title:
        fig.suptitle(spec.title)
    return data


RENDERERS = {
    "timeseries": render_timeseries,
    "analytic_curves": render_analytic_curves,
    "grouped_bars": render_grouped_bars,
    "scaling_lines": render_scaling_lines,
}


def render(spec: FigureSpec, out_dir: str | Path) -> tuple[Path, dict]:
    """Render one spec; returns (image path, plotted data arrays)."""
    inputs = spec.resolve_inputs()
    plt.close("all")
    data = RENDERERS[spec.kind](spec, inputs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / spec.output
    plt.gcf().savefig(out_path, dpi=DPI, metadata={"Software": None})
    plt.close("all")
    return out_path, data
