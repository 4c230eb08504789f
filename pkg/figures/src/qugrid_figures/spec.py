"""Figure specifications: what to read, how to draw it, where to write it.

A spec consumes only the simulator's documented file formats
(timeseries.csv, summary.json, sweep_summary.csv, analytic CSVs). Inputs
are run directories, resolved relative to the working directory unless
absolute, so shipped specs can be rendered from any corpus output root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("timeseries", "analytic_curves", "grouped_bars", "scaling_lines")


class MissingInput(FileNotFoundError):
    """A referenced input directory or file does not exist."""


class SchemaMismatch(ValueError):
    """An input exists but lacks the columns or keys the figure needs."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    title: str = ""
    band_annotations: list[tuple[float, float, str]] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve_inputs(self) -> list[Path]:
        resolved = []
        for item in self.inputs:
            path = Path(item)
            if not path.is_absolute():
                path = Path.cwd() / path
            if not path.exists():
                raise MissingInput(f"input {path} does not exist")
            resolved.append(path)
        if not resolved:
            raise MissingInput("figure spec lists no inputs")
        return resolved


def load_spec(path: str | Path) -> FigureSpec:
    path = Path(path)
    data = json.loads(path.read_text())
    kind = data.get("kind")
    if kind not in KINDS:
        raise SchemaMismatch(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    if not isinstance(data.get("inputs"), list) or not data["inputs"]:
        raise SchemaMismatch("spec must list at least one input")
    if not data.get("output"):
        raise SchemaMismatch("spec must name an output image file")
    bands = [tuple(b) for b in data.get("band_annotations", [])]
    return FigureSpec(
        kind=kind,
        inputs=list(data["inputs"]),
        output=str(data["output"]),
        title=str(data.get("title", "")),
        band_annotations=bands,
        options=dict(data.get("options", {})),
        base_dir=path.parent,
    )
