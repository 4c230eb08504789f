"""Closed-form quantum curves evaluated straight to CSV, no event loop.

Three curve families:
  swap_scaling: end-to-end QBER and relative key rate vs. relay hop count
  distillation: one-round BBPSSW output fidelity and success probability
  secret_key:   extractable secret-key fraction vs. channel QBER
"""

from __future__ import annotations

import csv
from pathlib import Path

from . import quantum
from .config import AnalyticConfig
from .errors import IoError


def swap_scaling_rows(cfg: AnalyticConfig) -> list[dict]:
    rows = []
    for q in cfg.qber_levels:
        for hops in range(1, cfg.max_hops + 1):
            rows.append({
                "qber_per_hop": q,
                "hops": hops,
                "qber_e2e": quantum.swap_chain_qber(q, hops),
                "key_rate_factor": quantum.key_rate_factor(q, hops),
            })
    return rows


def distillation_rows(cfg: AnalyticConfig) -> list[dict]:
    rows = []
    span = cfg.fidelity_max - cfg.fidelity_min
    for k in range(cfg.fidelity_points):
        f = cfg.fidelity_min + span * k / (cfg.fidelity_points - 1)
        f = min(f, 1.0)
        if f <= 0.5:
            continue
        f_out, p = quantum.distill_bbpssw(f)
        rows.append({
            "fidelity_in": f,
            "fidelity_out": f_out,
            "p_success": p,
            "pair_yield": p / 2.0,
        })
    return rows


def secret_key_rows(cfg: AnalyticConfig) -> list[dict]:
    rows = []
    for k in range(cfg.qber_points):
        q = cfg.qber_max * k / (cfg.qber_points - 1)
        rows.append({
            "qber": q,
            "skf_bb84": quantum.secret_key_fraction(min(q, 0.5), "BB84"),
            "skf_e91": quantum.secret_key_fraction(min(q, 0.5), "E91"),
        })
    return rows


CURVES = {
    "swap_scaling": swap_scaling_rows,
    "distillation": distillation_rows,
    "secret_key": secret_key_rows,
}


def write_curves(cfg: AnalyticConfig, out_dir: Path) -> Path:
    if cfg.curves not in CURVES:
        raise ValueError(f"unknown curve family {cfg.curves!r}")
    rows = CURVES[cfg.curves](cfg)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / f"{cfg.curves}.csv"
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})
    except OSError as exc:
        raise IoError(f"cannot write curves to {out_dir}: {exc}") from exc
    return out_path
