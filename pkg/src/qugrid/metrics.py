"""Run-log aggregation and the three output artifacts.

Outputs:
  timeseries.csv  one row per physics tick (schema in docs/output_schema.md)
  messages.csv    one row per message with verdict and ground truth
  summary.json    flat key/value record of the run summary, stable key order

`summarize` is a pure function of the run log: re-summarizing the same log
reproduces the summary bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyInput, IoError


def percentile(values: list[float], p: float) -> float:
    """Nearest-rank percentile: element at index ceil(p*N), 1-based."""
    if not values:
        raise EmptyInput("percentile of an empty list")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0,1), got {p}")
    ordered = sorted(values)
    rank = math.ceil(p * len(ordered))
    return ordered[rank - 1]


@dataclass
class MessageRecord:
    id: int
    msg_class: str
    src: int
    claimed: int
    dst: int
    created_at: float
    size_bits: int
    malicious: bool
    attack_kind: str
    outcome: str          # accepted | rejected | dropped
    drop_reason: str = ""
    rejecting_stage: str = ""
    stages_evaluated: int = 0
    latency_ms: float = float("nan")
    kak_attempts: int = 0
    kak_fallback: bool = False
    issue_failed: bool = False


@dataclass
class RunLog:
    messages: list[MessageRecord] = field(default_factory=list)
    timeseries: list[dict] = field(default_factory=list)
    timeseries_columns: list[str] = field(default_factory=list)
    eens_kwh: float = 0.0
    peak_unserved_kw: float = 0.0
    served_energy_kwh: float = 0.0
    demand_energy_kwh: float = 0.0
    shed_fraction_by_node: dict[int, float] = field(default_factory=dict)
    duration_s: float = 0.0
    # quantum counters
    key_generated_bits: int = 0
    key_consumed_bits: int = 0
    authenticated_messages: int = 0
    probe_count: int = 0
    alarm_count: int = 0
    qca_checks: int = 0
    qca_rejections: int = 0
    kak_attempts: int = 0
    kak_successes: int = 0
    quantum_verify_overhead_ms: float = 0.0
    # detection results
    wls_detection_rate: float = 0.0
    wls_clean_flag_rate: float = 0.0
    challenge_precision: float = 1.0
    challenge_recall: float = 1.0
    challenge_vacuous: bool = True
    challenge_count: int = 0
    # identity
    scenario: str = ""
    seed: int = 0
    topology: str = ""
    n_nodes: int = 0
    tier: str = ""


# Key order of summary.json, fixed for byte-stable output.
SUMMARY_FIELDS = (
    "scenario", "seed", "topology", "n_nodes", "tier", "duration_s",
    "eens_kwh", "peak_unserved_kw", "served_energy_kwh", "demand_energy_kwh",
    "block_rate", "zero_malicious",
    "malicious_sent", "malicious_blocked", "malicious_leaked", "malicious_dropped",
    "delivery_ratio", "legit_sent", "legit_accepted",
    "latency_mean_ms", "latency_p95_ms", "latency_count",
    "e91_utilization", "key_bits_per_msg", "kak_success_rate", "kak_attempts",
    "ids_probes_per_s", "ids_alarm_count", "qca_rejection_rate",
    "quantum_verify_overhead_ms",
    "wls_detection_rate", "wls_clean_flag_rate",
    "challenge_precision", "challenge_recall", "challenge_vacuous",
    "shed_fraction_by_node",
)


def summarize(log: RunLog) -> dict:
    """Aggregate the run log into the summary record.

    Malicious messages lost by the network itself are excluded from the
    block-rate ratio entirely: the defense gets neither credit nor blame
    for packet loss.
    """
    malicious = [m for m in log.messages if m.malicious]
    mal_dropped = sum(1 for m in malicious if m.outcome == "dropped")
    mal_blocked = sum(
        1 for m in malicious if m.outcome == "rejected" or
        (m.outcome != "dropped" and m.issue_failed))
    mal_faced = len(malicious) - mal_dropped
    zero_malicious = mal_faced == 0
    block_rate = 0.0 if zero_malicious else mal_blocked / mal_faced

    legit = [m for m in log.messages if not m.malicious]
    legit_accepted = sum(1 for m in legit if m.outcome == "accepted")
    delivery_ratio = 1.0 if not legit else legit_accepted / len(legit)

    latencies = [m.latency_ms for m in log.messages
                 if m.outcome == "accepted" and not math.isnan(m.latency_ms)]
    latency_mean = sum(latencies) / len(latencies) if latencies else 0.0
    latency_p95 = percentile(latencies, 0.95) if latencies else 0.0

    e91_utilization = (log.key_consumed_bits / log.key_generated_bits
                       if log.key_generated_bits > 0 else 0.0)
    key_bits_per_msg = (log.key_consumed_bits / log.authenticated_messages
                        if log.authenticated_messages > 0 else 0.0)
    kak_rate = (log.kak_successes / log.kak_attempts if log.kak_attempts > 0 else 0.0)
    probes_per_s = log.probe_count / log.duration_s if log.duration_s > 0 else 0.0
    qca_rejection = (log.qca_rejections / log.qca_checks if log.qca_checks > 0 else 0.0)

    return {
        "scenario": log.scenario,
        "seed": log.seed,
        "topology": log.topology,
        "n_nodes": log.n_nodes,
        "tier": log.tier,
        "duration_s": log.duration_s,
        "eens_kwh": log.eens_kwh,
        "peak_unserved_kw": log.peak_unserved_kw,
        "served_energy_kwh": log.served_energy_kwh,
        "demand_energy_kwh": log.demand_energy_kwh,
        "block_rate": block_rate,
        "zero_malicious": zero_malicious,
        "malicious_sent": len(malicious),
        "malicious_blocked": mal_blocked,
        "malicious_leaked": mal_faced - mal_blocked,
        "malicious_dropped": mal_dropped,
        "delivery_ratio": delivery_ratio,
        "legit_sent": len(legit),
        "legit_accepted": legit_accepted,
        "latency_mean_ms": latency_mean,
        "latency_p95_ms": latency_p95,
        "latency_count": len(latencies),
        "e91_utilization": e91_utilization,
        "key_bits_per_msg": key_bits_per_msg,
        "kak_success_rate": kak_rate,
        "kak_attempts": log.kak_attempts,
        "ids_probes_per_s": probes_per_s,
        "ids_alarm_count": log.alarm_count,
        "qca_rejection_rate": qca_rejection,
        "quantum_verify_overhead_ms": log.quantum_verify_overhead_ms,
        "wls_detection_rate": log.wls_detection_rate,
        "wls_clean_flag_rate": log.wls_clean_flag_rate,
        "challenge_precision": log.challenge_precision,
        "challenge_recall": log.challenge_recall,
        "challenge_vacuous": log.challenge_vacuous,
        "shed_fraction_by_node": {str(k): v for k, v in sorted(log.shed_fraction_by_node.items())},
    }


MESSAGE_COLUMNS = (
    "id", "msg_class", "src", "claimed", "dst", "created_at", "size_bits",
    "malicious", "attack_kind", "outcome", "drop_reason", "rejecting_stage",
    "stages_evaluated", "latency_ms", "kak_attempts", "kak_fallback", "issue_failed",
)


def write_outputs(log: RunLog, out_dir: Path) -> dict:
    """Write timeseries.csv, messages.csv and summary.json; returns the summary."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise IoError(f"output directory {out_dir} is not writable: {exc}") from exc

    with open(out_dir / "timeseries.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(log.timeseries_columns)
        for row in log.timeseries:
            writer.writerow([_fmt(row.get(col, "")) for col in log.timeseries_columns])

    with open(out_dir / "messages.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MESSAGE_COLUMNS)
        for m in log.messages:
            writer.writerow([
                m.id, m.msg_class, m.src, m.claimed, m.dst,
                _fmt(m.created_at), m.size_bits,
                int(m.malicious), m.attack_kind, m.outcome, m.drop_reason,
                m.rejecting_stage, m.stages_evaluated,
                "" if math.isnan(m.latency_ms) else _fmt(m.latency_ms),
                m.kak_attempts, int(m.kak_fallback), int(m.issue_failed),
            ])

    summary = summarize(log)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_summary(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
