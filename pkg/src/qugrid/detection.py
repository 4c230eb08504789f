"""Controller-side integrity mechanisms.

Two independent detectors run over accepted telemetry:

* a weighted-least-squares fit of per-node net injections against the
  telemetry stream plus witness aggregates metered on the controller's
  incident links, with a chi-square test on the weighted residual sum; and
* randomly-timed sensor challenges scored against a physics prediction with
  an adaptive (EWMA-tracked) threshold.

The witness aggregates are what make detection topology-dependent: a hub
meters every node's feeder individually, while relayed structures only see
sums over the nodes routed through each incident link.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, RankDeficient
from .network import Topology, shortest_paths


@dataclass
class MeasurementSet:
    z: np.ndarray           # readings, kW
    sigma: np.ndarray       # per-reading standard deviation, kW
    timestamp: float
    sources: tuple[int, ...]

    def __post_init__(self):
        if self.z.shape != self.sigma.shape:
            raise ValueError("z and sigma must have matching shapes")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive elementwise")


def wls_estimate(m: MeasurementSet, h: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Minimise J(x) = sum((z - Hx)^2 / sigma^2) via the normal equations.

    Returns (state estimate, J at the minimum, degrees of freedom).
    """
    n_meas, n_state = h.shape
    if n_meas <= n_state:
        raise RankDeficient(f"need more measurements ({n_meas}) than states ({n_state})")
    w = 1.0 / m.sigma
    hw = h * w[:, None]
    zw = m.z * w
    gram = hw.T @ hw
    if np.linalg.matrix_rank(gram) < n_state:
        raise RankDeficient("measurement map is rank deficient")
    x_hat = np.linalg.solve(gram, hw.T @ zw)
    residual = zw - hw @ x_hat
    j = float(residual @ residual)
    return x_hat, j, n_meas - n_state


def chi2_bad_data(j: float, dof: int, alpha: float) -> bool:
    """Flag when J exceeds the (1 - alpha) chi-square quantile at dof."""
    if dof < 1:
        raise DomainError(f"dof must be >= 1, got {dof}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0,1), got {alpha}")
    return j > float(stats.chi2.ppf(1.0 - alpha, dof))


def witness_matrix(topology: Topology) -> np.ndarray:
    """Aggregation of microgrid injections over the controller's incident links.

    Row per link adjacent to node 0; entry (l, i) is the fraction of node
    i+1's shortest-path flow to the controller carried by link l, with
    equal-cost paths split uniformly.
    """
    incident = sorted(v for u, v in topology.edges if u == 0)
    rows = {v: r for r, v in enumerate(incident)}
    w = np.zeros((len(incident), topology.n_nodes - 1))
    for node in range(1, topology.n_nodes):
        paths = shortest_paths(topology, node, 0)
        share = 1.0 / len(paths)
        for path in paths:
            w[rows[path[-2]], node - 1] += share
    return w


def measurement_map(topology: Topology) -> np.ndarray:
    """Direct injection rows (identity) stacked over witness aggregate rows."""
    n = topology.n_nodes - 1
    return np.vstack([np.eye(n), witness_matrix(topology)])


def measurement_sigmas(topology: Topology, sigma_injection_kw: float,
                       sigma_witness_kw: float) -> np.ndarray:
    """Per-row sigmas; witness resolution degrades linearly with the number
    of feeds multiplexed onto a link, so hub metering is sharp and relayed
    aggregates are progressively blurrier."""
    w = witness_matrix(topology)
    fan_in = (w > 0).sum(axis=1)
    witness_sigma = sigma_witness_kw * np.maximum(1, fan_in)
    n = topology.n_nodes - 1
    return np.concatenate([np.full(n, sigma_injection_kw), witness_sigma])


@dataclass
class EwmaTracker:
    """Running mean/variance of challenge scores with exponential weighting.

    Flagged scores do not update the baseline, so a detected compromise does
    not teach the tracker to accept it.
    """

    lam: float = 0.2
    k_sigma: float = 5.0
    mean: float = 0.0
    variance: float = 0.0
    count: int = 0
    warmup: int = 5
    sigma_floor: float = 1.0  # keeps the early threshold above sensor noise

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must be in (0,1], got {self.lam}")

    def threshold(self) -> float:
        spread = max(float(np.sqrt(self.variance)), self.sigma_floor)
        return self.mean + self.k_sigma * spread


@dataclass
class ChallengeRecord:
    target: int
    issued_at: float
    expected: float
    reported: float
    score: float
    verdict: str  # "clean" | "compromised"


def schedule_challenge(t_now: float, mean_interval_s: float,
                       rng: np.random.Generator) -> float | None:
    """Next issue time with exponential inter-arrival; None disables."""
    if mean_interval_s <= 0:
        return None
    return t_now + float(rng.exponential(mean_interval_s))


def evaluate_challenge(reported: float, expected: float, tracker: EwmaTracker,
                       issued_at: float = 0.0, target: int = 0) -> tuple[ChallengeRecord, EwmaTracker]:
    """Score one challenge against the pre-update tracker statistics.

    During warmup every score trains the tracker and no verdicts are issued.
    """
    score = abs(reported - expected)
    compromised = False
    if tracker.count >= tracker.warmup:
        compromised = score > tracker.threshold()
    if not compromised:
        if tracker.count == 0:
            tracker.mean = score
            tracker.variance = 0.0
        else:
            delta = score - tracker.mean
            tracker.mean += tracker.lam * delta
            tracker.variance = (1 - tracker.lam) * (tracker.variance + tracker.lam * delta * delta)
        tracker.count += 1
    record = ChallengeRecord(
        target=target,
        issued_at=issued_at,
        expected=expected,
        reported=reported,
        score=score,
        verdict="compromised" if compromised else "clean",
    )
    return record, tracker


@dataclass
class DetectionScores:
    precision: float
    recall: float
    accused: tuple[int, ...]
    vacuous: bool = False


def detection_scores(records: list[ChallengeRecord],
                     ground_truth: frozenset[int]) -> DetectionScores:
    """Node-level precision/recall: a node is accused if any challenge flagged it."""
    accused = sorted({r.target for r in records if r.verdict == "compromised"})
    tp = sum(1 for n in accused if n in ground_truth)
    fp = len(accused) - tp
    fn = len(ground_truth) - tp
    vacuous = False
    if tp + fp == 0:
        precision = 1.0
        vacuous = True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0
        vacuous = True
    else:
        recall = tp / (tp + fn)
    return DetectionScores(precision=precision, recall=recall,
                           accused=tuple(accused), vacuous=vacuous)


@dataclass
class WlsHarness:
    """Periodic estimator runs over the controller's current beliefs."""

    topology: Topology
    sigma_injection_kw: float
    sigma_witness_kw: float
    alpha: float = 0.05
    h: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)
    runs: int = 0
    flags: int = 0
    attack_window_runs: int = 0
    attack_window_flags: int = 0

    def __post_init__(self):
        self.h = measurement_map(self.topology)
        self.sigma = measurement_sigmas(
            self.topology, self.sigma_injection_kw, self.sigma_witness_kw)

    def run_once(self, believed_injections: np.ndarray, true_injections: np.ndarray,
                 rng: np.random.Generator, t: float, in_attack_window: bool) -> bool:
        """One estimation cycle: beliefs feed the direct rows as-is (their
        deviation from truth is the telemetry error the sigmas model), witness
        meters observe the true injections with read noise."""
        n_direct = believed_injections.shape[0]
        w = witness_matrix(self.topology)
        witness_read = w @ true_injections + (
            rng.standard_normal(w.shape[0]) * self.sigma[n_direct:])
        z = np.concatenate([believed_injections, witness_read])
        m = MeasurementSet(z=z, sigma=self.sigma, timestamp=t,
                           sources=tuple(range(1, self.topology.n_nodes)))
        _, j, dof = wls_estimate(m, self.h)
        flag = chi2_bad_data(j, dof, self.alpha)
        self.runs += 1
        self.flags += int(flag)
        if in_attack_window:
            self.attack_window_runs += 1
            self.attack_window_flags += int(flag)
        return flag

    @property
    def attack_detection_rate(self) -> float:
        if self.attack_window_runs == 0:
            return 0.0
        return self.attack_window_flags / self.attack_window_runs

    @property
    def clean_flag_rate(self) -> float:
        clean_runs = self.runs - self.attack_window_runs
        if clean_runs == 0:
            return 0.0
        return (self.flags - self.attack_window_flags) / clean_runs
