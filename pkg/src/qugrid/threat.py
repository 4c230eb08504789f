"""Attack plans, adversarial traffic shaping, and the staged defense pipeline.

Six attack classes at three intensities feed a seven-stage verifier-side
pipeline (access control, quarantine, rate limiting, signature, token
validation, plausibility, cross-node consistency). The first failing stage
rejects; later stages are never evaluated for that message.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidWindows
from .network import Message, MessageClass
from . import quantum


class AttackKind(Enum):
    FDI = "fdi"
    SPOOFING = "spoofing"
    COORDINATED_MULTI_NODE = "coordinated_multi_node"
    MITM = "mitm"
    KEY_EXHAUSTION = "key_exhaustion"
    CHANNEL_DISTURBANCE = "channel_disturbance"
    FDI_PLUS_SPOOF = "fdi_plus_spoof"


class Intensity(Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"


# Fraction of each attack's maximum bias/rate applied per intensity tier.
INTENSITY_SCALE = {Intensity.S1: 0.2, Intensity.S2: 0.6, Intensity.S3: 1.0}

# Kinds that emit network traffic (vs. pure channel/physical interference).
EMITTING_KINDS = frozenset({
    AttackKind.FDI,
    AttackKind.SPOOFING,
    AttackKind.COORDINATED_MULTI_NODE,
    AttackKind.KEY_EXHAUSTION,
    AttackKind.FDI_PLUS_SPOOF,
})


@dataclass
class AttackPlan:
    kind: AttackKind
    intensity: Intensity
    windows: tuple[tuple[float, float], ...]
    participants: tuple[int, ...]
    targets: tuple[int, ...] = ()
    rate_msgs_per_s: float = 8.0

    def validate(self, horizon: float) -> None:
        prev_end = -1.0
        for start, end in sorted(self.windows):
            if end <= start:
                raise InvalidWindows(f"window ({start},{end}) is empty or reversed")
            if start < prev_end:
                raise InvalidWindows(f"window starting at {start} overlaps the previous one")
            if end > horizon:
                raise InvalidWindows(f"window ({start},{end}) exceeds horizon {horizon}")
            prev_end = end
        if self.kind in EMITTING_KINDS and not self.participants:
            raise InvalidWindows(f"{self.kind.value} requires participants")

    @property
    def scale(self) -> float:
        return INTENSITY_SCALE[self.intensity]

    def active_at(self, t: float) -> bool:
        return any(start <= t < end for start, end in self.windows)


class DefenseTier(Enum):
    NONE = "none"
    CLASSICAL = "classical"
    QUANTUM = "quantum"


PIPELINE_STAGES = (
    "acl", "quarantine", "rate_limit", "signature",
    "qca_token", "plausibility", "consistency",
)

TIER_TOGGLES = {
    DefenseTier.NONE: frozenset(),
    DefenseTier.CLASSICAL: frozenset({
        "acl", "rate_limit", "signature", "plausibility",
        "consistency", "quarantine", "classical_ids",
    }),
    DefenseTier.QUANTUM: frozenset({
        "acl", "rate_limit", "signature", "plausibility",
        "consistency", "quarantine", "classical_ids",
        "qca_token", "pingpong_ids",
    }),
}


@dataclass
class DefenseConfig:
    tier: DefenseTier = DefenseTier.NONE
    toggles: frozenset[str] = None  # derived from tier unless overridden
    rate_limit_msgs_per_s: float = 30.0
    quarantine_threshold: int = 40
    quarantine_window_s: float = 20.0
    quarantine_duration_s: float = 60.0
    # identities never quarantined; operators do not lock out their own
    # control plane, however noisy the forgeries claiming it
    quarantine_exempt: frozenset[int] = frozenset({0})
    signature_forge_success: float = 0.35
    plausibility_k_sigma: float = 5.0
    plausibility_sigma_kw: float = 2.0
    consistency_tolerance_kw: float = 10.0
    # per-stage processing delays, seconds
    delay_signature_s: float = 0.008
    delay_classical_ids_s: float = 0.008
    delay_qca_issue_s: float = 0.009
    delay_qca_verify_s: float = 0.009
    delay_pingpong_check_s: float = 0.001

    def __post_init__(self):
        if self.toggles is None:
            self.toggles = TIER_TOGGLES[self.tier]

    def enabled(self, stage: str) -> bool:
        return stage in self.toggles

    def sender_delay_s(self) -> float:
        return self.delay_qca_issue_s if self.enabled("qca_token") else 0.0

    def verifier_delay_s(self) -> float:
        delay = 0.0
        if self.enabled("signature"):
            delay += self.delay_signature_s
        if self.enabled("classical_ids"):
            delay += self.delay_classical_ids_s
        if self.enabled("qca_token"):
            delay += self.delay_qca_verify_s
        if self.enabled("pingpong_ids"):
            delay += self.delay_pingpong_check_s
        return delay


@dataclass
class Verdict:
    msg_id: int
    accepted: bool
    rejecting_stage: str | None
    processing_delay_s: float
    stages_evaluated: int


class RateLimiter:
    """Token bucket per source key: capacity = limit, refill = limit per second."""

    def __init__(self, limit_per_s: float):
        if limit_per_s <= 0:
            raise ValueError("rate limit must be positive")
        self.limit = limit_per_s
        self._buckets: dict[int, tuple[float, float]] = {}  # key -> (tokens, t_last)

    def check(self, key: int, t_now: float) -> bool:
        tokens, t_last = self._buckets.get(key, (self.limit, t_now))
        tokens = min(self.limit, tokens + (t_now - t_last) * self.limit)
        if tokens >= 1.0:
            self._buckets[key] = (tokens - 1.0, t_now)
            return True
        self._buckets[key] = (tokens, t_now)
        return False


class QuarantineTracker:
    """Quarantines identities that accumulate too many rejections in a window."""

    def __init__(self, threshold: int, window_s: float, duration_s: float):
        self.threshold = threshold
        self.window_s = window_s
        self.duration_s = duration_s
        self._rejections: dict[int, deque[float]] = {}
        self._until: dict[int, float] = {}

    def is_quarantined(self, key: int, t_now: float) -> bool:
        return self._until.get(key, -1.0) > t_now

    def record_rejection(self, key: int, t_now: float) -> None:
        events = self._rejections.setdefault(key, deque())
        events.append(t_now)
        while events and events[0] < t_now - self.window_s:
            events.popleft()
        if len(events) > self.threshold:
            self._until[key] = t_now + self.duration_s
            events.clear()


@dataclass
class PipelineContext:
    """Controller-side state the pipeline consults for content checks."""

    # physics-model generation prediction per node, refreshed every tick
    predicted_gen_kw: dict[int, float] = field(default_factory=dict)
    # nodes flagged by the network-wide consistency check this tick
    consistency_suspects: frozenset[int] = frozenset()
    registered_nodes: frozenset[int] = frozenset()


class DefensePipeline:
    """Staged verifier: evaluates stages in order, short-circuits on rejection."""

    def __init__(self, defense: DefenseConfig, authority: quantum.TokenAuthority | None,
                 signature_rng: np.random.Generator):
        self.defense = defense
        self.authority = authority
        self.signature_rng = signature_rng
        self.rate_limiter = RateLimiter(defense.rate_limit_msgs_per_s)
        self.quarantine = QuarantineTracker(
            defense.quarantine_threshold,
            defense.quarantine_window_s,
            defense.quarantine_duration_s,
        )
        self.stage_eval_counts: dict[str, int] = {s: 0 for s in PIPELINE_STAGES}

    def _token_peek_ok(self, msg: Message) -> bool:
        """Non-consuming check that the envelope binds msg to its claimed identity."""
        token = msg.envelope
        if not isinstance(token, quantum.QcaToken):
            return False
        return (token.genuine and not token.used
                and token.issuer == msg.claimed_identity
                and token.payload_digest == _payload_digest(msg))

    def process(self, msg: Message, t_now: float, ctx: PipelineContext) -> Verdict:
        defense = self.defense
        delay = defense.verifier_delay_s()
        stages = 0
        token_ok = self._token_peek_ok(msg) if defense.enabled("qca_token") else False

        def reject(stage: str) -> Verdict:
            # Quarantine bookkeeping: classical tiers key on the (spoofable)
            # claimed identity; the quantum tier only binds rejections to an
            # identity the token actually proved.
            if defense.enabled("quarantine") and msg.claimed_identity not in defense.quarantine_exempt:
                if not defense.enabled("qca_token"):
                    self.quarantine.record_rejection(msg.claimed_identity, t_now)
                elif token_ok:
                    self.quarantine.record_rejection(msg.claimed_identity, t_now)
            return Verdict(msg.id, False, stage, delay, stages)

        if defense.enabled("acl"):
            stages += 1
            self.stage_eval_counts["acl"] += 1
            if ctx.registered_nodes and msg.claimed_identity not in ctx.registered_nodes:
                return reject("acl")

        if defense.enabled("quarantine"):
            stages += 1
            self.stage_eval_counts["quarantine"] += 1
            if not defense.enabled("qca_token"):
                if self.quarantine.is_quarantined(msg.claimed_identity, t_now):
                    return Verdict(msg.id, False, "quarantine", delay, stages)
            elif token_ok and self.quarantine.is_quarantined(msg.claimed_identity, t_now):
                return Verdict(msg.id, False, "quarantine", delay, stages)

        if defense.enabled("rate_limit"):
            stages += 1
            self.stage_eval_counts["rate_limit"] += 1
            if not defense.enabled("qca_token"):
                if not self.rate_limiter.check(msg.claimed_identity, t_now):
                    return reject("rate_limit")
            elif token_ok and not self.rate_limiter.check(msg.claimed_identity, t_now):
                return reject("rate_limit")

        if defense.enabled("signature"):
            stages += 1
            self.stage_eval_counts["signature"] += 1
            if not _signature_ok(msg, defense, self.signature_rng):
                return reject("signature")

        if defense.enabled("qca_token"):
            stages += 1
            self.stage_eval_counts["qca_token"] += 1
            result = self.authority.verify(
                msg.envelope if isinstance(msg.envelope, quantum.QcaToken) else None,
                msg.claimed_identity, t_now, _payload_digest(msg))
            if result != quantum.VERIFY_OK:
                return reject(f"qca_token:{result}")

        if defense.enabled("plausibility") and msg.msg_class is MessageClass.TELEMETRY:
            stages += 1
            self.stage_eval_counts["plausibility"] += 1
            predicted = ctx.predicted_gen_kw.get(msg.claimed_identity)
            reported = msg.payload.get("gen_kw")
            if predicted is not None and reported is not None:
                limit = defense.plausibility_k_sigma * defense.plausibility_sigma_kw
                if abs(reported - predicted) > limit:
                    return reject("plausibility")

        if defense.enabled("consistency") and msg.msg_class is MessageClass.TELEMETRY:
            stages += 1
            self.stage_eval_counts["consistency"] += 1
            if msg.claimed_identity in ctx.consistency_suspects:
                return reject("consistency")

        return Verdict(msg.id, True, None, delay, stages)


def _payload_digest(msg: Message) -> int:
    """Stable digest of the payload fields a tag would cover."""
    return hash(tuple(sorted(msg.payload.items()))) if msg.payload else 0


def _signature_ok(msg: Message, defense: DefenseConfig, rng: np.random.Generator) -> bool:
    sig = msg.payload.get("_sig", "valid") if msg.payload else "valid"
    if msg.tampered:
        return False
    if sig == "valid":
        return True
    # forged signatures slip past classical verification some of the time
    return rng.random() < defense.signature_forge_success


def consistency_check(reported_gen_kw: dict[int, float],
                      predicted_gen_kw: dict[int, float],
                      tolerance_kw: float) -> frozenset[int]:
    """Network-wide balance check on reported generation.

    When the aggregate reported-minus-predicted residual exceeds tolerance,
    the node with the largest individual deviation is flagged. Colluding
    nodes with offsetting biases cancel in the aggregate and evade this
    check; that is a documented limitation.
    """
    residuals = {
        node: reported_gen_kw[node] - predicted_gen_kw[node]
        for node in reported_gen_kw
        if node in predicted_gen_kw
    }
    if not residuals:
        return frozenset()
    aggregate = sum(residuals.values())
    if abs(aggregate) <= tolerance_kw:
        return frozenset()
    worst = max(residuals, key=lambda n: (abs(residuals[n]), n))
    return frozenset({worst})


@dataclass(frozen=True)
class ChannelEffect:
    qber_delta: float
    fidelity_depression: float


def channel_disturbance_effect(scale: float, rng: np.random.Generator,
                               qber_baseline: float = 0.011) -> ChannelEffect:
    """Per-window channel interference: lands S3 QBER in the 8-10% band."""
    target_qber = rng.uniform(0.08, 0.10)
    delta = max(0.0, (target_qber - qber_baseline)) * scale
    # fidelity falls independently of the QBER coupling, to 0.85-0.90 at S3
    base_f = quantum.fidelity_from_qber(qber_baseline)
    target_f = rng.uniform(0.85, 0.90)
    depression = max(0.0, base_f - target_f) * scale
    return ChannelEffect(qber_delta=delta, fidelity_depression=depression)


def coordinated_rate_per_participant(total_rate: float, n_participants: int) -> float:
    if n_participants <= 0:
        raise ValueError("need at least one participant")
    return total_rate / n_participants
