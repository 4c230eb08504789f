"""Quantum service abstractions: channel math, key pools, tokens, IDS, Kak delivery.

Everything here is a functional model. Channels are characterised by a bit
error rate Q and a Bell-pair fidelity F; key material is an integer pool per
node-controller association; authentication is exact bookkeeping against
those pools rather than real cryptography.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Operating thresholds of the key-distribution model.
ABORT_QBER = 0.11        # key generation halts at or above this error rate
IDS_THRESHOLD = 0.025    # probe estimates above this raise an alarm
ENTANGLEMENT_FLOOR = 0.5  # fidelity below this means no usable entanglement

DEFAULT_ETA_SWAP = 0.5   # per-swap key-rate penalty


def binary_entropy(q: float) -> float:
    """Shannon entropy H2(q) = -q*log2(q) - (1-q)*log2(1-q), H2(0)=H2(1)=0."""
    if q < 0.0 or q > 1.0:
        raise DomainError(f"binary_entropy domain is [0,1], got {q}")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def secret_key_fraction(q: float, protocol: str = "BB84") -> float:
    """Asymptotic secret-key fraction r(Q) = max(0, 1 - 2*H2(Q)).

    Hard zero at and beyond the abort threshold. The protocol argument is
    accepted for BB84/E91 selection; both share the same curve.
    """
    if q < 0.0 or q > 0.5:
        raise DomainError(f"secret_key_fraction domain is [0,0.5], got {q}")
    if protocol not in ("BB84", "E91"):
        raise DomainError(f"unknown protocol {protocol!r}")
    if q >= ABORT_QBER:
        return 0.0
    return max(0.0, 1.0 - 2.0 * binary_entropy(q))


def distill_bbpssw(f: float) -> tuple[float, float]:
    """One recurrence round of BBPSSW distillation on Werner states.

    Returns (output fidelity, success probability). Each attempt consumes two
    input pairs, so the expected pair yield is p_success / 2.
    """
    if f <= 0.5 or f > 1.0:
        raise DomainError(f"distillation requires F in (0.5, 1], got {f}")
    w = (1.0 - f) / 3.0
    p_success = f * f + (2.0 / 3.0) * f * (1.0 - f) + 5.0 * w * w
    f_out = (f * f + w * w) / p_success
    return f_out, p_success


def swap_chain_qber(q_hop: float, hops: int) -> float:
    """End-to-end QBER of an entanglement-swap chain, linear in hop count."""
    if q_hop < 0.0 or q_hop > 0.5:
        raise DomainError(f"per-hop QBER domain is [0,0.5], got {q_hop}")
    if hops < 1:
        raise DomainError(f"hops must be >= 1, got {hops}")
    return min(0.5, hops * q_hop)


def key_rate_factor(q_hop: float, hops: int, eta_swap: float = DEFAULT_ETA_SWAP) -> float:
    """Key rate of an N-hop swap chain relative to a single hop.

    factor = eta_swap^(hops-1) * r(N*q) / r(q), clamped to [0,1]; zero when
    the single-hop fraction is already zero.
    """
    r1 = secret_key_fraction(q_hop)
    if r1 == 0.0:
        return 0.0
    rn = secret_key_fraction(swap_chain_qber(q_hop, hops))
    factor = (eta_swap ** (hops - 1)) * rn / r1
    return min(1.0, max(0.0, factor))


def fidelity_from_qber(q: float) -> float:
    """Baseline QBER/fidelity coupling F = 1 - 3Q (Werner channel)."""
    return max(0.0, 1.0 - 3.0 * q)


@dataclass
class QuantumLink:
    """Keyed association between one microgrid node and the controller.

    Rides alongside the classical route. `hops` is the entanglement-swap
    chain length spanning the association, which scales both error rate
    and refill rate. `abort_qber` is the operational halt threshold for
    key generation (the protocol's theoretical bound by default).
    """

    node: int
    base_keyrate_bps: float
    qber_baseline: float = 0.011
    hops: int = 1
    eta_swap: float = DEFAULT_ETA_SWAP
    abort_qber: float = ABORT_QBER
    attack_qber_delta: float = 0.0
    attack_fidelity_depression: float = 0.0
    key_pool_bits: int = 0
    generated_total_bits: int = 0
    consumed_total_bits: int = 0
    qber: float = field(init=False)
    fidelity: float = field(init=False)

    def __post_init__(self):
        self.qber = swap_chain_qber(self.qber_baseline, self.hops)
        self.fidelity = fidelity_from_qber(self.qber)

    def refresh_channel(self) -> None:
        """Recompute effective QBER and fidelity from baseline + attack terms."""
        clean = swap_chain_qber(self.qber_baseline, self.hops)
        self.qber = min(0.5, clean + self.attack_qber_delta)
        base_f = fidelity_from_qber(clean)
        self.fidelity = max(ENTANGLEMENT_FLOOR, base_f - self.attack_fidelity_depression)


def keypool_step(link: QuantumLink, dt: float) -> QuantumLink:
    """Advance key generation by dt seconds.

    Refill is gated on the link's abort threshold; the rate is the base rate
    scaled by the secret-key fraction at the current error rate and the
    swap-chain penalty. Counters satisfy generated - consumed == pool - initial.
    """
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if link.qber < link.abort_qber:
        rate = (
            link.base_keyrate_bps
            * secret_key_fraction(link.qber)
            * (link.eta_swap ** (link.hops - 1))
        )
        produced = int(math.floor(rate * dt))
        link.key_pool_bits += produced
        link.generated_total_bits += produced
    return link


def consume_key(link: QuantumLink, bits: int) -> bool:
    """Withdraw bits from the pool. Returns False (pool untouched) if short."""
    if bits <= 0:
        raise DomainError(f"bits must be positive, got {bits}")
    if link.key_pool_bits < bits:
        return False
    link.key_pool_bits -= bits
    link.consumed_total_bits += bits
    return True


@dataclass
class IdsState:
    """Per-association Ping-Pong intrusion detector state."""

    probe_interval_s: float = 4.0
    probe_sample_size: int = 200
    threshold: float = IDS_THRESHOLD
    last_estimate: float = 0.0
    alarm: bool = False


@dataclass(frozen=True)
class ProbeResult:
    estimate: float
    alarm: bool


def pingpong_probe(link: QuantumLink, ids: IdsState, rng: np.random.Generator) -> ProbeResult:
    """One Ping-Pong probe: sample the channel error rate and test against tau.

    Probes ride the control channel and consume no pool material.
    """
    n = ids.probe_sample_size
    if n < 1:
        raise DomainError("probe_sample_size must be >= 1")
    errors = int(rng.binomial(n, link.qber))
    estimate = errors / n
    alarm = estimate > ids.threshold
    ids.last_estimate = estimate
    ids.alarm = alarm
    return ProbeResult(estimate, alarm)


@dataclass
class QcaToken:
    """Single-use control-authentication credential bound to a key pool."""

    issuer: int
    audience: int
    nonce: int
    key_id: int
    valid_from: float
    valid_until: float
    genuine: bool = True   # False for forged envelopes with no pool backing
    used: bool = False
    payload_digest: int = 0


VERIFY_OK = "valid"
REJECT_NO_KEY = "no_key"
REJECT_REUSED = "reused"
REJECT_EXPIRED = "expired"
REJECT_TAMPERED = "tag_mismatch"


class TokenAuthority:
    """Issues and verifies tokens against the per-association key pools.

    Verification is model-exact: a token not derived from the genuine pair
    pool can never validate, and every token is single-use.
    """

    def __init__(self, links: dict[int, QuantumLink], token_bits: int = 256,
                 encryption_bits: int = 444, extra_bits: int = 0,
                 valid_window_s: float = 30.0):
        self.links = links
        self.token_bits = token_bits
        self.encryption_bits = encryption_bits
        self.extra_bits = extra_bits
        self.valid_window_s = valid_window_s
        self._next_key_id = 0

    def bits_per_message(self) -> int:
        return self.token_bits + self.encryption_bits + self.extra_bits

    def issue(self, issuer: int, audience: int, t_now: float,
              rng: np.random.Generator, payload_digest: int = 0) -> QcaToken | None:
        """Issue a token for issuer->audience, or None when the pool is short.

        The association pool is keyed by the microgrid-side endpoint; the
        controller draws from the same pool when it is the issuer.
        """
        node = issuer if issuer != 0 else audience
        link = self.links.get(node)
        if link is None:
            return None
        if not consume_key(link, self.bits_per_message()):
            return None
        key_id = self._next_key_id
        self._next_key_id += 1
        nonce = int(rng.integers(0, 2**62))
        return QcaToken(
            issuer=issuer,
            audience=audience,
            nonce=nonce,
            key_id=key_id,
            valid_from=t_now,
            valid_until=t_now + self.valid_window_s,
            payload_digest=payload_digest,
        )

    @staticmethod
    def forge(issuer: int, audience: int, t_now: float, payload_digest: int = 0) -> QcaToken:
        """An attacker-made envelope: structurally a token, backed by nothing."""
        return QcaToken(
            issuer=issuer,
            audience=audience,
            nonce=0,
            key_id=-1,
            valid_from=t_now,
            valid_until=t_now + 1e9,
            genuine=False,
            payload_digest=payload_digest,
        )

    def verify(self, token: QcaToken | None, claimed_identity: int,
               t_now: float, payload_digest: int = 0) -> str:
        if token is None or not token.genuine or token.issuer != claimed_identity:
            return REJECT_NO_KEY
        if token.used:
            return REJECT_REUSED
        if not (token.valid_from <= t_now <= token.valid_until):
            return REJECT_EXPIRED
        if token.payload_digest != payload_digest:
            return REJECT_TAMPERED
        token.used = True
        return VERIFY_OK


@dataclass(frozen=True)
class KakOutcome:
    success: bool
    fallback: bool
    added_latency_s: float
    attempts: int


def kak_three_stage_send(round_trip_s: float, stage_fail_prob: float,
                         rng: np.random.Generator) -> KakOutcome:
    """Three-pass direct secure delivery for top-priority messages.

    Each pass adds one link round-trip and succeeds independently with
    probability 1 - stage_fail_prob. A failed attempt is retried once; a
    second failure falls back to key-pool-authenticated delivery.
    """
    added = 0.0
    for attempt in (1, 2):
        ok = True
        for _ in range(3):
            added += round_trip_s
            if rng.random() < stage_fail_prob:
                ok = False
                break
        if ok:
            return KakOutcome(True, False, added, attempt)
    return KakOutcome(False, True, added, 2)
