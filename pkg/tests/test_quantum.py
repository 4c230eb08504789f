import numpy as np
import pytest

from qugrid.errors import DomainError
from qugrid.quantum import (ABORT_QBER, IdsState, KakOutcome, QuantumLink,
                            TokenAuthority, VERIFY_OK, REJECT_EXPIRED,
                            REJECT_NO_KEY, REJECT_REUSED, REJECT_TAMPERED,
                            binary_entropy, consume_key, distill_bbpssw,
                            fidelity_from_qber, kak_three_stage_send,
                            key_rate_factor, keypool_step, pingpong_probe,
                            secret_key_fraction, swap_chain_qber)

# Values frozen from a 50-digit mpmath evaluation of the closed forms.
H2_0011 = 0.0873519199163
SKF_0011 = 0.825296160167
BBPSSW_0967 = (0.9772636076, 0.956968)
BBPSSW_0978 = (0.9850075608, 0.9710968889)
KRF_002_H4 = 0.034102


# -------------------------------------------------------------------- entropy

def test_entropy_maximum():
    assert binary_entropy(0.5) == pytest.approx(1.0)


def test_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0


def test_entropy_high_precision_value():
    assert binary_entropy(0.011) == pytest.approx(H2_0011, abs=1e-10)


def test_entropy_domain():
    with pytest.raises(DomainError):
        binary_entropy(-0.01)
    with pytest.raises(DomainError):
        binary_entropy(1.01)


# -------------------------------------------------------- secret key fraction

def test_skf_noiseless():
    assert secret_key_fraction(0.0) == 1.0


def test_skf_operating_point():
    value = secret_key_fraction(0.011)
    assert value == pytest.approx(SKF_0011, abs=1e-10)
    assert 0.82 <= value <= 0.83


def test_skf_abort_threshold_zero():
    assert secret_key_fraction(0.11) <= 0.001
    assert secret_key_fraction(0.2) == 0.0
    assert secret_key_fraction(0.5) == 0.0


def test_skf_nonincreasing_then_zero():
    qs = np.linspace(0.0, 0.5, 201)
    values = [secret_key_fraction(float(q)) for q in qs]
    for a, b in zip(values, values[1:]):
        assert b <= a + 1e-12
    assert all(v == 0.0 for q, v in zip(qs, values) if q >= ABORT_QBER)


def test_skf_protocols_share_curve():
    for q in (0.0, 0.011, 0.05, 0.1):
        assert secret_key_fraction(q, "BB84") == secret_key_fraction(q, "E91")


def test_skf_domain():
    with pytest.raises(DomainError):
        secret_key_fraction(0.6)
    with pytest.raises(DomainError):
        secret_key_fraction(0.05, "B92")


# --------------------------------------------------------------- distillation

def test_distill_fixed_point():
    f_out, p = distill_bbpssw(1.0)
    assert f_out == pytest.approx(1.0)
    assert p == pytest.approx(1.0)


def test_distill_known_values():
    f_out, p = distill_bbpssw(0.967)
    assert f_out == pytest.approx(BBPSSW_0967[0], abs=1e-9)
    assert p == pytest.approx(BBPSSW_0967[1], abs=1e-9)
    f_out, p = distill_bbpssw(0.978)
    assert f_out == pytest.approx(BBPSSW_0978[0], abs=1e-9)


def test_distill_always_improves():
    for f in np.linspace(0.501, 0.999, 100):
        f_out, p = distill_bbpssw(float(f))
        assert f_out > f
        assert 0.0 < p <= 1.0


def test_distill_iteration_converges_to_one():
    f = 0.55
    for _ in range(60):
        f, _ = distill_bbpssw(f)
    assert f > 0.9999


def test_distill_domain():
    with pytest.raises(DomainError):
        distill_bbpssw(0.5)
    with pytest.raises(DomainError):
        distill_bbpssw(1.0001)


# ----------------------------------------------------------------- swap chain

def test_swap_single_hop_identity():
    assert swap_chain_qber(0.02, 1) == pytest.approx(0.02)


def test_swap_linear():
    assert swap_chain_qber(0.01, 3) == pytest.approx(0.03)


def test_swap_abort_crossing_at_six_hops():
    crossing = next(h for h in range(1, 10) if swap_chain_qber(0.02, h) >= 0.11)
    assert crossing == 6


def test_swap_clamped_at_half():
    assert swap_chain_qber(0.2, 5) == 0.5


def test_key_rate_factor_normalised_at_one_hop():
    for q in (0.01, 0.015, 0.02, 0.03):
        assert key_rate_factor(q, 1) == pytest.approx(1.0)


def test_key_rate_factor_known_value():
    assert key_rate_factor(0.02, 4) == pytest.approx(KRF_002_H4, abs=1e-5)


def test_key_rate_factor_below_ten_percent_beyond_three_hops():
    for q in (0.01, 0.015, 0.02, 0.03):
        for hops in range(4, 9):
            assert key_rate_factor(q, hops) < 0.10


def test_key_rate_factor_nonincreasing_in_hops():
    for q in (0.01, 0.02, 0.03):
        values = [key_rate_factor(q, h) for h in range(1, 9)]
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-12


def test_key_rate_factor_zero_when_single_hop_aborts():
    assert key_rate_factor(0.12, 1) == 0.0


# ------------------------------------------------------------------ key pools

def make_link(qber=0.0, rate=1000.0, pool=0):
    link = QuantumLink(node=1, base_keyrate_bps=rate, qber_baseline=qber,
                       key_pool_bits=pool)
    return link


def test_keypool_gated_above_abort():
    link = make_link(qber=0.12, pool=500)
    keypool_step(link, 10.0)
    assert link.key_pool_bits == 500


def test_keypool_noiseless_rate():
    link = make_link(qber=0.0, rate=1000.0)
    keypool_step(link, 10.0)
    assert link.key_pool_bits == 10_000


def test_keypool_operating_point_refill():
    link = make_link(qber=0.011, rate=1000.0)
    keypool_step(link, 10.0)
    assert abs(link.key_pool_bits - 8250) <= 10


def test_keypool_counter_identity():
    link = make_link(qber=0.011, rate=1000.0, pool=5000)
    initial = link.key_pool_bits
    keypool_step(link, 30.0)
    consume_key(link, 1234)
    keypool_step(link, 5.0)
    consume_key(link, 777)
    assert (link.generated_total_bits - link.consumed_total_bits
            == link.key_pool_bits - initial)
    assert link.key_pool_bits >= 0


def test_consume_key_ok_and_insufficient():
    link = make_link(pool=1000)
    assert consume_key(link, 700)
    assert link.key_pool_bits == 300
    assert not consume_key(link, 700)
    assert link.key_pool_bits == 300


def test_sustained_drain_reaches_zero_in_linear_time():
    link = make_link(qber=0.0, rate=100.0, pool=10_000)
    # consume 300 b/s against 100 b/s refill: net -200 b/s, empty by t=50
    t = 0
    while link.key_pool_bits >= 300:
        keypool_step(link, 1.0)
        consume_key(link, 300)
        t += 1
    assert t == pytest.approx(10_000 / 200, abs=2)


# ------------------------------------------------------------------ ping-pong

def test_probe_zero_error_never_alarms():
    link = make_link(qber=0.0)
    ids = IdsState(probe_sample_size=200)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert not pingpong_probe(link, ids, rng).alarm


def test_probe_alarm_power_at_high_qber():
    link = make_link(qber=0.09)
    ids = IdsState(probe_sample_size=200)
    rng = np.random.default_rng(1)
    alarms = sum(pingpong_probe(link, ids, rng).alarm for _ in range(2000))
    assert alarms / 2000 > 0.99  # binomial tail oracle: 0.9998


def test_probe_false_alarm_rate_at_operating_point():
    link = make_link(qber=0.011)
    ids = IdsState(probe_sample_size=200)
    rng = np.random.default_rng(2)
    alarms = sum(pingpong_probe(link, ids, rng).alarm for _ in range(5000))
    assert alarms / 5000 < 0.05  # binomial tail oracle: 0.0242


def test_probe_threshold_is_configurable():
    link = make_link(qber=0.09)
    lenient = IdsState(probe_sample_size=200, threshold=0.5)
    rng = np.random.default_rng(0)
    assert not any(pingpong_probe(link, lenient, rng).alarm for _ in range(100))


def test_keypool_abort_threshold_is_configurable():
    link = QuantumLink(node=1, base_keyrate_bps=1000.0, qber_baseline=0.06,
                       abort_qber=0.05)
    keypool_step(link, 10.0)
    assert link.key_pool_bits == 0  # halted below the default bound


def test_probe_alarm_monotone_in_qber():
    rng = np.random.default_rng(3)
    rates = []
    for q in (0.01, 0.03, 0.06, 0.09):
        link = make_link(qber=q)
        ids = IdsState(probe_sample_size=200)
        rates.append(sum(pingpong_probe(link, ids, rng).alarm
                         for _ in range(10_000)) / 10_000)
    assert rates == sorted(rates)


# --------------------------------------------------------------------- tokens

def make_authority(pool=10_000):
    links = {1: make_link(pool=pool)}
    return TokenAuthority(links, token_bits=256, encryption_bits=444), links[1]


def test_issue_consumes_pool():
    authority, link = make_authority(pool=10_000)
    token = authority.issue(1, 0, t_now=0.0, rng=np.random.default_rng(0))
    assert token is not None
    assert link.key_pool_bits == 10_000 - 700


def test_issue_insufficient_pool():
    authority, link = make_authority(pool=100)
    assert authority.issue(1, 0, 0.0, np.random.default_rng(0)) is None
    assert link.key_pool_bits == 100


def test_issue_distinct_nonces():
    authority, _ = make_authority()
    rng = np.random.default_rng(0)
    t1 = authority.issue(1, 0, 0.0, rng)
    t2 = authority.issue(1, 0, 0.0, rng)
    assert t1.nonce != t2.nonce


def test_verify_honest_token():
    authority, _ = make_authority()
    token = authority.issue(1, 0, 0.0, np.random.default_rng(0), payload_digest=99)
    assert authority.verify(token, 1, 1.0, payload_digest=99) == VERIFY_OK


def test_verify_rejects_forged_identity():
    authority, _ = make_authority()
    forged = TokenAuthority.forge(2, 0, 0.0)
    assert authority.verify(forged, 2, 1.0) == REJECT_NO_KEY


def test_verify_rejects_reuse():
    authority, _ = make_authority()
    token = authority.issue(1, 0, 0.0, np.random.default_rng(0))
    assert authority.verify(token, 1, 1.0) == VERIFY_OK
    assert authority.verify(token, 1, 2.0) == REJECT_REUSED


def test_verify_rejects_expired():
    authority, _ = make_authority()
    token = authority.issue(1, 0, 0.0, np.random.default_rng(0))
    assert authority.verify(token, 1, 1e6) == REJECT_EXPIRED


def test_verify_rejects_tamper():
    authority, _ = make_authority()
    token = authority.issue(1, 0, 0.0, np.random.default_rng(0), payload_digest=5)
    assert authority.verify(token, 1, 1.0, payload_digest=6) == REJECT_TAMPERED


def test_verify_rejects_identity_mismatch():
    authority, _ = make_authority()
    token = authority.issue(1, 0, 0.0, np.random.default_rng(0))
    assert authority.verify(token, 2, 1.0) == REJECT_NO_KEY


# ------------------------------------------------------------------------ kak

def test_kak_certain_success_three_round_trips():
    outcome = kak_three_stage_send(0.01, 0.0, np.random.default_rng(0))
    assert outcome == KakOutcome(True, False, pytest.approx(0.03), 1)


def test_kak_success_rate_matches_cube():
    rng = np.random.default_rng(4)
    attempts = successes = 0
    for _ in range(20_000):
        outcome = kak_three_stage_send(0.001, 0.013, rng)
        attempts += outcome.attempts
        successes += outcome.success
    assert successes / attempts == pytest.approx(0.987 ** 3, abs=0.006)
    assert successes / attempts > 0.95


def test_kak_certain_failure_falls_back():
    outcome = kak_three_stage_send(0.01, 1.0, np.random.default_rng(0))
    assert not outcome.success
    assert outcome.fallback
    assert outcome.attempts == 2


# ------------------------------------------------------------------- fidelity

def test_fidelity_qber_coupling():
    assert fidelity_from_qber(0.011) == pytest.approx(0.967)
    assert fidelity_from_qber(0.0) == 1.0


def test_channel_refresh_applies_attack_terms():
    link = make_link(qber=0.011)
    link.attack_qber_delta = 0.079
    link.attack_fidelity_depression = 0.09
    link.refresh_channel()
    assert link.qber == pytest.approx(0.09)
    assert 0.85 <= link.fidelity <= 0.90
    link.attack_fidelity_depression = 5.0  # absurd depression still floored
    link.refresh_channel()
    assert link.fidelity == 0.5
