import numpy as np
import pytest

from qugrid.detection import (ChallengeRecord, EwmaTracker, MeasurementSet,
                              WlsHarness, chi2_bad_data, detection_scores,
                              evaluate_challenge, measurement_map,
                              measurement_sigmas, schedule_challenge,
                              witness_matrix, wls_estimate)
from qugrid.errors import DomainError, RankDeficient
from qugrid.network import TopologyKind, build_topology


def star_setup(n=5):
    topo = build_topology(TopologyKind.STAR, n)
    h = measurement_map(topo)
    sigma = measurement_sigmas(topo, 4.0, 2.0)
    return topo, h, sigma


# ------------------------------------------------------------------------ wls

def test_wls_exact_fit_gives_zero_objective():
    topo, h, sigma = star_setup()
    x = np.array([1.0, -2.0, 3.0, 0.5])
    m = MeasurementSet(z=h @ x, sigma=sigma, timestamp=0.0, sources=(1, 2, 3, 4))
    x_hat, j, dof = wls_estimate(m, h)
    assert j == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(x_hat, x)
    assert dof == h.shape[0] - h.shape[1]


def test_wls_objective_mean_matches_dof():
    # with noise matching sigma, E[J] equals the degrees of freedom
    topo, h, sigma = star_setup()
    rng = np.random.default_rng(0)
    x = np.array([10.0, 20.0, 30.0, 40.0])
    js = []
    for _ in range(1000):
        z = h @ x + rng.standard_normal(h.shape[0]) * sigma
        m = MeasurementSet(z=z, sigma=sigma, timestamp=0.0, sources=(1, 2, 3, 4))
        _, j, dof = wls_estimate(m, h)
        js.append(j)
    assert np.mean(js) == pytest.approx(dof, rel=0.1)


def test_wls_minimizer_beats_perturbations():
    topo, h, sigma = star_setup()
    rng = np.random.default_rng(1)
    z = rng.standard_normal(h.shape[0]) * 5.0
    m = MeasurementSet(z=z, sigma=sigma, timestamp=0.0, sources=(1, 2, 3, 4))
    x_hat, j, _ = wls_estimate(m, h)

    def objective(x):
        r = (z - h @ x) / sigma
        return float(r @ r)

    for _ in range(200):
        assert objective(x_hat + rng.standard_normal(4) * 0.5) >= j - 1e-9


def test_wls_biased_measurement_crosses_threshold():
    topo, h, sigma = star_setup()
    rng = np.random.default_rng(2)
    x = np.zeros(4)
    flagged = 0
    for _ in range(200):
        z = h @ x + rng.standard_normal(h.shape[0]) * sigma
        z[0] += 10 * sigma[0]  # one reading biased by 10 sigma
        m = MeasurementSet(z=z, sigma=sigma, timestamp=0.0, sources=(1, 2, 3, 4))
        _, j, dof = wls_estimate(m, h)
        flagged += chi2_bad_data(j, dof, 0.05)
    assert flagged / 200 > 0.99


def test_wls_rank_deficient_raises():
    m = MeasurementSet(z=np.zeros(2), sigma=np.ones(2), timestamp=0.0, sources=(1,))
    with pytest.raises(RankDeficient):
        wls_estimate(m, np.zeros((2, 2)))
    with pytest.raises(RankDeficient):
        wls_estimate(MeasurementSet(z=np.zeros(2), sigma=np.ones(2),
                                    timestamp=0.0, sources=(1,)),
                     np.ones((2, 2)))


# ----------------------------------------------------------------- chi-square

def test_chi2_no_flag_at_zero():
    assert not chi2_bad_data(0.0, 10, 0.05)


def test_chi2_boundary_value():
    # quantile(0.95, dof=10) = 18.307 from the scipy oracle
    assert chi2_bad_data(18.31, 10, 0.05)
    assert not chi2_bad_data(18.30, 10, 0.05)


def test_chi2_clean_flag_rate_respects_alpha():
    rng = np.random.default_rng(3)
    dof = 8
    flags = sum(chi2_bad_data(float(rng.chisquare(dof)), dof, 0.05)
                for _ in range(1000))
    assert flags / 1000 <= 0.05 + 0.02


def test_chi2_domain():
    with pytest.raises(DomainError):
        chi2_bad_data(1.0, 0, 0.05)
    with pytest.raises(DomainError):
        chi2_bad_data(1.0, 5, 1.5)


# ------------------------------------------------------------ witness metering

def test_witness_star_meters_each_node():
    topo = build_topology(TopologyKind.STAR, 5)
    assert np.allclose(witness_matrix(topo), np.eye(4))


def test_witness_rows_conserve_flow():
    for kind in TopologyKind:
        n = 8
        topo = build_topology(kind, n)
        w = witness_matrix(topo)
        # every node's flow fully accounted across the controller's links
        assert np.allclose(w.sum(axis=0), np.ones(n - 1))


def test_witness_mesh_blurrier_than_star():
    star = measurement_sigmas(build_topology(TopologyKind.STAR, 8), 4.0, 2.0)
    mesh = measurement_sigmas(build_topology(TopologyKind.MESH, 8), 4.0, 2.0)
    assert mesh[7:].max() > star[7:].max()


# ----------------------------------------------------------------- challenges

def test_schedule_challenge_exponential_mean():
    rng = np.random.default_rng(4)
    draws = [schedule_challenge(0.0, 30.0, rng) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(30.0, abs=1.0)


def test_schedule_challenge_disabled():
    assert schedule_challenge(0.0, 0.0, np.random.default_rng(0)) is None


def test_schedule_challenge_deterministic_under_seed():
    a = [schedule_challenge(0.0, 30.0, np.random.default_rng(9)) for _ in range(5)]
    b = [schedule_challenge(0.0, 30.0, np.random.default_rng(9)) for _ in range(5)]
    assert a == b


def test_ewma_lambda_one_tracks_exactly():
    tracker = EwmaTracker(lam=1.0, k_sigma=5.0, warmup=0)
    record, tracker = evaluate_challenge(4.0, 3.0, tracker)
    assert tracker.mean == pytest.approx(1.0)
    record, tracker = evaluate_challenge(5.0, 3.0, tracker)
    assert tracker.mean == pytest.approx(2.0)
    record, tracker = evaluate_challenge(3.5, 3.0, tracker)
    assert tracker.mean == pytest.approx(0.5)


def test_challenge_clean_and_compromised_verdicts():
    tracker = EwmaTracker(lam=0.2, k_sigma=4.0, warmup=0, sigma_floor=1.0)
    for _ in range(50):
        _, tracker = evaluate_challenge(1.0, 0.7, tracker)
    clean, tracker = evaluate_challenge(1.2, 0.9, tracker)
    assert clean.verdict == "clean"
    hot, tracker = evaluate_challenge(50.0, 1.0, tracker)
    assert hot.verdict == "compromised"


def test_flagged_scores_do_not_poison_baseline():
    tracker = EwmaTracker(lam=0.2, k_sigma=4.0, warmup=0, sigma_floor=1.0)
    for _ in range(30):
        _, tracker = evaluate_challenge(1.0, 0.8, tracker)
    baseline = tracker.mean
    for _ in range(5):
        record, tracker = evaluate_challenge(60.0, 1.0, tracker)
        assert record.verdict == "compromised"
    assert tracker.mean == pytest.approx(baseline)


# --------------------------------------------------------------------- scores

def rec(target, verdict):
    return ChallengeRecord(target=target, issued_at=0.0, expected=0.0,
                           reported=0.0, score=0.0, verdict=verdict)


def test_scores_vacuous_case():
    scores = detection_scores([rec(1, "clean")], frozenset())
    assert scores.precision == 1.0
    assert scores.recall == 1.0
    assert scores.vacuous


def test_scores_perfect():
    records = [rec(1, "compromised"), rec(2, "compromised"), rec(3, "clean")]
    scores = detection_scores(records, frozenset({1, 2}))
    assert scores.precision == 1.0
    assert scores.recall == 1.0
    assert not scores.vacuous


def test_scores_partial_recall_and_false_accusation():
    records = [rec(1, "compromised"), rec(4, "compromised")]
    scores = detection_scores(records, frozenset({1, 2}))
    assert scores.precision == pytest.approx(0.5)
    assert scores.recall == pytest.approx(0.5)


# ------------------------------------------------------------------- harness

def test_harness_clean_rate_bounded():
    topo = build_topology(TopologyKind.STAR, 5)
    harness = WlsHarness(topology=topo, sigma_injection_kw=4.0,
                         sigma_witness_kw=2.0, alpha=0.05)
    rng = np.random.default_rng(5)
    true = np.array([5.0, -3.0, 2.0, 0.0])
    for _ in range(1000):
        believed = true + rng.standard_normal(4) * 3.0  # within modeled sigma
        harness.run_once(believed, true, rng, 0.0, in_attack_window=False)
    assert harness.clean_flag_rate <= 0.07
