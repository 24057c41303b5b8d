from fractions import Fraction as F

import numpy as np
import pytest

from conftest import small_params
from shelby_audit import _prng
from shelby_audit.model import (
    HONEST_PAIR,
    SKIP_ONE,
    CoalitionSpec,
    StorageMode,
    Strategy,
    collusive_profile,
    dishonest_profile,
    expected_utility,
    extra_audit_count,
    honest_profile,
)
from shelby_audit.simulator import (
    Network,
    ReportMatrix,
    ResponseStatus,
    SimulationConfigError,
    aggregate_scores,
    assign_audits,
    collect_responses,
    run_epoch,
    run_inspections,
    run_simulation,
    submit_reports,
)

# chi-square critical value, 7 degrees of freedom, p = 0.001
CHI2_7DF_P001 = 24.322


def textbook(**kw):
    base = dict(n=3, r_s=30, c_s=5, r_a=5, c_a=1, c_read=1, p_s=1, p_a=0, sigma_s=10, sigma_a=1000,
                epsilon=0, c_max=4, k=1)
    base.update(kw)
    return small_params(**base)


def _phase(p, profile, epoch=0):
    p = p.inexact()
    net = Network(p)
    streams = _prng.EpochStreams(p.seed, epoch)
    assignment = assign_audits(p, epoch)
    responses, recon = collect_responses(assignment, profile, p, streams, net)
    return net, streams, assignment, responses, recon


# ---------------------------------------------------------------- assignment


def test_assignment_shape_and_determinism():
    p = small_params(p_s=4, n=5, chunks=6)
    a = assign_audits(p, 3)
    assert len(a.entries) == 20
    assert all(len(a.for_auditee(i)) == 4 for i in range(5))
    assert all(0 <= e.chunk_index < 6 for e in a.entries)
    assert a == assign_audits(p, 3)
    assert a != assign_audits(p, 4)


def test_chunk_choice_uniform():
    p = small_params(p_s=2, n=3, chunks=8)
    hist = np.zeros(8)
    for epoch in range(10_000):
        for e in assign_audits(p, epoch).entries:
            hist[e.chunk_index] += 1
    expected = hist.sum() / 8
    chi2 = ((hist - expected) ** 2 / expected).sum()
    assert chi2 < CHI2_7DF_P001


# ---------------------------------------------------------------- responses and reports


def test_all_honest_noise_free_responses_valid():
    _, _, _, responses, _ = _phase(small_params(epsilon=0), honest_profile(5))
    assert all(r.status is ResponseStatus.VALID for r in responses.values())


def test_dropped_auditee_is_missing_and_reported_zero():
    p = small_params(epsilon=0)
    profile = honest_profile(5)
    profile[2] = profile[2].with_mode(StorageMode.DROP)
    net, _, _, responses, _ = _phase(p, profile)
    assert all(r.status is ResponseStatus.MISSING for (j, i, m), r in responses.items() if i == 2)
    reports, _ = submit_reports(responses, profile, p, net)
    assert all(reports.effective(j, 2, m) == 0 for j in range(5) if j != 2 for m in range(p.p_s))


def test_noise_makes_honest_auditor_report_zero():
    p = small_params(epsilon=0.5, p_s=3)
    profile = honest_profile(5)
    net, _, _, responses, _ = _phase(p, profile)
    reports, _ = submit_reports(responses, profile, p, net)
    assert any(r.status is ResponseStatus.INVALID for r in responses.values())
    for (j, i, m), r in responses.items():
        assert reports.effective(j, i, m) == int(r.status is ResponseStatus.VALID)


def test_dishonest_auditor_reports_one_on_missing():
    p = small_params()
    profile = dishonest_profile(5)
    net, _, _, responses, _ = _phase(p, profile)
    reports, audits = submit_reports(responses, profile, p, net)
    assert all(r.status is ResponseStatus.MISSING for r in responses.values())
    assert all(reports.effective(j, i, m) == 1 for (j, i, m) in responses)
    assert audits == (0,) * 5


def test_reconstruction_cost_example():
    p = small_params(n=12, p_s=4, k=10, c_read=2, c_s=5, epsilon=0)
    profile = honest_profile(12)
    profile[0] = profile[0].with_mode(StorageMode.RECONSTRUCT)
    ledger = run_epoch(p, profile, 0)
    assert ledger.reconstructions[0] == 4
    assert ledger.utilities[0].reconstruction_cost == 80
    assert all(r.reconstructed for (j, i, m), r in ledger.responses.items() if i == 0)


def test_infeasible_reconstruction_is_missing_and_free():
    p = small_params(n=5, k=10)
    profile = honest_profile(5)
    profile[0] = profile[0].with_mode(StorageMode.RECONSTRUCT)
    ledger = run_epoch(p, profile, 0)
    assert ledger.reconstructions[0] == 0
    assert ledger.utilities[0].reconstruction_cost == 0
    assert all(r.status is ResponseStatus.MISSING for (j, i, m), r in ledger.responses.items() if i == 0)


# ---------------------------------------------------------------- aggregation


def _matrix(rows, p_s=1):
    n = len(rows) + 1
    bits = [[[0] * p_s for _ in range(n)] for _ in range(n)]
    for j, bit in enumerate(rows, start=1):
        bits[j][0][0] = bit
    return ReportMatrix(tuple(tuple(tuple(v) for v in r) for r in bits), (True,) * n)


def test_strict_majority():
    _, scores = aggregate_scores(_matrix([1, 1, 0]), small_params(n=4, p_s=1))
    assert scores[0] == 1
    _, scores = aggregate_scores(_matrix([1, 1, 0, 0]), small_params(n=5, p_s=1))
    assert scores[0] == 0


def test_unsubmitted_reports_read_as_zero():
    m = _matrix([1, 1, 1])
    m = ReportMatrix(m.bits, (True, False, False, True))
    _, scores = aggregate_scores(m, small_params(n=4, p_s=1))
    assert scores[0] == 0


def test_score_and_alpha_arithmetic():
    s = F(3, 4)
    assert 1 - s**2 == F(7, 16)
    assert extra_audit_count(0, 4, 50) == 50
    assert extra_audit_count(4, 4, 50) == 0
    assert extra_audit_count(4, 5, 100) == 36


# ---------------------------------------------------------------- inspections


def test_extension_mode_requires_commitments():
    p = small_params()
    profile = honest_profile(5)
    net, streams, _, responses, _ = _phase(p, profile)
    reports, _ = submit_reports(responses, profile, p, net)
    with pytest.raises(SimulationConfigError):
        run_inspections(reports, responses, p.inexact(), streams, net, profile, extension_mode=True)


def _noisy_collusion(extension):
    p = small_params(epsilon=0.5, p_a=1, p_s=4)
    spec = CoalitionSpec({0, 1}, commitment=True, extension_mode=extension)
    profile = collusive_profile(5, spec.members)
    return [run_epoch(p, profile, e, coalition=spec) for e in range(5)]


def test_furnished_proof_passes_in_base_mode():
    ledgers = _noisy_collusion(False)
    colluder = [x for led in ledgers for x in led.inspections if x.auditor in (0, 1) and x.auditee in (0, 1)]
    assert any(x.furnished for x in colluder)
    assert all(x.passed for x in colluder)


def test_furnished_proof_fails_in_extension_mode():
    ledgers = _noisy_collusion(True)
    false_ones = [
        x for led in ledgers for x in led.inspections
        if x.auditor in (0, 1) and x.auditee in (0, 1)
        and led.responses[(x.auditor, x.auditee, x.instance)].status is not ResponseStatus.VALID
    ]
    assert false_ones and not any(x.passed for x in false_ones)
    assert all(led.response_commitments is not None for led in ledgers)


def test_certain_inspection_of_honest_reports_never_slashes():
    p = small_params(epsilon=0, p_a=1)
    led = run_epoch(p, honest_profile(5), 0)
    assert led.inspections and all(x.passed for x in led.inspections)
    assert all(s["inspection_count"] == 0 and s["storage_count"] == 0 for s in led.slashes)


# ---------------------------------------------------------------- settlement


def test_settlement_examples():
    led = run_epoch(textbook(), honest_profile(3), 0)
    assert [u.total for u in led.utilities] == [33, 33, 33]
    led = run_epoch(textbook(), dishonest_profile(3), 0)
    assert [u.total for u in led.utilities] == [40, 40, 40]
    led = run_epoch(textbook(p_a=1), dishonest_profile(3), 0)
    assert all(u.total < 0 for u in led.utilities)


def test_conservation():
    p = small_params(epsilon=0.3, p_a=0.5)
    profile = honest_profile(5)
    profile[1] = Strategy.uniform(5, StorageMode.DROP, SKIP_ONE)
    for u in run_epoch(p, profile, 1).utilities:
        parts = u.storage_reward + u.audit_reward - u.storage_cost - u.audit_cost
        parts -= u.reconstruction_cost + u.inspection_slash + u.storage_slash
        assert u.total == parts


def test_extra_audits_for_zero_score():
    p = small_params(c_max=50, sigma_s=3)
    profile = honest_profile(5)
    profile[0] = Strategy.uniform(5, StorageMode.DROP, HONEST_PAIR)
    led = run_epoch(p, profile, 0)
    assert led.scores[0] == 0
    assert len(led.extra_audits[0]) == 50
    assert led.utilities[0].storage_slash == 150


def test_no_slash_when_honest_and_noise_free():
    for seed in range(5):
        s = run_simulation(small_params(epsilon=0, p_a=1, seed=seed), honest_profile(5), 200)
        assert s.totals()["inspection_fails"].sum() == 0
        assert s.totals()["extra_fails"].sum() == 0


def test_score_bounds():
    s = run_simulation(small_params(epsilon=0.4), honest_profile(5), 200)
    assert (s.scores >= 0).all() and (s.scores <= 1).all()


# ---------------------------------------------------------------- summaries


def test_single_epoch_summary_matches_ledger():
    p = small_params(epsilon=0)
    led = run_epoch(p, honest_profile(5), 0)
    s = run_simulation(p, honest_profile(5), 1)
    assert s.mean().tolist() == [u.total for u in led.utilities]


def test_determinism():
    p = small_params(epsilon=0.1)
    a = run_simulation(p, honest_profile(5), 300)
    b = run_simulation(p, honest_profile(5), 300)
    assert np.array_equal(a.counts, b.counts)
    c = run_simulation(p.replace(seed=p.seed + 1), honest_profile(5), 300)
    assert not np.array_equal(a.counts, c.counts)


def test_summary_serialisation():
    s = run_simulation(small_params(), honest_profile(5), 3)
    data = s.to_json()
    assert set(data) >= {"mean", "variance", "slash_counts", "score_trajectories"}
    assert s.utilities_csv().count("\n") == 1 + 3 * 5


def _within(summary, profile, p, furnishers=()):
    analytic = np.array([float(expected_utility(i, profile, p, furnishers=furnishers).total) for i in range(p.n)])
    return np.abs(summary.mean() - analytic) <= 3 * summary.std_error() + 1e-12


# Settings where every utility component occurs often enough for the sample
# standard error to be a valid error bar (see rare-event note in the README).
MC_SETTINGS = {
    "calibration_n3": lambda cal: cal.replace(n=3),
    "noisy_n5": lambda cal: small_params(epsilon=F(1, 10), p_a=F(3, 10), k=2),
}


@pytest.mark.parametrize("setting", sorted(MC_SETTINGS))
@pytest.mark.parametrize("name", ["honest", "dishonest", "collusive", "reconstruct"])
def test_monte_carlo_matches_analytic(calibration, setting, name):
    p = MC_SETTINGS[setting](calibration)
    spec = None
    if name == "honest":
        profile = honest_profile(p.n)
    elif name == "dishonest":
        profile = dishonest_profile(p.n)
    elif name == "collusive":
        spec = CoalitionSpec({0, 1}, commitment=True)
        profile = collusive_profile(p.n, spec.members)
        p = p.replace(p_a=F(1, 2))
    else:
        p = p.replace(k=1)
        profile = honest_profile(p.n)
        profile[0] = profile[0].with_mode(StorageMode.RECONSTRUCT)
    summary = run_simulation(p, profile, 10_000, coalition=spec)
    furnishers = spec.members if spec else ()
    assert _within(summary, profile, p, furnishers).all()


def test_per_pair_audit_utility(calibration):
    p = calibration
    s = run_simulation(p, honest_profile(p.n), 10_000)
    per_pair = (s.utilities["audit_reward"] - s.utilities["audit_cost"]) / (p.p_s * (p.n - 1))
    mean = per_pair.mean(axis=0)
    se = per_pair.std(axis=0, ddof=1) / np.sqrt(s.epochs)
    target = float((1 - p.epsilon) * p.r_a - p.c_a)
    assert (np.abs(mean - target) <= 3 * se).all()
