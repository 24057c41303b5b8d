"""Acceptance criteria, one test each at the stated tolerance.

Every test records a one-line verdict; the lines are printed in the
terminal summary (and by ``python tests/test_acceptance.py``).
"""

import itertools
import time
from fractions import Fraction as F

import numpy as np
import pytest

import commitment_props
from conftest import ACCEPTANCE
from shelby_audit import kernel
from shelby_audit.cli import scenario_calibrate
from shelby_audit.config import ScenarioConfig, load_config, shipped_config
from shelby_audit.equilibrium import coalition_best_deviation, verify_nash, verify_uniqueness
from shelby_audit.model import (
    CoalitionSpec,
    ReportRule,
    check_conditions,
    collusive_profile,
    dishonest_profile,
    expected_utility,
    honest_profile,
)
from shelby_audit.simulator import run_simulation


def calibration():
    return load_config(shipped_config()).params


def record(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    assert ok, ACCEPTANCE[number]


def zero_noise_setting():
    return calibration().replace(n=7, p_s=1, epsilon=0).exact()


def coalitions(n, max_size):
    for size in range(1, max_size + 1):
        yield from (frozenset(c) for c in itertools.combinations(range(n), size))


def test_criterion_1_no_inspection_uniqueness():
    p = calibration().replace(p_a=0, n=4)
    t0 = time.perf_counter()
    report = verify_uniqueness(p, 4)
    elapsed = time.perf_counter() - t0
    ok = report.labels == ["dishonest"] and elapsed < 10
    record(1, ok, f"equilibria={report.labels}, {elapsed:.2f}s < 10s")


def test_criterion_2_inspection_threshold():
    p = calibration().exact()
    threshold = (1 - p.p_a) / p.p_a * p.r_a
    above = verify_nash(dishonest_profile(p.n), p.replace(sigma_a=threshold * (1 + F(1, 10**6))), exact=True)
    below = verify_nash(dishonest_profile(p.n), p.replace(sigma_a=threshold * (1 - F(1, 10**6))), exact=True)
    witness = above.witness_actions() if not above.is_nash else set()
    ok = (not above.is_nash) and (False, ReportRule.ALWAYS_ZERO) in witness and below.is_nash
    record(2, ok, f"above: is_nash={above.is_nash} witness={sorted((a, r.name) for a, r in witness)}; "
                  f"below: is_nash={below.is_nash}")


def test_criterion_3_calibrated_honest_uniqueness():
    p = calibration()
    assert p.epsilon == F(1, 100)
    t0 = time.perf_counter()
    cond = check_conditions(p)
    rhs = float(cond["i"].rhs)
    nash = verify_nash(honest_profile(p.n), p, exact=True)
    unique = verify_uniqueness(p.replace(n=4), 4)
    elapsed = time.perf_counter() - t0
    ok = (
        all(cond[c].satisfied for c in ("i", "ii", "iii"))
        and f"{rhs:.4g}" == "0.0525" and round(rhs, 5) == 0.05250
        and nash.is_nash
        and unique.labels == ["honest"]
        and elapsed < 60
    )
    record(3, ok, f"(i)-(iii) hold, rhs(i)={rhs:.5f}, honest nash={nash.is_nash}, "
                  f"equilibria={unique.labels}, {elapsed:.2f}s < 60s")


def test_criterion_4_commitment_gain():
    p = zero_noise_setting()
    parts, ok = [], True
    for size in (2, 3):
        t0 = time.perf_counter()
        r = coalition_best_deviation(CoalitionSpec(frozenset(range(size)), commitment=True), p)
        elapsed = time.perf_counter() - t0
        target = size * (size - 1) * p.c_a
        equal = abs(r.gain - target) <= F(1, 10**9) * target
        ok &= equal and r.gain <= size * size * p.c_a and elapsed < 120
        parts.append(f"|J|={size}: gain={float(r.gain / p.c_a):g}c_a vs {size * (size - 1)}c_a, "
                     f"bound {size * size}c_a, {elapsed:.2f}s")
    record(4, ok, "; ".join(parts))


def test_criterion_5_no_commitment_member_loses():
    p = zero_noise_setting()
    violating = []
    for members in coalitions(p.n, 3):
        r = coalition_best_deviation(CoalitionSpec(members), p)
        if r.strictly_improving_exists:
            violating.append((sorted(members), float(min(r.maxmin_member_gains) / p.c_a)))
    total = sum(1 for _ in coalitions(p.n, 3))
    detail = f"{total - len(violating)}/{total} coalitions have a member with gain <= 0"
    if violating:
        detail += f"; e.g. {violating[0][0]} all gain >= {violating[0][1]:g}c_a"
    record(5, not violating, detail)


def _false_one_slashes(extension_mode):
    p = calibration().replace(n=7, p_s=1, epsilon=F(1, 100), p_a=F(1, 2))
    spec = CoalitionSpec(frozenset({0, 1, 2}), commitment=True, extension_mode=extension_mode)
    s = run_simulation(p, collusive_profile(p.n, spec.members), 10_000, coalition=spec)
    totals = s.totals()
    members = sorted(spec.members)
    return int(totals["false_ones"][members].sum()), int(totals["inspection_fails"][members].sum())


def test_criterion_6_extension_mode():
    p = zero_noise_setting()
    failing = []
    for members in coalitions(p.n, 3):
        r = coalition_best_deviation(CoalitionSpec(members, commitment=True, extension_mode=True), p)
        if not r.strong_condition_holds:
            failing.append(sorted(members))
    total = sum(1 for _ in coalitions(p.n, 3))
    ext_false, ext_slashed = _false_one_slashes(True)
    base_false, base_slashed = _false_one_slashes(False)
    mc_ok = ext_false > 0 and ext_slashed > 0 and base_false > 0 and base_slashed == 0
    detail = (f"strong check {total - len(failing)}/{total}; MC false-1 slashes extension "
              f"{ext_slashed} (of {ext_false} false 1s), base {base_slashed} (of {base_false})")
    record(6, not failing and mc_ok, detail)


def test_criterion_7_calibration_table():
    r, _, _ = scenario_calibrate(ScenarioConfig(params=calibration()))
    got = {k: F(r[k]["exact"]) for k in ("storage_reward_to_cost", "false_one_expected_penalty",
                                           "cheating_disadvantage_ratio", "reconstruction_ratio")}
    want = {"storage_reward_to_cost": 6, "false_one_expected_penalty": F(1, 5),
            "cheating_disadvantage_ratio": 400_000, "reconstruction_ratio": 16}
    record(7, got == want, ", ".join(f"{k}={v}" for k, v in got.items()))


def test_criterion_8_monte_carlo_oracle():
    # frequent inspections keep the sample mean near-normal (see README on rare events)
    base = calibration().replace(n=3, p_a=F(1, 100))
    assert base.epsilon == F(1, 100)
    worst, ok = 0.0, True
    for name, make in (("honest", honest_profile), ("dishonest", dishonest_profile)):
        for seed in range(1, 6):
            p = base.replace(seed=seed)
            profile = make(p.n)
            s = run_simulation(p, profile, 10_000)
            analytic = np.array([float(expected_utility(i, profile, p).total) for i in range(p.n)])
            z = np.abs(s.mean() - analytic) / np.maximum(s.std_error(), 1e-300)
            worst = max(worst, float(z.max()))
            ok &= bool((np.abs(s.mean() - analytic) <= 3 * s.std_error() + 1e-12).all())
    record(8, ok, f"honest+dishonest x 5 seeds x 10000 epochs, worst |z|={worst:.2f} <= 3, backend={kernel.BACKEND}")


def test_criterion_9_commitment_properties():
    failures = commitment_props.run_all(10_000, seed=9)
    record(9, not any(failures.values()), ", ".join(f"{k}: {v} failures" for k, v in failures.items()) + " over 10000 cases")


if __name__ == "__main__":
    import sys

    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            pass
    for number in sorted(ACCEPTANCE):
        print(ACCEPTANCE[number])
    sys.exit(0 if all("PASS" in line for line in ACCEPTANCE.values()) else 1)
