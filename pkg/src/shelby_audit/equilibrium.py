"""Best responses, Nash and uniqueness checks, and coalition deviation search.

Expected utility is additive across auditees once the storage mode is
fixed, so a unilateral best response needs only 3 storage modes times an
independent choice of pair action per peer. Coalition joint maxima are
exact for the same reason, taken one auditee at a time. Max-min searches
(is there a deviation every member strictly prefers?) do not decompose.
They use an exhaustive numpy grid when it is small enough and otherwise
fall back to coordinate ascent.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import (
    HONEST_PAIR,
    PAIR_ACTIONS,
    CoalitionSpec,
    HypothesisError,
    PairAction,
    ParamError,
    ProtocolParams,
    ReportRule,
    StorageMode,
    Strategy,
    check_conditions,
    expected_utility,
    honest_profile,
    pair_breakdown,
    report_one_probability,
    serving,
    storage_breakdown,
)

__all__ = [
    "CoalitionSpec",
    "DeviationReport",
    "HypothesisError",
    "NashReport",
    "StrongEquilibriumReport",
    "UniquenessReport",
    "best_response",
    "coalition_best_deviation",
    "verify_nash",
    "verify_strong_equilibrium",
    "verify_uniqueness",
]

NASH_TOL = 1e-12
STRICT_TOL = 1e-12
BOUND_RTOL = 1e-9
EXACT_SEARCH_LIMIT = 2**20
RESTARTS = 64
MAX_UNIQUENESS_N = 6
MAX_STRONG_N = 9

MODES = (StorageMode.STORE, StorageMode.DROP, StorageMode.RECONSTRUCT)


def _tolerance(params: ProtocolParams, tol):
    if tol is not None:
        return tol
    return 0 if params.is_exact else NASH_TOL


@lru_cache(maxsize=65536)
def _pair_value(action: PairAction, serves: bool, params: ProtocolParams, furnish: bool = False):
    return pair_breakdown(action, serves, params, furnish=furnish).total


@lru_cache(maxsize=65536)
def _storage_value(mode: StorageMode, serves: bool, incoming: tuple, params: ProtocolParams):
    return storage_breakdown(mode, serves, incoming, params).total


def _canonical(action: PairAction) -> PairAction:
    if not action.audit and action.report_rule is ReportRule.TRUTHFUL:
        return PairAction(False, ReportRule.ALWAYS_ZERO)
    return action


# ---------------------------------------------------------------- unilateral


def best_response(i: int, profile: Sequence[Strategy], params: ProtocolParams):
    """Exact best response of SP ``i``; returns ``(strategy, gain)``.

    Ties keep the current choice, so a zero gain returns ``profile[i]``.
    """
    n = params.n
    me = profile[i]
    current = expected_utility(i, profile, params).total
    modes = (me.mode,) + tuple(m for m in MODES if m is not me.mode)
    best_val = None
    best = None
    for mode in modes:
        trial = list(profile)
        trial[i] = me.with_mode(mode)
        serves = serving(trial, params)
        incoming = tuple(
            report_one_probability(profile[j].pair(i), serves[i], params.epsilon, profile[j].submit)
            for j in range(n)
            if j != i
        )
        val = _storage_value(mode, serves[i], incoming, params)
        chosen = []
        for j in range(n):
            if j == i:
                chosen.append(me.pair(j))
                continue
            options = PAIR_ACTIONS
            if me.submit:
                options = (me.pair(j),) + PAIR_ACTIONS
            top = None
            pick = None
            for action in options:
                v = _pair_value(action, serves[j], params)
                if top is None or v > top:
                    top, pick = v, action
            chosen.append(pick)
            val += top
        if best_val is None or val > best_val:
            best_val = val
            best = Strategy(
                store=mode is StorageMode.STORE,
                audit=tuple(a.audit for a in chosen),
                report=tuple(a.report_rule for a in chosen),
                reconstruct=mode is StorageMode.RECONSTRUCT,
                submit=True,
            )
    if best_val > current:
        return best, best_val - current
    return me, current - current


def _describe_change(i: int, old: Strategy, new: Strategy) -> dict:
    pairs = []
    for j in range(old.n):
        if j == i:
            continue
        a, b = _canonical(old.pair(j)), _canonical(new.pair(j))
        if a != b or old.submit != new.submit:
            pairs.append({"peer": j, "from": old.pair(j).label, "to": new.pair(j).label})
    out = {"sp": i, "pairs": pairs}
    if old.mode is not new.mode:
        out["mode"] = {"from": old.mode.value, "to": new.mode.value}
    if old.submit != new.submit:
        out["submit"] = {"from": old.submit, "to": new.submit}
    return out


@dataclass
class NashReport:
    profile: list
    gains: list
    is_nash: bool
    tolerance: float
    witness: dict | None = None
    witness_strategy: Strategy | None = None

    def witness_actions(self) -> set:
        """Target pair actions of the witness deviation, as ``(audit, rule)`` tuples."""
        if self.witness_strategy is None:
            return set()
        i = self.witness["sp"]
        return {
            (self.witness_strategy.pair(c["peer"]).audit, self.witness_strategy.pair(c["peer"]).report_rule)
            for c in self.witness["pairs"]
            if c["peer"] != i
        }

    def to_json(self) -> dict:
        return {
            "profile": [s.to_json(own=i) for i, s in enumerate(self.profile)],
            "gains": [float(g) for g in self.gains],
            "max_gain": float(max(self.gains)),
            "is_nash": self.is_nash,
            "tolerance": float(self.tolerance),
            "witness": self.witness,
        }


def verify_nash(profile: Sequence[Strategy], params: ProtocolParams, *, exact: bool = False, tol=None) -> NashReport:
    """Check every SP's exact unilateral best response against ``profile``.

    With ``exact`` (or rational params) the check is done in Fractions with
    zero tolerance.
    """
    if exact:
        params = params.exact()
    if len(profile) != params.n:
        raise ParamError(f"profile has {len(profile)} strategies, expected {params.n}")
    tol = _tolerance(params, tol)
    gains = []
    witness = None
    witness_strategy = None
    worst = None
    for i in range(params.n):
        strategy, gain = best_response(i, profile, params)
        gains.append(gain)
        if gain > tol and (worst is None or gain > worst):
            worst = gain
            witness = _describe_change(i, profile[i], strategy)
            witness["gain"] = float(gain)
            witness_strategy = strategy
    return NashReport(list(profile), gains, witness is None, tol, witness, witness_strategy)


# ---------------------------------------------------------------- uniqueness

CLASSES: tuple[tuple[StorageMode, PairAction], ...] = tuple(
    (mode, action) for mode in MODES for action in PAIR_ACTIONS
)


def _class_label(cls: tuple[StorageMode, PairAction]) -> str:
    mode, action = cls
    return f"{mode.value}+{action.label}"


HONEST_CLASS = (StorageMode.STORE, HONEST_PAIR)
DISHONEST_CLASS = (StorageMode.DROP, PairAction(False, ReportRule.ALWAYS_ONE))


@dataclass
class UniquenessReport:
    n: int
    candidates: int
    equilibria: list
    expected: str | None
    elapsed: float
    witnesses: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [self._label(e) for e in self.equilibria]

    def _label(self, combo) -> str:
        if all(c == HONEST_CLASS for c in combo):
            return "honest"
        if all(c == DISHONEST_CLASS for c in combo):
            return "dishonest"
        counts = {}
        for c in combo:
            counts[_class_label(c)] = counts.get(_class_label(c), 0) + 1
        return ", ".join(f"{v}x {k}" for k, v in sorted(counts.items()))

    @property
    def assertion_holds(self) -> bool | None:
        if self.expected is None:
            return None
        return self.labels == [self.expected]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "candidates": self.candidates,
            "equilibria": self.labels,
            "expected": self.expected,
            "assertion_holds": self.assertion_holds,
            "elapsed_s": self.elapsed,
        }


def verify_uniqueness(params: ProtocolParams, n_small: int = 4, *, exact: bool = True) -> UniquenessReport:
    """Enumerate symmetric-class profiles of ``n_small`` SPs and keep the pure equilibria.

    Each SP applies one (storage mode, pair action) class to all peers.
    Profiles are enumerated up to relabelling of SPs, and an infeasible
    reconstruction is canonicalised to dropping (the two are payoff
    identical). Deviations are checked over the full per-pair space.
    """
    if n_small > MAX_UNIQUENESS_N:
        raise ParamError(f"n_small = {n_small} exceeds {MAX_UNIQUENESS_N}")
    start = time.perf_counter()
    p = params.replace(n=n_small)
    if exact:
        p = p.exact()
    tol = _tolerance(p, None)
    seen = set()
    equilibria = []
    for combo in itertools.combinations_with_replacement(range(len(CLASSES)), n_small):
        classes = [CLASSES[c] for c in combo]
        storers = sum(mode is StorageMode.STORE for mode, _ in classes)
        classes = [
            (StorageMode.DROP, a) if (mode is StorageMode.RECONSTRUCT and storers < p.k) else (mode, a)
            for mode, a in classes
        ]
        key = tuple(sorted(classes, key=lambda c: (MODES.index(c[0]), PAIR_ACTIONS.index(c[1]))))
        if key in seen:
            continue
        seen.add(key)
        profile = [Strategy.uniform(n_small, mode, a) for mode, a in key]
        stable = True
        checked = set()
        for i, cls in enumerate(key):
            if cls in checked:
                continue
            checked.add(cls)
            if best_response(i, profile, p)[1] > tol:
                stable = False
                break
        if stable:
            equilibria.append(key)
    conditions = check_conditions(p)
    expected = None
    if p.p_a == 0:
        expected = "dishonest"
    elif conditions.theorem_hypotheses:
        expected = "honest"
    return UniquenessReport(n_small, len(seen), equilibria, expected, time.perf_counter() - start)


# ---------------------------------------------------------------- coalitions


class _CoalitionGame:
    """Member-payoff tables for one coalition facing honest outsiders (float arithmetic)."""

    def __init__(self, spec: CoalitionSpec, params: ProtocolParams):
        self.params = params.inexact()
        self.exact_params = params
        self.members = sorted(spec.members)
        self.m = len(self.members)
        self.outsiders = [j for j in range(params.n) if j not in spec.members]
        self.furnish_on = spec.commitment and not spec.extension_mode
        p = self.params
        honest = honest_profile(p.n)
        self.baseline = np.array([expected_utility(t, honest, p).total for t in self.members])
        vals = [_pair_value(a, True, p) for a in PAIR_ACTIONS]
        best = max(range(len(PAIR_ACTIONS)), key=lambda c: (vals[c], -c))
        self.outsider_action = PAIR_ACTIONS[best]
        self.outsider_const = vals[best] * len(self.outsiders)
        # (a, b) ordered member pairs; variable index for the action of a toward b
        self.vars = [(a, b) for a in range(self.m) for b in range(self.m) if a != b]
        self.var_index = {v: k for k, v in enumerate(self.vars)}
        self._tables = {}

    def serves(self, mv: tuple) -> list[bool]:
        storers = len(self.outsiders) + sum(mode is StorageMode.STORE for mode in mv)
        return [mode is StorageMode.STORE or (mode is StorageMode.RECONSTRUCT and storers >= self.params.k) for mode in mv]

    def tables(self, mv: tuple):
        """Storage tables S[b] over other members' actions toward b, and pair values P[a][b][c]."""
        if mv in self._tables:
            return self._tables[mv]
        p = self.params
        serves = self.serves(mv)
        n_act = len(PAIR_ACTIONS)
        S = []
        for b in range(self.m):
            base = [(1 - p.epsilon) if serves[b] else 0] * len(self.outsiders)
            shape = (n_act,) * (self.m - 1)
            table = np.empty(shape, dtype=float)
            for combo in itertools.product(range(n_act), repeat=self.m - 1):
                inc = tuple(base + [report_one_probability(PAIR_ACTIONS[c], serves[b], p.epsilon) for c in combo])
                table[combo] = _storage_value(mv[b], serves[b], inc, p)
            S.append(table)
        P = np.zeros((self.m, self.m, n_act))
        for a in range(self.m):
            for b in range(self.m):
                if a == b:
                    continue
                furnish = self.furnish_on and mv[b] is StorageMode.STORE
                for c, action in enumerate(PAIR_ACTIONS):
                    P[a, b, c] = _pair_value(action, serves[b], p, furnish)
        self._tables[mv] = (S, P)
        return S, P

    def others(self, b: int) -> list[int]:
        return [o for o in range(self.m) if o != b]

    def utilities(self, mv: tuple, x: Sequence[int]) -> np.ndarray:
        S, P = self.tables(mv)
        u = np.full(self.m, self.outsider_const)
        for a in range(self.m):
            u[a] += S[a][tuple(x[self.var_index[(o, a)]] for o in self.others(a))]
            for b in self.others(a):
                u[a] += P[a, b, x[self.var_index[(a, b)]]]
        return u

    def joint_max(self):
        """Exact maximiser of the members' summed utility."""
        best_val, best = None, None
        for mv in itertools.product(MODES, repeat=self.m):
            S, P = self.tables(mv)
            total = self.outsider_const * self.m
            x = [0] * len(self.vars)
            for b in range(self.m):
                others = self.others(b)
                top, pick = None, None
                for combo in itertools.product(range(len(PAIR_ACTIONS)), repeat=len(others)):
                    v = S[b][combo] + sum(P[o, b, c] for o, c in zip(others, combo))
                    if top is None or v > top:
                        top, pick = v, combo
                total += top
                for o, c in zip(others, pick):
                    x[self.var_index[(o, b)]] = c
            if best_val is None or total > best_val:
                best_val, best = total, (mv, tuple(x))
        return best

    def search_space(self) -> int:
        return 3**self.m * len(PAIR_ACTIONS) ** len(self.vars)

    def maxmin_exact(self):
        n_act = len(PAIR_ACTIONS)
        V = len(self.vars)
        idx = np.indices((n_act,) * V).reshape(V, -1) if V else np.zeros((0, 1), dtype=int)
        best_val, best = None, None
        for mv in itertools.product(MODES, repeat=self.m):
            S, P = self.tables(mv)
            u = np.full((self.m, idx.shape[1]), self.outsider_const)
            for a in range(self.m):
                others = self.others(a)
                u[a] += S[a][tuple(idx[self.var_index[(o, a)]] for o in others)]
                for b in others:
                    u[a] += P[a, b][idx[self.var_index[(a, b)]]]
            worst = (u - self.baseline[:, None]).min(axis=0)
            k = int(np.argmax(worst))
            if best_val is None or worst[k] > best_val:
                best_val, best = worst[k], (mv, tuple(int(v) for v in idx[:, k]))
        return best

    def maxmin_hill(self, seed: int):
        rng = random.Random(seed)
        n_act = len(PAIR_ACTIONS)
        V = len(self.vars)

        def score(mv, x):
            return float((self.utilities(mv, x) - self.baseline).min())

        best_val, best = None, None
        for restart in range(RESTARTS + 1):
            if restart == 0:
                mv, x = (StorageMode.STORE,) * self.m, [0] * V
            else:
                mv = tuple(rng.choice(MODES) for _ in range(self.m))
                x = [rng.randrange(n_act) for _ in range(V)]
            cur = score(mv, x)
            improved = True
            while improved:
                improved = False
                for a in range(self.m):
                    for mode in MODES:
                        trial = mv[:a] + (mode,) + mv[a + 1 :]
                        s = score(trial, x)
                        if s > cur + STRICT_TOL:
                            mv, cur, improved = trial, s, True
                for v in range(V):
                    for c in range(n_act):
                        trial = x[:v] + [c] + x[v + 1 :]
                        s = score(mv, trial)
                        if s > cur + STRICT_TOL:
                            x, cur, improved = trial, s, True
            if best_val is None or cur > best_val:
                best_val, best = cur, (mv, tuple(x))
        return best

    def strategies(self, mv: tuple, x: Sequence[int]) -> dict[int, Strategy]:
        n = self.params.n
        out = {}
        for a, t in enumerate(self.members):
            pairs = [self.outsider_action] * n
            for b in self.others(a):
                pairs[self.members[b]] = PAIR_ACTIONS[x[self.var_index[(a, b)]]]
            pairs[t] = HONEST_PAIR
            out[t] = Strategy(
                store=mv[a] is StorageMode.STORE,
                audit=tuple(pa.audit for pa in pairs),
                report=tuple(pa.report_rule for pa in pairs),
                reconstruct=mv[a] is StorageMode.RECONSTRUCT,
            )
        return out

    def member_gains(self, deviation: dict[int, Strategy]) -> list:
        """Per-member gains of a deviation, evaluated by the analytic model in the caller's arithmetic."""
        p = self.exact_params
        honest = honest_profile(p.n)
        profile = list(honest)
        for t, s in deviation.items():
            profile[t] = s
        furnishers = self.members if self.furnish_on else ()
        return [
            expected_utility(t, profile, p, furnishers=furnishers).total - expected_utility(t, honest, p).total
            for t in self.members
        ]


@dataclass
class DeviationReport:
    members: tuple
    commitment: bool
    extension_mode: bool
    hypotheses_satisfied: bool
    oversized: bool
    baseline: object
    best_deviation: dict
    best_joint: object
    gain: object
    bound: object
    adjusted_bound: object
    member_gains: list
    maxmin_gain: object
    maxmin_deviation: dict
    maxmin_member_gains: list
    regime: str

    @property
    def bound_satisfied(self) -> bool:
        return self.gain <= self.bound * (1 + BOUND_RTOL)

    @property
    def adjusted_bound_satisfied(self) -> bool:
        return self.gain <= self.adjusted_bound * (1 + BOUND_RTOL)

    @property
    def strictly_improving_exists(self) -> bool:
        return min(self.maxmin_member_gains) > STRICT_TOL

    @property
    def strong_condition_holds(self) -> bool:
        """Some member fails to strictly gain under every joint deviation."""
        return not self.strictly_improving_exists

    def to_json(self) -> dict:
        def strategies(dev):
            return {str(t): s.to_json(own=t) for t, s in dev.items()}

        return {
            "members": list(self.members),
            "commitment": self.commitment,
            "extension_mode": self.extension_mode,
            "hypotheses_satisfied": self.hypotheses_satisfied,
            "exploratory_oversized": self.oversized,
            "baseline": float(self.baseline),
            "best_joint": float(self.best_joint),
            "gain": float(self.gain),
            "bound": float(self.bound),
            "bound_satisfied": self.bound_satisfied,
            "adjusted_bound": float(self.adjusted_bound),
            "adjusted_bound_satisfied": self.adjusted_bound_satisfied,
            "member_gains": [float(g) for g in self.member_gains],
            "best_deviation": strategies(self.best_deviation),
            "maxmin_gain": float(self.maxmin_gain),
            "maxmin_member_gains": [float(g) for g in self.maxmin_member_gains],
            "maxmin_deviation": strategies(self.maxmin_deviation),
            "strictly_improving_exists": self.strictly_improving_exists,
            "regime": self.regime,
        }


def coalition_best_deviation(
    spec: CoalitionSpec, params: ProtocolParams, *, theorem_mode: bool = True
) -> DeviationReport:
    """Best joint deviation of ``spec.members`` against honest outsiders.

    The joint (summed) maximum is exact. The max-min search is exhaustive
    when the members' space of modes and intra-coalition actions has at
    most 2**20 points, and uses hill climbing with 64 random restarts
    otherwise. ``regime`` records which was used. Bounds are per epoch,
    so they scale with the p_s audits each pair performs.
    """
    oversized = spec.check(params.n, theorem_mode)
    game = _CoalitionGame(spec, params)
    mv, x = game.joint_max()
    best_dev = game.strategies(mv, x)
    gains = game.member_gains(best_dev)
    if game.search_space() <= EXACT_SEARCH_LIMIT:
        regime = "exact"
        mm = game.maxmin_exact()
    else:
        regime = "hill-climb"
        mm = game.maxmin_hill(params.seed)
    mm_dev = game.strategies(*mm)
    mm_gains = game.member_gains(mm_dev)
    honest = honest_profile(params.n)
    baseline = sum(expected_utility(t, honest, params).total for t in game.members)
    gain = sum(gains)
    size = len(game.members)
    bound = size * size * params.p_s * params.c_a
    adjusted = size * size * params.p_s * (params.c_a + params.epsilon * params.r_a)
    return DeviationReport(
        members=tuple(game.members),
        commitment=spec.commitment,
        extension_mode=spec.extension_mode,
        hypotheses_satisfied=check_conditions(params).theorem_hypotheses,
        oversized=oversized,
        baseline=baseline,
        best_deviation=best_dev,
        best_joint=baseline + gain,
        gain=gain,
        bound=bound,
        adjusted_bound=adjusted,
        member_gains=gains,
        maxmin_gain=min(mm_gains),
        maxmin_deviation=mm_dev,
        maxmin_member_gains=mm_gains,
        regime=regime,
    )


@dataclass
class StrongEquilibriumReport:
    n: int
    max_coalition: int
    commitment: bool
    extension_mode: bool
    hypotheses_satisfied: bool
    reports: list

    def by_size(self) -> dict[int, dict]:
        out = {}
        for r in self.reports:
            entry = out.setdefault(len(r.members), {"coalitions": 0, "passed": 0, "failed": []})
            entry["coalitions"] += 1
            if r.strong_condition_holds:
                entry["passed"] += 1
            else:
                entry["failed"].append(list(r.members))
        return out

    @property
    def all_pass(self) -> bool:
        return all(r.strong_condition_holds for r in self.reports)

    @property
    def status(self) -> str:
        if not self.hypotheses_satisfied:
            return "hypotheses unsatisfied"
        return "pass" if self.all_pass else "fail"

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "max_coalition": self.max_coalition,
            "commitment": self.commitment,
            "extension_mode": self.extension_mode,
            "status": self.status,
            "all_pass": self.all_pass,
            "by_size": {str(k): v for k, v in self.by_size().items()},
            "max_gain": max(float(r.gain) for r in self.reports),
            "max_maxmin_gain": max(float(r.maxmin_gain) for r in self.reports),
        }


def verify_strong_equilibrium(
    params: ProtocolParams, max_coalition: int, *, commitment: bool = False, extension_mode: bool = False
) -> StrongEquilibriumReport:
    """Check the honest profile against every coalition of size 1..max_coalition."""
    if 2 * max_coalition >= params.n:
        raise HypothesisError(f"max_coalition = {max_coalition} is not smaller than N/2 = {params.n / 2}")
    if params.n > MAX_STRONG_N:
        raise ParamError(f"exhaustive coalition enumeration is limited to N <= {MAX_STRONG_N}")
    reports = []
    for size in range(1, max_coalition + 1):
        for members in itertools.combinations(range(params.n), size):
            spec = CoalitionSpec(frozenset(members), commitment, extension_mode)
            reports.append(coalition_best_deviation(spec, params))
    return StrongEquilibriumReport(
        params.n, max_coalition, commitment, extension_mode, check_conditions(params).theorem_hypotheses, reports
    )
