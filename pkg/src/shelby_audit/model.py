"""Protocol parameters, strategies and the analytic expected-utility calculus.

All formulas are written against plain arithmetic so they evaluate in
either floats or :class:`fractions.Fraction`; ``ProtocolParams.exact()``
switches a parameter set to rationals.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .commitments import check_hash_name

Number = Union[int, float, Fraction]

REAL_FIELDS = ("r_s", "r_a", "c_s", "c_a", "c_read", "p_a", "sigma_s", "sigma_a", "epsilon")
INT_FIELDS = ("n", "p_s", "c_max", "k", "seed")


class ParamError(ValueError):
    pass


class ReportRule(str, Enum):
    ALWAYS_ONE = "ALWAYS_ONE"
    ALWAYS_ZERO = "ALWAYS_ZERO"
    TRUTHFUL = "TRUTHFUL"


class StorageMode(str, Enum):
    STORE = "store"
    DROP = "drop"
    RECONSTRUCT = "reconstruct"


@dataclass(frozen=True)
class PairAction:
    """What an auditor does about one auditee: examine the proof or not, and how to report."""

    audit: bool
    report_rule: ReportRule

    @property
    def effective_rule(self) -> ReportRule:
        # nobody can be truthful about a proof they never examined
        if self.report_rule is ReportRule.TRUTHFUL and not self.audit:
            return ReportRule.ALWAYS_ZERO
        return self.report_rule

    @property
    def label(self) -> str:
        return f"{'audit' if self.audit else 'skip'}/{self.report_rule.value}"


HONEST_PAIR = PairAction(True, ReportRule.TRUTHFUL)
SKIP_ONE = PairAction(False, ReportRule.ALWAYS_ONE)
SKIP_ZERO = PairAction(False, ReportRule.ALWAYS_ZERO)
AUDIT_ZERO = PairAction(True, ReportRule.ALWAYS_ZERO)
AUDIT_ONE = PairAction(True, ReportRule.ALWAYS_ONE)
SKIP_TRUTHFUL = PairAction(False, ReportRule.TRUTHFUL)

# Behaviourally distinct actions; SKIP_TRUTHFUL is an alias of SKIP_ZERO.
PAIR_ACTIONS: tuple[PairAction, ...] = (HONEST_PAIR, SKIP_ONE, SKIP_ZERO, AUDIT_ZERO, AUDIT_ONE)
ALL_PAIR_CASES: tuple[PairAction, ...] = PAIR_ACTIONS + (SKIP_TRUTHFUL,)


@dataclass(frozen=True)
class Strategy:
    """One SP's strategy. Per-peer tuples have length N; the SP's own slot is ignored."""

    store: bool
    audit: tuple[bool, ...]
    report: tuple[ReportRule, ...]
    reconstruct: bool = False
    submit: bool = True

    def __post_init__(self) -> None:
        if len(self.audit) != len(self.report):
            raise ParamError("audit and report policies must have the same length")

    @property
    def n(self) -> int:
        return len(self.audit)

    @property
    def mode(self) -> StorageMode:
        if self.store:
            return StorageMode.STORE
        return StorageMode.RECONSTRUCT if self.reconstruct else StorageMode.DROP

    def pair(self, j: int) -> PairAction:
        return PairAction(self.audit[j], self.report[j])

    def with_pair(self, j: int, action: PairAction) -> "Strategy":
        audit = list(self.audit)
        report = list(self.report)
        audit[j] = action.audit
        report[j] = action.report_rule
        return dataclasses.replace(self, audit=tuple(audit), report=tuple(report))

    def with_mode(self, mode: StorageMode) -> "Strategy":
        return dataclasses.replace(
            self, store=mode is StorageMode.STORE, reconstruct=mode is StorageMode.RECONSTRUCT
        )

    @classmethod
    def uniform(cls, n: int, mode: StorageMode, action: PairAction, submit: bool = True) -> "Strategy":
        return cls(
            store=mode is StorageMode.STORE,
            audit=(action.audit,) * n,
            report=(action.report_rule,) * n,
            reconstruct=mode is StorageMode.RECONSTRUCT,
            submit=submit,
        )

    def to_json(self, own: int | None = None) -> dict:
        peers = [j for j in range(self.n) if j != own]
        return {
            "store": self.store,
            "reconstruct": self.reconstruct,
            "submit": self.submit,
            "pairs": {str(j): self.pair(j).label for j in peers},
        }


def honest_strategy(n: int) -> Strategy:
    _check_population(n)
    return Strategy.uniform(n, StorageMode.STORE, HONEST_PAIR)


def fully_dishonest_strategy(n: int) -> Strategy:
    _check_population(n)
    return Strategy.uniform(n, StorageMode.DROP, SKIP_ONE)


def honest_profile(n: int) -> list[Strategy]:
    return [honest_strategy(n)] * n


def dishonest_profile(n: int) -> list[Strategy]:
    return [fully_dishonest_strategy(n)] * n


def _check_population(n: int) -> None:
    if n < 3:
        raise ParamError("need at least 3 storage providers")


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    r_s: Number
    r_a: Number
    c_s: Number
    c_a: Number
    c_read: Number
    p_s: int
    p_a: Number
    sigma_s: Number
    sigma_a: Number
    epsilon: Number
    c_max: int
    k: int
    seed: int = 0
    chunks: int = 1
    chunk_size: int = 64
    onchain_noise: bool = True
    hash_name: str = "sha256"

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ParamError("n must be >= 3")
        if self.p_s < 1:
            raise ParamError("p_s must be >= 1")
        if not 0 <= self.p_a <= 1:
            raise ParamError("p_a must lie in [0, 1]")
        if not 0 <= self.epsilon < 1:
            raise ParamError("epsilon must lie in [0, 1)")
        for name in ("r_s", "r_a", "c_s", "c_a", "c_read", "sigma_s", "sigma_a"):
            if getattr(self, name) < 0:
                raise ParamError(f"{name} must be >= 0")
        if self.c_max < 0:
            raise ParamError("c_max must be >= 0")
        if self.k < 1:
            raise ParamError("k must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ParamError("seed must be an unsigned 64-bit integer")
        if self.chunks < 1 or self.chunk_size < 1:
            raise ParamError("chunks and chunk_size must be >= 1")
        check_hash_name(self.hash_name)

    def replace(self, **changes) -> "ProtocolParams":
        return dataclasses.replace(self, **changes)

    def exact(self) -> "ProtocolParams":
        """Same parameters with every real field as a Fraction (decimal-faithful for floats)."""
        return self.replace(**{f: _to_fraction(getattr(self, f)) for f in REAL_FIELDS})

    def inexact(self) -> "ProtocolParams":
        return self.replace(**{f: float(getattr(self, f)) for f in REAL_FIELDS})

    @property
    def is_exact(self) -> bool:
        return all(isinstance(getattr(self, f), (int, Fraction)) for f in REAL_FIELDS)

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = float(value) if isinstance(value, Fraction) else value
        return out


def _to_fraction(value: Number) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


# ---------------------------------------------------------------- conditions


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: Number | None
    rhs: Number | None
    strict: bool
    satisfied: bool | None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": None if self.lhs is None else float(self.lhs),
            "rhs": None if self.rhs is None else float(self.rhs),
            "relation": ">" if self.strict else ">=",
            "satisfied": self.satisfied,
            "note": self.note,
        }


@dataclass(frozen=True)
class ConditionReport:
    conditions: tuple[Condition, ...]

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def theorem_hypotheses(self) -> bool:
        """Conditions (i)-(iii) all hold (an undefined (i) counts as not holding)."""
        return all(self[name].satisfied is True for name in ("i", "ii", "iii"))

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied is True for c in self.conditions)

    def to_json(self) -> dict:
        return {
            "conditions": [c.to_json() for c in self.conditions],
            "theorem_hypotheses": self.theorem_hypotheses,
            "all_satisfied": self.all_satisfied,
        }


def _compare(name: str, lhs, rhs, strict: bool) -> Condition:
    return Condition(name, lhs, rhs, strict, lhs > rhs if strict else lhs >= rhs)


def check_conditions(params: ProtocolParams, exact: bool = True) -> ConditionReport:
    """Evaluate conditions (i)-(iii), the dishonesty-breaking threshold and the storage-dominance check."""
    p = params.exact() if exact else params
    out = []
    if p.epsilon == 0 or p.p_a == 0:
        out.append(Condition("i", p.sigma_a, None, False, None, "undefined (requires epsilon > 0 and p_a > 0)"))
    else:
        rhs = (1 - p.p_a) / p.p_a * p.r_a + p.c_a / (p.epsilon * p.p_a)
        out.append(_compare("i", p.sigma_a, rhs, strict=False))
    out.append(_compare("ii", p.r_a, p.c_a / (1 - p.epsilon), strict=False))
    out.append(_compare("iii", p.r_s, p.c_s, strict=False))
    if p.p_a == 0:
        out.append(Condition("inspection_threshold", p.sigma_a, None, True, False, "no on-chain inspection (p_a = 0)"))
    else:
        out.append(_compare("inspection_threshold", p.sigma_a, (1 - p.p_a) / p.p_a * p.r_a, strict=True))
    out.append(_compare("storage_dominates", p.p_s * p.k * p.c_read, p.c_s, strict=True))
    return ConditionReport(tuple(out))


def inspection_threshold(params: ProtocolParams):
    return (1 - params.p_a) / params.p_a * params.r_a


def condition_i_threshold(params: ProtocolParams):
    return (1 - params.p_a) / params.p_a * params.r_a + params.c_a / (params.epsilon * params.p_a)


# ---------------------------------------------------------------- calculus


@dataclass(frozen=True)
class UtilityBreakdown:
    storage_reward: Number = 0
    audit_reward: Number = 0
    storage_cost: Number = 0
    audit_cost: Number = 0
    reconstruction_cost: Number = 0
    inspection_slash: Number = 0
    storage_slash: Number = 0

    @property
    def total(self):
        return (
            self.storage_reward
            + self.audit_reward
            - self.storage_cost
            - self.audit_cost
            - self.reconstruction_cost
            - self.inspection_slash
            - self.storage_slash
        )

    def __add__(self, other: "UtilityBreakdown") -> "UtilityBreakdown":
        return UtilityBreakdown(
            *(getattr(self, f.name) + getattr(other, f.name) for f in dataclasses.fields(self))
        )

    def to_json(self) -> dict:
        out = {f.name: float(getattr(self, f.name)) for f in dataclasses.fields(self)}
        out["total"] = float(self.total)
        return out


def report_one_probability(action: PairAction, auditee_serves: bool, epsilon, submit: bool = True):
    if not submit:
        return 0
    rule = action.effective_rule
    if rule is ReportRule.ALWAYS_ONE:
        return 1
    if rule is ReportRule.ALWAYS_ZERO:
        return 0
    return (1 - epsilon) if auditee_serves else 0


def false_one_probability(action: PairAction, auditee_serves: bool, epsilon, submit: bool = True):
    """P(a 1 is reported while the auditor holds no valid proof)."""
    if not submit or action.effective_rule is not ReportRule.ALWAYS_ONE:
        return 0
    return epsilon if auditee_serves else 1


def expected_pair_utility(
    action: PairAction, params: ProtocolParams, auditee_stores: bool, *, furnish: bool = False
):
    """Expected audit-role payoff of one audit instance of one auditee.

    ``auditee_stores`` means the auditee answers with a proof (from storage or
    a feasible reconstruction). ``furnish`` means a missing valid proof can be
    supplied on demand at inspection time.
    """
    p = params
    audit_cost = p.c_a if action.audit else 0
    rule = action.effective_rule
    if rule is ReportRule.ALWAYS_ZERO:
        return -audit_cost
    if rule is ReportRule.TRUTHFUL:
        return (1 - p.epsilon) * p.r_a - p.c_a if auditee_stores else -p.c_a
    if furnish:
        return p.r_a - audit_cost
    if auditee_stores:
        return p.epsilon * ((1 - p.p_a) * p.r_a - p.p_a * p.sigma_a) + (1 - p.epsilon) * p.r_a - audit_cost
    return (1 - p.p_a) * p.r_a - p.p_a * p.sigma_a - audit_cost


def majority_pass_probability(report_probs: Sequence):
    """P(strictly more than half of the auditors report 1), reports independent."""
    dist = [1]
    for q in report_probs:
        nxt = [0] * (len(dist) + 1)
        for count, mass in enumerate(dist):
            nxt[count] += mass * (1 - q)
            nxt[count + 1] += mass * q
        dist = nxt
    auditors = len(report_probs)
    return sum(mass for count, mass in enumerate(dist) if 2 * count > auditors)


def extra_audit_count(passes: int, p_s: int, c_max: int) -> int:
    """round_half_up((1 - s^2) * c_max) with s = passes / p_s, in integers."""
    denom = p_s * p_s
    return (2 * (denom - passes * passes) * c_max + denom) // (2 * denom)


def extra_audits_for_score(score: Fraction, c_max: int) -> int:
    alpha = 1 - Fraction(score) ** 2
    return math.floor(alpha * c_max + Fraction(1, 2))


def expected_extra_audits(pass_prob, p_s: int, c_max: int):
    return sum(
        math.comb(p_s, b) * pass_prob**b * (1 - pass_prob) ** (p_s - b) * extra_audit_count(b, p_s, c_max)
        for b in range(p_s + 1)
    )


def serving(profile: Sequence[Strategy], params: ProtocolParams) -> list[bool]:
    """Which SPs answer audits with a proof: storers, and reconstructors with >= k storing peers."""
    storing = [s.store for s in profile]
    total = sum(storing)
    return [
        s.store or (s.reconstruct and total - storing[i] >= params.k) for i, s in enumerate(profile)
    ]


def storage_breakdown(
    mode: StorageMode,
    serves: bool,
    incoming_report_probs: Sequence,
    params: ProtocolParams,
) -> UtilityBreakdown:
    """Storage-side terms for one SP given the report-1 probabilities of its N-1 auditors."""
    p = params
    q = majority_pass_probability(incoming_report_probs)
    stores = mode is StorageMode.STORE
    if stores:
        fail = p.epsilon if p.onchain_noise else 0
    else:
        fail = 1
    recon = p.p_s * p.k * p.c_read if (mode is StorageMode.RECONSTRUCT and serves) else 0
    slash = p.sigma_s * expected_extra_audits(q, p.p_s, p.c_max) * fail if fail else 0
    return UtilityBreakdown(
        storage_reward=p.r_s * p.chunks * q,
        storage_cost=p.c_s * p.chunks if stores else 0,
        reconstruction_cost=recon,
        storage_slash=slash,
    )


def pair_breakdown(
    action: PairAction,
    auditee_serves: bool,
    params: ProtocolParams,
    *,
    submit: bool = True,
    furnish: bool = False,
) -> UtilityBreakdown:
    """Audit-role terms of one auditor toward one auditee over the epoch's p_s instances."""
    p = params
    ones = report_one_probability(action, auditee_serves, p.epsilon, submit)
    false_ones = 0 if furnish else false_one_probability(action, auditee_serves, p.epsilon, submit)
    return UtilityBreakdown(
        audit_reward=p.p_s * p.r_a * (ones - p.p_a * false_ones),
        audit_cost=p.p_s * p.c_a if action.audit else 0,
        inspection_slash=p.p_s * p.p_a * p.sigma_a * false_ones,
    )


def _furnishes(furnishers: frozenset, profile: Sequence[Strategy], auditor: int, auditee: int) -> bool:
    return auditor in furnishers and auditee in furnishers and profile[auditee].store


def expected_utility(
    i: int,
    profile: Sequence[Strategy],
    params: ProtocolParams,
    *,
    furnishers: Iterable[int] = (),
) -> UtilityBreakdown:
    """Expected epoch utility of SP ``i`` under ``profile``.

    ``furnishers`` is a set of SPs that supply proofs to each other on
    demand at inspection time (a coalition with commitment power, base mode).
    """
    n = params.n
    if len(profile) != n:
        raise ParamError(f"profile has {len(profile)} strategies, expected {n}")
    if not 0 <= i < n:
        raise IndexError(f"SP index {i} out of range")
    furnishers = frozenset(furnishers)
    serves = serving(profile, params)
    incoming = [
        report_one_probability(profile[j].pair(i), serves[i], params.epsilon, profile[j].submit)
        for j in range(n)
        if j != i
    ]
    me = profile[i]
    total = storage_breakdown(me.mode, serves[i], incoming, params)
    for j in range(n):
        if j == i:
            continue
        total = total + pair_breakdown(
            me.pair(j),
            serves[j],
            params,
            submit=me.submit,
            furnish=_furnishes(furnishers, profile, i, j),
        )
    return total


# ---------------------------------------------------------------- coalitions


class HypothesisError(ValueError):
    """A theorem-verification entry point was called outside the theorem's hypotheses."""


@dataclass(frozen=True)
class CoalitionSpec:
    members: frozenset
    commitment: bool = False
    extension_mode: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if not self.members:
            raise ParamError("a coalition needs at least one member")

    def check(self, n: int, theorem_mode: bool = True) -> bool:
        """Validate against population ``n``; returns True when the exploratory-size warning applies."""
        if any(not 0 <= m < n for m in self.members):
            raise ParamError(f"coalition members must lie in [0, {n})")
        oversized = 2 * len(self.members) >= n
        if oversized and theorem_mode:
            raise HypothesisError(f"coalition of size {len(self.members)} is not smaller than N/2 = {n / 2}")
        return oversized

    def to_json(self) -> dict:
        return {"members": sorted(self.members), "commitment": self.commitment, "extension_mode": self.extension_mode}


def collusive_profile(n: int, members: Iterable[int]) -> list[Strategy]:
    """Honest outsiders; members store, skip audits of each other and report 1 for co-members."""
    members = frozenset(members)
    profile = honest_profile(n)
    for t in members:
        s = honest_strategy(n)
        for j in members - {t}:
            s = s.with_pair(j, SKIP_ONE)
        profile[t] = s
    return profile
