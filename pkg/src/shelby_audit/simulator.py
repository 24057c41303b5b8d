"""Epoch state machine: assignment, proofs, reports, scoring, inspections, extra audits, settlement.

``run_epoch`` builds a full :class:`EpochLedger` with real Merkle proofs and
response commitments. ``run_simulation`` drives the counting kernel over
many epochs; both consume the same random streams, so a ledger's counts
equal the kernel's counts for that epoch.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _prng, kernel
from .commitments import (
    InclusionProof,
    MerkleTree,
    VectorCommitment,
    commit_responses,
    verify_inclusion,
)
from .model import (
    CoalitionSpec,
    ParamError,
    ProtocolParams,
    ReportRule,
    Strategy,
    UtilityBreakdown,
    extra_audit_count,
    serving,
)

log = logging.getLogger(__name__)


class SimulationConfigError(ValueError):
    pass


# ---------------------------------------------------------------- network


class Network:
    """Synthetic chunk data and the on-chain chunk commitment of every SP."""

    def __init__(self, params: ProtocolParams):
        self.params = params
        self.trees = [
            MerkleTree([self.chunk(sp, idx) for idx in range(params.chunks)], params.hash_name)
            for sp in range(params.n)
        ]
        self._proofs: dict[tuple[int, int], InclusionProof] = {}

    def chunk(self, sp: int, index: int) -> bytes:
        size = self.params.chunk_size
        out = bytearray()
        block = 0
        while len(out) < size:
            h = hashlib.sha256(
                b"chunk" + self.params.seed.to_bytes(8, "big") + sp.to_bytes(4, "big")
                + index.to_bytes(4, "big") + block.to_bytes(4, "big")
            )
            out += h.digest()
            block += 1
        return bytes(out[:size])

    def commitment(self, sp: int) -> VectorCommitment:
        return self.trees[sp].commitment

    def proof(self, sp: int, index: int) -> InclusionProof:
        key = (sp, index)
        if key not in self._proofs:
            self._proofs[key] = self.trees[sp].open(index)
        return self._proofs[key]


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class AuditEntry:
    auditee: int
    chunk_index: int
    instance: int


@dataclass(frozen=True)
class AuditAssignment:
    epoch_id: int
    entries: tuple[AuditEntry, ...]

    def for_auditee(self, i: int) -> list[AuditEntry]:
        return [e for e in self.entries if e.auditee == i]

    def to_json(self) -> dict:
        return {"epoch_id": self.epoch_id, "entries": [dataclasses.asdict(e) for e in self.entries]}


class ResponseStatus(str, Enum):
    VALID = "valid_proof"
    INVALID = "invalid_proof"
    MISSING = "missing"


MISSING_RESPONSE = b"missing"


@dataclass(frozen=True)
class Response:
    auditor: int
    auditee: int
    instance: int
    chunk_index: int
    status: ResponseStatus
    payload: bytes | None = None
    proof: InclusionProof | None = None
    reconstructed: bool = False

    def to_bytes(self) -> bytes:
        head = self.auditee.to_bytes(4, "big") + self.instance.to_bytes(4, "big") + self.chunk_index.to_bytes(8, "big")
        if self.payload is None or self.proof is None:
            return head + MISSING_RESPONSE
        return head + len(self.payload).to_bytes(4, "big") + self.payload + self.proof.to_bytes()


@dataclass(frozen=True)
class ReportMatrix:
    """``bits[auditor][auditee][instance]`` as submitted; unsubmitted reports read as zeros."""

    bits: tuple[tuple[tuple[int, ...], ...], ...]
    submitted: tuple[bool, ...]

    def effective(self, auditor: int, auditee: int, instance: int) -> int:
        if not self.submitted[auditor]:
            return 0
        return self.bits[auditor][auditee][instance]

    def to_json(self) -> dict:
        return {"bits": [[list(v) for v in row] for row in self.bits], "submitted": list(self.submitted)}


@dataclass(frozen=True)
class Inspection:
    auditor: int
    auditee: int
    instance: int
    passed: bool
    furnished: bool = False


@dataclass(frozen=True)
class ExtraAudit:
    chunk_index: int
    passed: bool


@dataclass
class EpochLedger:
    assignment: AuditAssignment
    responses: dict[tuple[int, int, int], Response]
    reports: ReportMatrix
    passes: tuple[tuple[bool, ...], ...]
    scores: tuple[Fraction, ...]
    inspections: list[Inspection]
    extra_audits: list[list[ExtraAudit]]
    slashes: list[dict[str, float]]
    utilities: list[UtilityBreakdown]
    audits_performed: tuple[int, ...]
    reconstructions: tuple[int, ...]
    response_commitments: list[VectorCommitment] | None = None

    def counts(self) -> np.ndarray:
        n = len(self.scores)
        c = np.zeros((n, kernel.NCOUNTS), dtype=np.int64)
        for i in range(n):
            c[i, kernel.PASSES] = sum(self.passes[i])
            c[i, kernel.AUDITS] = self.audits_performed[i]
            c[i, kernel.RECON] = self.reconstructions[i]
            c[i, kernel.EXTRA] = len(self.extra_audits[i])
            c[i, kernel.EXTRA_FAILS] = sum(not x.passed for x in self.extra_audits[i])
        for (auditor, auditee, instance), resp in self.responses.items():
            if self.reports.effective(auditor, auditee, instance):
                c[auditor, kernel.ONES] += 1
                if resp.status is not ResponseStatus.VALID:
                    c[auditor, kernel.FALSE_ONES] += 1
        for insp in self.inspections:
            c[insp.auditor, kernel.INSPECTED] += 1
            if insp.furnished:
                c[insp.auditor, kernel.FURNISHED] += 1
            if not insp.passed:
                c[insp.auditor, kernel.INSPECTION_FAILS] += 1
        return c

    def to_json(self) -> dict:
        return {
            "assignment": self.assignment.to_json(),
            "responses": [
                {"auditor": a, "auditee": b, "instance": m, "status": r.status.value, "reconstructed": r.reconstructed}
                for (a, b, m), r in sorted(self.responses.items())
            ],
            "reports": self.reports.to_json(),
            "scores": [str(s) for s in self.scores],
            "inspections": [dataclasses.asdict(x) for x in self.inspections],
            "extra_audits": [[dataclasses.asdict(x) for x in row] for row in self.extra_audits],
            "slashes": self.slashes,
            "utilities": [u.to_json() for u in self.utilities],
            "response_commitments": (
                None if self.response_commitments is None else [c.to_json() for c in self.response_commitments]
            ),
        }


# ---------------------------------------------------------------- compiled profile


@dataclass(frozen=True)
class CompiledProfile:
    """Integer arrays handed to the kernel."""

    serves: np.ndarray
    store: np.ndarray
    recon: np.ndarray
    submit: np.ndarray
    audit: np.ndarray
    rule: np.ndarray
    furnish: np.ndarray


_RULE_CODE = {ReportRule.ALWAYS_ONE: kernel.RULE_ONE, ReportRule.ALWAYS_ZERO: kernel.RULE_ZERO, ReportRule.TRUTHFUL: kernel.RULE_TRUTHFUL}


def _check_profile(strategies: Sequence[Strategy], params: ProtocolParams) -> None:
    if len(strategies) != params.n:
        raise ParamError(f"expected {params.n} strategies, got {len(strategies)}")
    for s in strategies:
        if s.n != params.n:
            raise ParamError("every strategy needs per-peer policies of length n")


def furnish_matrix(
    strategies: Sequence[Strategy], coalition: CoalitionSpec | None, extension_mode: bool
) -> np.ndarray:
    n = len(strategies)
    f = np.zeros((n, n), dtype=np.int8)
    if coalition is None or not coalition.commitment or extension_mode:
        return f
    for j in coalition.members:
        for i in coalition.members:
            if i != j and strategies[i].store:
                f[j, i] = 1
    return f


def compile_profile(
    strategies: Sequence[Strategy],
    params: ProtocolParams,
    coalition: CoalitionSpec | None = None,
    extension_mode: bool = False,
) -> CompiledProfile:
    _check_profile(strategies, params)
    n = params.n
    serves = serving(strategies, params)
    audit = np.zeros((n, n), dtype=np.int8)
    rule = np.full((n, n), kernel.RULE_ZERO, dtype=np.int8)
    for j, s in enumerate(strategies):
        for i in range(n):
            if i == j:
                continue
            action = s.pair(i)
            audit[j, i] = action.audit
            rule[j, i] = _RULE_CODE[action.effective_rule]
    return CompiledProfile(
        serves=np.array(serves, dtype=np.int8),
        store=np.array([s.store for s in strategies], dtype=np.int8),
        recon=np.array([s.reconstruct and not s.store and sv for s, sv in zip(strategies, serves)], dtype=np.int8),
        submit=np.array([s.submit for s in strategies], dtype=np.int8),
        audit=audit,
        rule=rule,
        furnish=furnish_matrix(strategies, coalition, extension_mode),
    )


# ---------------------------------------------------------------- phases


def assign_audits(params: ProtocolParams, epoch_id: int) -> AuditAssignment:
    key = _prng.stream_key(params.seed, epoch_id, _prng.ASSIGN)
    entries = []
    for i in range(params.n):
        for m in range(params.p_s):
            entries.append(AuditEntry(i, _prng.randbelow(key, i * params.p_s + m, params.chunks), m))
    return AuditAssignment(epoch_id, tuple(entries))


def _garble(payload: bytes) -> bytes:
    return bytes([payload[0] ^ 0xFF]) + payload[1:]


def collect_responses(
    assignment: AuditAssignment,
    strategies: Sequence[Strategy],
    params: ProtocolParams,
    streams: _prng.EpochStreams,
    network: Network,
) -> tuple[dict[tuple[int, int, int], Response], tuple[int, ...]]:
    """Every auditee answers every other SP for each of its instances.

    Returns the responses keyed by (auditor, auditee, instance) and the
    number of reconstructed instances per SP.
    """
    n = params.n
    serves = serving(strategies, params)
    recon = [0] * n
    out = {}
    for entry in assignment.entries:
        i = entry.auditee
        reconstructed = serves[i] and not strategies[i].store
        if reconstructed:
            recon[i] += 1
        base = (i * params.p_s + entry.instance) * n
        for j in range(n):
            if j == i:
                continue
            if not serves[i]:
                out[(j, i, entry.instance)] = Response(j, i, entry.instance, entry.chunk_index, ResponseStatus.MISSING)
                continue
            payload = network.chunk(i, entry.chunk_index)
            proof = network.proof(i, entry.chunk_index)
            if _prng.below(streams.noise, base + j, params.epsilon):
                payload = _garble(payload)
            ok = verify_inclusion(network.commitment(i), proof, payload)
            status = ResponseStatus.VALID if ok else ResponseStatus.INVALID
            out[(j, i, entry.instance)] = Response(
                j, i, entry.instance, entry.chunk_index, status, payload, proof, reconstructed
            )
    return out, tuple(recon)


def _response_is_valid(resp: Response, network: Network) -> bool:
    if resp.payload is None or resp.proof is None:
        return False
    return verify_inclusion(network.commitment(resp.auditee), resp.proof, resp.payload)


def submit_reports(
    responses: dict[tuple[int, int, int], Response],
    strategies: Sequence[Strategy],
    params: ProtocolParams,
    network: Network,
) -> tuple[ReportMatrix, tuple[int, ...]]:
    """Report bits per auditor plus the number of audits each auditor actually performed."""
    n = params.n
    bits = [[[0] * params.p_s for _ in range(n)] for _ in range(n)]
    audits = [0] * n
    for (j, i, m), resp in sorted(responses.items()):
        action = strategies[j].pair(i)
        if action.audit:
            audits[j] += 1
        rule = action.effective_rule
        if rule is ReportRule.ALWAYS_ONE:
            bit = 1
        elif rule is ReportRule.ALWAYS_ZERO:
            bit = 0
        else:
            bit = int(_response_is_valid(resp, network))
        bits[j][i][m] = bit
    matrix = ReportMatrix(
        tuple(tuple(tuple(v) for v in row) for row in bits),
        tuple(s.submit for s in strategies),
    )
    return matrix, tuple(audits)


def aggregate_scores(reports: ReportMatrix, params: ProtocolParams) -> tuple[tuple[tuple[bool, ...], ...], tuple[Fraction, ...]]:
    """Per-instance strict-majority outcomes and the resulting exact scores."""
    n = params.n
    passes = []
    for i in range(n):
        row = []
        for m in range(params.p_s):
            votes = sum(reports.effective(j, i, m) for j in range(n) if j != i)
            row.append(2 * votes > n - 1)
        passes.append(tuple(row))
    scores = tuple(Fraction(sum(row), params.p_s) for row in passes)
    return tuple(passes), scores


def build_response_commitments(
    reports: ReportMatrix,
    responses: dict[tuple[int, int, int], Response],
    params: ProtocolParams,
) -> tuple[list[VectorCommitment], list[dict[tuple[int, int], int]], list[list[bytes]]]:
    """Each auditor commits, at report time, to the responses behind its 1-entries.

    Returns commitments, the leaf position of every (auditee, instance) 1-entry,
    and the committed leaves (kept locally by the auditor).
    """
    commitments, positions, leaves_all = [], [], []
    for j in range(params.n):
        leaves, pos = [], {}
        for i in range(params.n):
            if i == j:
                continue
            for m in range(params.p_s):
                if reports.effective(j, i, m):
                    pos[(i, m)] = len(leaves)
                    leaves.append(responses[(j, i, m)].to_bytes())
        commitments.append(commit_responses(leaves, params.hash_name))
        positions.append(pos)
        leaves_all.append(leaves)
    return commitments, positions, leaves_all


def run_inspections(
    reports: ReportMatrix,
    responses: dict[tuple[int, int, int], Response],
    params: ProtocolParams,
    streams: _prng.EpochStreams,
    network: Network,
    strategies: Sequence[Strategy],
    *,
    extension_mode: bool = False,
    response_commitments: tuple | None = None,
    coalition: CoalitionSpec | None = None,
) -> list[Inspection]:
    """Spot-check 1-entries with probability p_a each.

    Base mode: pass iff the auditor produces a valid chunk proof; a
    commitment coalition can furnish one on demand. Extension mode: the
    produced response must also open against the auditor's report-time
    response commitment, which a furnished proof never does.
    """
    if extension_mode and response_commitments is None:
        raise SimulationConfigError("extension mode needs response commitments")
    n = params.n
    furnish = furnish_matrix(strategies, coalition, False)
    out = []
    for j in range(n):
        if not reports.submitted[j]:
            continue
        for i in range(n):
            if i == j:
                continue
            for m in range(params.p_s):
                if not reports.effective(j, i, m):
                    continue
                if not _prng.below(streams.inspect, (j * n + i) * params.p_s + m, params.p_a):
                    continue
                held = responses[(j, i, m)]
                presented = held
                furnished = False
                if not _response_is_valid(held, network) and furnish[j, i]:
                    chunk_index = held.chunk_index
                    presented = dataclasses.replace(
                        held,
                        status=ResponseStatus.VALID,
                        payload=network.chunk(i, chunk_index),
                        proof=network.proof(i, chunk_index),
                    )
                    furnished = True
                ok = _response_is_valid(presented, network)
                if extension_mode:
                    commitments, positions, leaves = response_commitments
                    index = positions[j][(i, m)]
                    opening = MerkleTree(leaves[j], params.hash_name).open(index)
                    ok = ok and verify_inclusion(commitments[j], opening, presented.to_bytes())
                out.append(Inspection(j, i, m, ok, furnished and ok))
    return out


def run_extra_audits(
    scores: Sequence[Fraction],
    strategies: Sequence[Strategy],
    params: ProtocolParams,
    streams: _prng.EpochStreams,
    network: Network,
) -> list[list[ExtraAudit]]:
    """On-chain chunk audits for every SP with s_i < 1, round_half_up((1 - s_i^2) * c_max) of them."""
    out = []
    for i, s in enumerate(scores):
        passes = int(s * params.p_s)
        count = extra_audit_count(passes, params.p_s, params.c_max)
        row = []
        for t in range(count):
            counter = i * params.c_max + t
            chunk_index = _prng.randbelow(streams.extra_pick, counter, params.chunks)
            if not strategies[i].store:
                row.append(ExtraAudit(chunk_index, False))
                continue
            payload = network.chunk(i, chunk_index)
            if params.onchain_noise and params.epsilon > 0 and _prng.below(streams.extra_noise, counter, params.epsilon):
                payload = _garble(payload)
            row.append(ExtraAudit(chunk_index, verify_inclusion(network.commitment(i), network.proof(i, chunk_index), payload)))
        out.append(row)
    return out


COMPONENTS = (
    "storage_reward",
    "audit_reward",
    "storage_cost",
    "audit_cost",
    "reconstruction_cost",
    "inspection_slash",
    "storage_slash",
)


def utilities_from_counts(counts: np.ndarray, store: np.ndarray, params: ProtocolParams) -> dict[str, np.ndarray]:
    """Realised utility components from event counts; works on (N, C) or (E, N, C) arrays."""
    p = params.inexact()
    c = counts.astype(np.float64)
    comps = {
        "storage_reward": c[..., kernel.PASSES] / p.p_s * p.r_s * p.chunks,
        # a 1-entry that fails inspection forfeits its reward
        "audit_reward": (c[..., kernel.ONES] - c[..., kernel.INSPECTION_FAILS]) * p.r_a,
        "storage_cost": np.broadcast_to(store.astype(np.float64) * (p.c_s * p.chunks), c.shape[:-1]).copy(),
        "audit_cost": c[..., kernel.AUDITS] * p.c_a,
        "reconstruction_cost": c[..., kernel.RECON] * (p.k * p.c_read),
        "inspection_slash": c[..., kernel.INSPECTION_FAILS] * p.sigma_a,
        "storage_slash": c[..., kernel.EXTRA_FAILS] * p.sigma_s,
    }
    comps["total"] = (
        comps["storage_reward"]
        + comps["audit_reward"]
        - comps["storage_cost"]
        - comps["audit_cost"]
        - comps["reconstruction_cost"]
        - comps["inspection_slash"]
        - comps["storage_slash"]
    )
    return comps


def settle_epoch(ledger: EpochLedger, strategies: Sequence[Strategy], params: ProtocolParams) -> list[UtilityBreakdown]:
    counts = ledger.counts()
    store = np.array([s.store for s in strategies], dtype=np.int8)
    comps = utilities_from_counts(counts, store, params)
    return [UtilityBreakdown(*(float(comps[name][i]) for name in COMPONENTS)) for i in range(params.n)]


def run_epoch(
    params: ProtocolParams,
    strategies: Sequence[Strategy],
    epoch_id: int,
    *,
    coalition: CoalitionSpec | None = None,
    extension_mode: bool | None = None,
    network: Network | None = None,
) -> EpochLedger:
    _check_profile(strategies, params)
    if extension_mode is None:
        extension_mode = coalition.extension_mode if coalition is not None else False
    params = params.inexact()
    network = network or Network(params)
    streams = _prng.EpochStreams(params.seed, epoch_id)
    assignment = assign_audits(params, epoch_id)
    responses, recon = collect_responses(assignment, strategies, params, streams, network)
    reports, audits = submit_reports(responses, strategies, params, network)
    passes, scores = aggregate_scores(reports, params)
    commitments = build_response_commitments(reports, responses, params) if extension_mode else None
    inspections = run_inspections(
        reports,
        responses,
        params,
        streams,
        network,
        strategies,
        extension_mode=extension_mode,
        response_commitments=commitments,
        coalition=coalition,
    )
    extra = run_extra_audits(scores, strategies, params, streams, network)
    ledger = EpochLedger(
        assignment=assignment,
        responses=responses,
        reports=reports,
        passes=passes,
        scores=scores,
        inspections=inspections,
        extra_audits=extra,
        slashes=[],
        utilities=[],
        audits_performed=audits,
        reconstructions=recon,
        response_commitments=None if commitments is None else commitments[0],
    )
    ledger.utilities = settle_epoch(ledger, strategies, params)
    for i in range(params.n):
        inspection_fails = sum(1 for x in inspections if x.auditor == i and not x.passed)
        storage_fails = sum(not x.passed for x in extra[i])
        ledger.slashes.append(
            {
                "inspection": inspection_fails * float(params.sigma_a),
                "storage": storage_fails * float(params.sigma_s),
                "inspection_count": inspection_fails,
                "storage_count": storage_fails,
            }
        )
    return ledger


# ---------------------------------------------------------------- many epochs


@dataclass
class SimulationSummary:
    epochs: int
    seed: int
    backend: str
    p_s: int
    counts: np.ndarray = field(repr=False)  # (E, N, NCOUNTS)
    utilities: dict[str, np.ndarray] = field(repr=False)  # each (E, N)

    @property
    def scores(self) -> np.ndarray:
        return self.counts[..., kernel.PASSES] / self.p_s

    def mean(self, component: str = "total") -> np.ndarray:
        return self.utilities[component].mean(axis=0)

    def variance(self, component: str = "total") -> np.ndarray:
        if self.epochs < 2:
            return np.zeros(self.utilities[component].shape[1])
        return self.utilities[component].var(axis=0, ddof=1)

    def std_error(self, component: str = "total") -> np.ndarray:
        return np.sqrt(self.variance(component) / self.epochs)

    def totals(self) -> dict[str, np.ndarray]:
        """Event counts summed over epochs, per SP."""
        summed = self.counts.sum(axis=0)
        return {name: summed[:, idx] for idx, name in enumerate(kernel.COUNT_NAMES)}

    def to_json(self, include_trajectories: bool = True) -> dict:
        totals = self.totals()
        out = {
            "epochs": self.epochs,
            "seed": self.seed,
            "backend": self.backend,
            "mean": {k: self.mean(k).tolist() for k in self.utilities},
            "variance": {k: self.variance(k).tolist() for k in self.utilities},
            "std_error_total": self.std_error().tolist(),
            "slash_counts": {
                "inspection": totals["inspection_fails"].tolist(),
                "storage": totals["extra_fails"].tolist(),
            },
            "event_totals": {k: v.tolist() for k, v in totals.items()},
        }
        if include_trajectories:
            out["score_trajectories"] = self.scores.tolist()
        return out

    def utilities_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["epoch", "sp", *COMPONENTS, "total"])
        n = self.counts.shape[1]
        for e in range(self.epochs):
            for i in range(n):
                writer.writerow([e, i, *(repr(float(self.utilities[c][e, i])) for c in (*COMPONENTS, "total"))])
        return buf.getvalue()


def run_simulation(
    params: ProtocolParams,
    strategies: Sequence[Strategy],
    epochs: int,
    *,
    coalition: CoalitionSpec | None = None,
    extension_mode: bool | None = None,
    epoch0: int = 0,
    backend: str | None = None,
) -> SimulationSummary:
    """Realise ``epochs`` consecutive epochs starting at ``epoch0`` and summarise them."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if extension_mode is None:
        extension_mode = coalition.extension_mode if coalition is not None else False
    params = params.inexact()
    prof = compile_profile(strategies, params, coalition, extension_mode)
    name = backend or kernel.BACKEND
    counts = kernel.simulate_counts(
        params.n,
        params.p_s,
        params.c_max,
        params.seed,
        epoch0,
        epochs,
        prof.serves,
        prof.store,
        prof.recon,
        prof.submit,
        prof.audit,
        prof.rule,
        prof.furnish,
        float(params.epsilon),
        float(params.p_a),
        bool(params.onchain_noise),
        backend=name,
    )
    log.debug("simulated %d epochs with the %s kernel", epochs, name)
    return SimulationSummary(
        epochs=epochs,
        seed=params.seed,
        backend=name,
        p_s=params.p_s,
        counts=counts,
        utilities=utilities_from_counts(counts, prof.store, params),
    )
