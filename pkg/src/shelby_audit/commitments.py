"""Merkle vector commitments over chunk sets and audit-response sets.

Tree layout is fixed so roots are reproducible: leaves are hashed with a
0x00 prefix, internal nodes with a 0x01 prefix, levels are paired left to
right and an unpaired last node is promoted to the next level unchanged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
DIGEST_SIZE = 32
DEFAULT_HASH = "sha256"

# Committed in place of an empty response set.
EMPTY_RESPONSES_SENTINEL = b"shelby-audit:no-successful-responses"


class CommitmentError(ValueError):
    pass


class Side(str, Enum):
    """Position of a sibling digest relative to the running node."""

    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class Digest:
    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes) or len(self.value) != DIGEST_SIZE:
            raise CommitmentError(f"digest must be {DIGEST_SIZE} bytes")

    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def fromhex(cls, text: str) -> "Digest":
        return cls(bytes.fromhex(text))


@dataclass(frozen=True)
class VectorCommitment:
    root: Digest
    leaf_count: int
    hash_name: str = DEFAULT_HASH

    def to_json(self) -> dict:
        return {"root": self.root.hex(), "leaf_count": self.leaf_count, "hash": self.hash_name}


@dataclass(frozen=True)
class InclusionProof:
    """Opening of one committed position.

    ``leaf_count`` travels with the proof so the verifier can derive the
    expected path shape (promoted levels have no sibling) from the index.
    """

    leaf_index: int
    leaf_digest: Digest
    sibling_path: tuple[tuple[Digest, Side], ...]
    leaf_count: int

    def to_bytes(self) -> bytes:
        parts = [
            self.leaf_index.to_bytes(8, "big"),
            self.leaf_count.to_bytes(8, "big"),
            self.leaf_digest.value,
        ]
        for digest, side in self.sibling_path:
            parts.append(side.value.encode())
            parts.append(digest.value)
        return b"".join(parts)


def _hasher(hash_name: str):
    try:
        h = hashlib.new(hash_name)
    except (ValueError, TypeError) as exc:
        raise CommitmentError(f"unknown hash algorithm {hash_name!r}") from exc
    if h.digest_size != DIGEST_SIZE:
        raise CommitmentError(f"{hash_name} produces {h.digest_size}-byte digests, need {DIGEST_SIZE}")
    return h


def check_hash_name(hash_name: str) -> str:
    _hasher(hash_name)
    return hash_name


def leaf_hash(data: bytes, hash_name: str = DEFAULT_HASH) -> Digest:
    h = _hasher(hash_name)
    h.update(LEAF_PREFIX)
    h.update(data)
    return Digest(h.digest())


def node_hash(left: Digest, right: Digest, hash_name: str = DEFAULT_HASH) -> Digest:
    h = _hasher(hash_name)
    h.update(NODE_PREFIX)
    h.update(left.value)
    h.update(right.value)
    return Digest(h.digest())


def _levels(leaves: Sequence[bytes], hash_name: str) -> list[list[Digest]]:
    level = [leaf_hash(leaf, hash_name) for leaf in leaves]
    levels = [level]
    while len(level) > 1:
        nxt = [node_hash(level[k], level[k + 1], hash_name) for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        levels.append(nxt)
        level = nxt
    return levels


def path_shape(leaf_index: int, leaf_count: int) -> list[Side]:
    """Sides of the siblings met walking from ``leaf_index`` to the root."""
    sides = []
    index, width = leaf_index, leaf_count
    while width > 1:
        if index % 2:
            sides.append(Side.LEFT)
        elif index + 1 < width:
            sides.append(Side.RIGHT)
        index //= 2
        width = (width + 1) // 2
    return sides


def build_commitment(leaves: Sequence[bytes], hash_name: str = DEFAULT_HASH) -> VectorCommitment:
    if len(leaves) == 0:
        raise CommitmentError("cannot commit to an empty leaf sequence")
    levels = _levels(leaves, hash_name)
    return VectorCommitment(levels[-1][0], len(leaves), hash_name)


def open_inclusion(leaves: Sequence[bytes], index: int, hash_name: str = DEFAULT_HASH) -> InclusionProof:
    if not 0 <= index < len(leaves):
        raise CommitmentError(f"index {index} out of range for {len(leaves)} leaves")
    levels = _levels(leaves, hash_name)
    return _open_from_levels(levels, index)


def _open_from_levels(levels: list[list[Digest]], index: int) -> InclusionProof:
    leaf_digest = levels[0][index]
    path = []
    k = index
    for level in levels[:-1]:
        if k % 2:
            path.append((level[k - 1], Side.LEFT))
        elif k + 1 < len(level):
            path.append((level[k + 1], Side.RIGHT))
        k //= 2
    return InclusionProof(index, leaf_digest, tuple(path), len(levels[0]))


class MerkleTree:
    """Keeps every level so repeated openings of one leaf set are cheap."""

    def __init__(self, leaves: Sequence[bytes], hash_name: str = DEFAULT_HASH):
        if len(leaves) == 0:
            raise CommitmentError("cannot commit to an empty leaf sequence")
        self.hash_name = hash_name
        self.leaves = list(leaves)
        self._levels = _levels(self.leaves, hash_name)
        self.commitment = VectorCommitment(self._levels[-1][0], len(self.leaves), hash_name)

    @property
    def root(self) -> Digest:
        return self.commitment.root

    def open(self, index: int) -> InclusionProof:
        if not 0 <= index < len(self.leaves):
            raise CommitmentError(f"index {index} out of range for {len(self.leaves)} leaves")
        return _open_from_levels(self._levels, index)


def verify_inclusion(
    root: Digest | VectorCommitment,
    proof: InclusionProof,
    expected_leaf: bytes,
    hash_name: str | None = None,
) -> bool:
    """True iff ``expected_leaf`` sits at ``proof.leaf_index`` under ``root``.

    Never raises: anything malformed is simply a failed verification.
    """
    try:
        if isinstance(root, VectorCommitment):
            if root.leaf_count != proof.leaf_count:
                return False
            hash_name = hash_name or root.hash_name
            root = root.root
        hash_name = hash_name or DEFAULT_HASH
        if not 0 <= proof.leaf_index < proof.leaf_count:
            return False
        node = leaf_hash(expected_leaf, hash_name)
        if node != proof.leaf_digest:
            return False
        expected_sides = path_shape(proof.leaf_index, proof.leaf_count)
        if len(expected_sides) != len(proof.sibling_path):
            return False
        for (sibling, side), want in zip(proof.sibling_path, expected_sides):
            if side != want:
                return False
            node = node_hash(sibling, node, hash_name) if side is Side.LEFT else node_hash(node, sibling, hash_name)
        return node == root
    except Exception:
        return False


def commit_responses(responses: Sequence[bytes], hash_name: str = DEFAULT_HASH) -> VectorCommitment:
    """Commit to an auditor's successful responses, in (auditee, instance) order.

    An auditor with nothing to commit gets a commitment to a fixed sentinel
    leaf with ``leaf_count`` 0.
    """
    if len(responses) == 0:
        return VectorCommitment(leaf_hash(EMPTY_RESPONSES_SENTINEL, hash_name), 0, hash_name)
    return build_commitment(responses, hash_name)
