import dataclasses
import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commitment_props import CHECKS, oracle_root
from shelby_audit.commitments import (
    EMPTY_RESPONSES_SENTINEL,
    CommitmentError,
    Digest,
    MerkleTree,
    Side,
    VectorCommitment,
    build_commitment,
    commit_responses,
    leaf_hash,
    open_inclusion,
    path_shape,
    verify_inclusion,
)

# sha256 root of ["a", "b", "c"] under the 0x00/0x01 prefixes with promotion, computed by hand:
# H(0x01 || H(0x01 || H(0x00 a) || H(0x00 b)) || H(0x00 c))
GOLDEN_ABC = "36642e73c2540ab121e3a6bf9545b0a24982cd830eb13d3cd19de3ce6c021ec1"


def _manual_abc():
    h = lambda data: hashlib.sha256(data).digest()  # noqa: E731
    la, lb, lc = (h(b"\x00" + x) for x in (b"a", b"b", b"c"))
    return h(b"\x01" + h(b"\x01" + la + lb) + lc).hex()


def test_golden_root_three_leaves():
    assert _manual_abc() == GOLDEN_ABC
    assert build_commitment([b"a", b"b", b"c"]).root.hex() == GOLDEN_ABC


def test_single_leaf_root_is_leaf_hash():
    c = build_commitment([b"only"])
    assert c.root == leaf_hash(b"only")
    proof = open_inclusion([b"only"], 0)
    assert proof.sibling_path == ()
    assert verify_inclusion(c, proof, b"only")


def test_leaf_and_node_domains_are_separated():
    # a leaf whose payload mimics an internal node must not collide with it
    la, lb = leaf_hash(b"x"), leaf_hash(b"y")
    fake = build_commitment([b"\x01" + la.value + lb.value])
    assert fake.root != build_commitment([b"x", b"y"]).root


@pytest.mark.parametrize("n", range(1, 18))
def test_every_position_opens(n):
    leaves = [bytes([i]) * (i + 1) for i in range(n)]
    tree = MerkleTree(leaves)
    assert tree.root.value == oracle_root(leaves)
    for i in range(n):
        proof = tree.open(i)
        assert proof == open_inclusion(leaves, i)
        assert [side for _, side in proof.sibling_path] == path_shape(i, n)
        assert verify_inclusion(tree.commitment, proof, leaves[i])


def test_index_substitution_rejected_on_four_leaves():
    leaves = [b"c0", b"c1", b"c2", b"c3"]
    tree = MerkleTree(leaves)
    proof = tree.open(1)
    for j in (0, 2, 3):
        assert not verify_inclusion(tree.commitment, dataclasses.replace(proof, leaf_index=j), leaves[1])
        assert not verify_inclusion(tree.commitment, proof, leaves[j])


def test_path_shape_four_leaves():
    assert path_shape(0, 4) == [Side.RIGHT, Side.RIGHT]
    assert path_shape(3, 4) == [Side.LEFT, Side.LEFT]
    # promoted last leaf skips a level
    assert path_shape(2, 3) == [Side.LEFT]


def test_wrong_leaf_count_rejected():
    leaves = [b"a", b"b", b"c", b"d", b"e"]
    tree = MerkleTree(leaves)
    proof = tree.open(4)
    forged = VectorCommitment(tree.root, 6)
    assert not verify_inclusion(forged, proof, b"e")


def test_malformed_proof_never_raises():
    tree = MerkleTree([b"a", b"b"])
    proof = tree.open(0)
    assert not verify_inclusion(tree.commitment, dataclasses.replace(proof, sibling_path=((None, "?"),)), b"a")
    assert not verify_inclusion(tree.commitment, dataclasses.replace(proof, leaf_index=-1), b"a")


def test_errors():
    with pytest.raises(CommitmentError):
        build_commitment([])
    with pytest.raises(CommitmentError):
        open_inclusion([b"a"], 1)
    with pytest.raises(CommitmentError):
        build_commitment([b"a"], hash_name="md5")
    with pytest.raises(CommitmentError):
        build_commitment([b"a"], hash_name="no-such-hash")
    with pytest.raises(CommitmentError):
        Digest(b"short")


def test_alternative_hash():
    leaves = [b"p", b"q", b"r"]
    c = build_commitment(leaves, hash_name="sha3_256")
    assert c.root.value == oracle_root(leaves, "sha3_256")
    assert c.root != build_commitment(leaves).root
    assert verify_inclusion(c, open_inclusion(leaves, 2, "sha3_256"), b"r")


def test_empty_response_commitment():
    c = commit_responses([])
    assert c.leaf_count == 0
    assert c.root == leaf_hash(EMPTY_RESPONSES_SENTINEL)
    assert commit_responses([b"r"]).leaf_count == 1


def test_digest_hex_roundtrip():
    d = leaf_hash(b"z")
    assert Digest.fromhex(d.hex()) == d


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.sampled_from(sorted(CHECKS)))
def test_properties(seed, name):
    CHECKS[name](random.Random(seed))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.binary(max_size=16), min_size=1, max_size=33), st.data())
def test_roundtrip_any_leaves(leaves, data):
    i = data.draw(st.integers(0, len(leaves) - 1))
    tree = MerkleTree(leaves)
    assert tree.root.value == oracle_root(leaves)
    assert verify_inclusion(tree.commitment, tree.open(i), leaves[i])
