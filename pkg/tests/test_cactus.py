from __future__ import annotations

import pytest

from cactusembed.cactus import Disconnected, NotACactus, decompose_cactus, orient_and_check
from cactusembed.model import Request


def cactus(edges, rid="r"):
    nodes = {x: ("A", 1) for e in edges for x in e}
    return Request.build(rid, nodes, {e: 1 for e in edges}, shape="cactus")


def test_orientation_rooted_at_j(sample_cactus):
    o = orient_and_check(sample_cactus.requests[0], root="j")
    assert ("j", "i") in o.reversed_edges
    assert o.in_degree()["l"] == 2
    assert max(o.in_degree().values()) == 2


def test_cactus_decomposition_rooted_at_j(sample_cactus):
    d = decompose_cactus(orient_and_check(sample_cactus.requests[0], root="j"))
    assert len(d.cycles) == 1
    c = d.cycles[0]
    assert {c.branch1, c.branch2} == {(("j", "k"), ("k", "l")), (("j", "m"), ("m", "l"))}
    assert c.branching_nodes == {"m"}
    assert len(d.paths) == 4
    assert all(len(p.edges) == 1 for p in d.paths)


def test_chain_orientation_and_paths():
    r = cactus([("a", "b"), ("c", "b"), ("c", "d")])
    o = orient_and_check(r)
    assert max(o.in_degree().values()) <= 1
    assert o.reversed_edges == {("b", "c")}
    d = decompose_cactus(o)
    assert d.cycles == () and len(d.paths) == 3


def test_triangle_single_cycle():
    r = cactus([("a", "b"), ("b", "c"), ("c", "a")])
    d = decompose_cactus(orient_and_check(r))
    assert len(d.cycles) == 1 and d.paths == ()
    c = d.cycles[0]
    assert sorted([len(c.branch1), len(c.branch2)]) == [1, 2]
    oriented = set(orient_and_check(r).oriented_edges)
    assert set(c.branch1) | set(c.branch2) == oriented
    assert not set(c.branch1) & set(c.branch2)


def test_k4_rejected():
    edges = [("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")]
    with pytest.raises(NotACactus):
        orient_and_check(cactus(edges))


def test_opposite_edges_rejected():
    with pytest.raises(NotACactus):
        orient_and_check(cactus([("a", "b"), ("b", "a")]))


def test_disconnected_rejected():
    with pytest.raises(Disconnected):
        orient_and_check(cactus([("a", "b"), ("c", "d")]))


def test_two_cycles_sharing_node():
    r = cactus([("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"), ("d", "e"), ("e", "c")])
    d = decompose_cactus(orient_and_check(r))
    assert len(d.cycles) == 2 and d.paths == ()
    assert {c.source for c in d.cycles} == {"a", "c"}
    assert set(d.induced_nodes()) == {"a", "c"} | {c.target for c in d.cycles}
