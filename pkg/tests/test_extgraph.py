from __future__ import annotations

import pytest

from cactusembed.cactus import decompose_cactus, orient_and_check
from cactusembed.extgraph import (
    EmptyPlacement,
    admissible_placements,
    build_cactus_extended,
    build_chain_extended,
)
from cactusembed.model import Request

from conftest import chain_request, full_substrate


def _partitioned(g):
    horiz = {e for lst in g.horizontal_index.values() for e, _ in lst}
    vert = {e for lst in g.vertical_index.values() for e, _ in lst}
    ends = set(g.source_edges()) | set(g.sink_edges())
    for e in g.edges:
        kind = g.info[e].kind
        assert (e in horiz) == (kind == "intra")
        if kind == "inter":
            assert e in vert
        if kind in ("source", "sink"):
            assert e in ends


def test_chain_node_count():
    s = full_substrate()
    g = build_chain_extended(chain_request(types=("A", "A", "A")), s)
    assert len(g.nodes) == 2 + 2 * 3
    _partitioned(g)


def test_chain_layer_shape(small_chain):
    g = build_chain_extended(small_chain.requests[0], small_chain.substrate)
    kinds = [g.info[e].kind for e in g.edges]
    assert kinds.count("source") == 1
    assert kinds.count("sink") == 1
    assert kinds.count("inter") == 2
    _partitioned(g)


def test_single_edge_chain_has_no_inter_edges():
    g = build_chain_extended(chain_request(types=("A", "A")), full_substrate())
    assert not [e for e in g.edges if g.info[e].kind == "inter"]


def test_layers_only_go_forward():
    r = chain_request(types=("A", "A", "A", "A"))
    g = build_chain_extended(r, full_substrate())
    layer = {ve: k for k, ve in enumerate(r.chain_edges())}
    for a, b in g.edges:
        if a.kind == "layer_copy" and b.kind == "layer_copy":
            assert layer[a.vedge] <= layer[b.vedge]


def test_empty_placement():
    r = chain_request(types=("A", "Z"))
    with pytest.raises(EmptyPlacement):
        build_chain_extended(r, full_substrate())


def test_cycle_replicas(sample_cactus):
    r = sample_cactus.requests[0]
    dec = decompose_cactus(orient_and_check(r, root="j"))
    graphs = build_cactus_extended(dec, r, sample_cactus.substrate)
    g = graphs[("cycle", 0)]
    assert set(g.replicas) == {"v", "w"}
    layers = {(n.vedge, n.replica) for n in g.inner_nodes()}
    assert len(layers) == 4 * 2
    assert len(g.inner_nodes()) == 4 * 2 * 3
    for gr in graphs.values():
        _partitioned(gr)


def test_reversed_path_uses_reversed_substrate_edges(sample_cactus):
    r = sample_cactus.requests[0]
    dec = decompose_cactus(orient_and_check(r, root="j"))
    k = next(n for n, p in enumerate(dec.paths) if p.edges == (("j", "i"),))
    g = build_cactus_extended(dec, r, sample_cactus.substrate)[("path", k)]
    intra = [e for e in g.edges if g.info[e].kind == "intra"]
    assert intra
    for a, b in intra:
        u, v = g.info[(a, b)].sedge
        assert (a.snode, b.snode) == (v, u)
        assert g.info[(a, b)].vedge == ("i", "j")


def test_path_with_two_source_hosts():
    s = full_substrate(types={"A": ["u", "v"], "B": ["u", "v", "w"]})
    r = Request.build("r", {"a": ("A", 1), "b": ("B", 1)}, {("a", "b"): 1}, shape="cactus")
    dec = decompose_cactus(orient_and_check(r))
    g = build_cactus_extended(dec, r, s)[("path", 0)]
    assert len(g.sources) == 2
    out = g.out_edges()
    assert all(len(out[src]) == 1 for src in g.sources.values())


def test_admissibility_is_non_strict():
    s = full_substrate(cap=5.0)
    r = chain_request(types=("A", "A"), demands=[5.0, 7.0])
    pl = admissible_placements(s, r)
    assert pl.nodes["n0"] == ("u", "v", "w")
    assert pl.nodes["n1"] == ()
