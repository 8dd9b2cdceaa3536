from __future__ import annotations

import itertools
import random

import pytest

from cactusembed.model import Request, Substrate
from cactusembed.scenario import generate_instance


def full_substrate(names="uvw", cap=10.0, cost=1.0, types=None):
    """Complete directed substrate; ``types`` maps type -> hosts."""
    edges = {(a, b): (cap, cost) for a, b in itertools.permutations(names, 2)}
    types = types or {"A": list(names)}
    nres = {(t, u): (cap, cost) for t, hosts in types.items() for u in hosts}
    return Substrate.build(list(names), edges, nres)


def random_instance(seed: int, shape: str = "chain", n_nodes: int | None = None,
                    n_requests: int | None = None):
    """Small seeded instance from the bundled generator with varied settings."""
    rng = random.Random(seed)
    spec = {
        "topology": rng.choice(["ring", "star", "waxman"]),
        "substrate_nodes": n_nodes or rng.randint(3, 6),
        "requests": n_requests or rng.randint(1, 3),
        "shape": shape,
        "types": ["A", "B"],
        "type_probability": 0.7,
        "demand": (0.5, 2.0),
        "capacity": (1.0, 4.0),
        "seed": seed,
    }
    if shape == "chain":
        spec["chain_length"] = rng.randint(2, 4)
    else:
        spec["cycles"] = rng.choice([[3], [4], [3, 3]])
        spec["pendants"] = rng.randint(0, 1)
    sc = generate_instance(spec)
    return sc.substrate, sc.requests


@pytest.fixture
def small_chain():
    from cactusembed.scenario import load_scenario
    return load_scenario("fig2-chain")


@pytest.fixture
def sample_cactus():
    from cactusembed.scenario import load_scenario
    return load_scenario("fig3-cactus")


@pytest.fixture
def nondecomposable():
    from cactusembed.scenario import load_scenario
    return load_scenario("fig5-nondecomposable")


def chain_request(rid="r", types=("A", "A"), demands=None, edge_demand=1.0, profit=1.0):
    ids = [f"n{k}" for k in range(len(types))]
    demands = demands or [1.0] * len(types)
    nodes = {i: (t, d) for i, t, d in zip(ids, types, demands)}
    edges = {(a, b): edge_demand for a, b in zip(ids, ids[1:])}
    return Request.build(rid, nodes, edges, profit, "chain")


def project(lp, weighted):
    """LP solution values induced by ``{rid: [(weight, mapping), ...]}``.

    Builds the flow, induction, placement and load variables a convex
    combination of valid mappings would set, for any formulation family.
    """
    from cactusembed.extgraph import ExtNode
    from cactusembed.lp import (
        LpSolution, edge_flow_var, embed_var, flow_var, induce_var, load_var, node_map_var,
    )
    from cactusembed.model import mapping_load

    vals = {}

    def add(var, w):
        vals[var] = vals.get(var, 0.0) + w

    def lay(ve, u, w=None):
        return ExtNode("layer_copy", ve, u, w)

    def walk(rid, owner, seq, diff, m, start, end, w, f):
        s = seq[0][0]
        add(flow_var(rid, owner, (start, lay(seq[0], m.node_map[s], w))), f)
        for k, ve in enumerate(seq):
            orig = (ve[1], ve[0]) if ve in diff else ve
            path = list(m.edge_map[orig])
            for a, b in path:
                e = (lay(ve, b, w), lay(ve, a, w)) if ve in diff else (lay(ve, a, w), lay(ve, b, w))
                add(flow_var(rid, owner, e), f)
            if k + 1 < len(seq):
                h = m.node_map[ve[1]]
                add(flow_var(rid, owner, (lay(ve, h, w), lay(seq[k + 1], h, w))), f)
        t = seq[-1][1]
        add(flow_var(rid, owner, (lay(seq[-1], m.node_map[t], w), end)), f)

    family = lp.kind.split("-")[0]
    objective = 0.0
    for rid, items in weighted.items():
        model = lp.models[rid]
        req = model.request
        for f, m in items:
            add(embed_var(rid), f)
            for key, v in mapping_load(req, m).items():
                add(load_var(rid, key), f * v)
            objective += f * (req.profit if lp.sense == "max" else 0.0)
            if family == "MCF":
                for i, u in m.node_map.items():
                    add(node_map_var(rid, i, u), f)
                for ve, path in m.edge_map.items():
                    for se in path:
                        add(edge_flow_var(rid, ve, se), f)
            elif family == "SCEP":
                order = req.chain_order()
                seq = list(zip(order, order[1:]))
                if not seq:
                    u = m.node_map[order[0]]
                    mid = lay((order[0],), u)
                    add(flow_var(rid, ("chain",), (ExtNode("super_source"), mid)), f)
                    add(flow_var(rid, ("chain",), (mid, ExtNode("super_sink"))), f)
                else:
                    walk(rid, ("chain",), seq, frozenset(), m, ExtNode("super_source"),
                         ExtNode("super_sink"), None, f)
            else:
                dec = model.decomposition
                for i in dec.induced_nodes():
                    add(induce_var(rid, i, m.node_map[i]), f)
                for k, c in enumerate(dec.cycles):
                    g = model.graphs[("cycle", k)]
                    w = m.node_map[c.target]
                    for br in (c.branch1, c.branch2):
                        walk(rid, g.owner, br, c.diff, m, g.sources[m.node_map[c.source]],
                             g.sinks[w], w, f)
                for k, p in enumerate(dec.paths):
                    g = model.graphs[("path", k)]
                    walk(rid, g.owner, p.edges, p.diff, m, g.sources[m.node_map[p.source]],
                         g.sinks[m.node_map[p.target]], None, f)
    if lp.sense == "min":
        objective = sum(c * vals.get(v, 0.0) for v, c in lp.objective.items())
    return LpSolution("optimal", vals, objective, lp.kind)
