"""Brute-force ground truth for small instances."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import networkx as nx

from .extgraph import admissible_placements
from .model import (
    LoadVector,
    Mapping,
    Request,
    Substrate,
    check_mapping_valid,
    mapping_cost,
    mapping_load,
)

MAX_SUBSTRATE_NODES = 12
MAX_REQUEST_NODES = 6
BUDGET = 10**7
TOL = 1e-9


class InstanceTooLarge(ValueError):
    pass


class Infeasible(RuntimeError):
    pass


@dataclass
class MappingEnumeration:
    mappings: dict[str, list[Mapping]] = field(default_factory=dict)

    def count(self) -> dict[str, int]:
        return {rid: len(ms) for rid, ms in self.mappings.items()}


@dataclass
class ExactResult:
    objective: float
    selection: list[str]
    mappings: dict[str, Mapping]
    load: LoadVector


def enumerate_valid_mappings(
    request: Request,
    substrate: Substrate,
    max_path_len: int | None = None,
    budget: int = BUDGET,
) -> list[Mapping]:
    """All valid mappings whose routes are simple paths of at most ``max_path_len`` edges."""
    if len(substrate.nodes) > MAX_SUBSTRATE_NODES:
        raise InstanceTooLarge(f"substrate has {len(substrate.nodes)} > {MAX_SUBSTRATE_NODES} nodes")
    if len(request.nodes) > MAX_REQUEST_NODES:
        raise InstanceTooLarge(f"request {request.id} has {len(request.nodes)} > {MAX_REQUEST_NODES} nodes")
    cap = len(substrate.nodes) if max_path_len is None else max_path_len
    pl = admissible_placements(substrate, request)
    vnodes = sorted(request.nodes)
    vedges = sorted(request.edges)
    graphs = {}
    for ve in vedges:
        g = nx.DiGraph()
        g.add_nodes_from(substrate.nodes)
        g.add_edges_from(pl.edges[ve])
        graphs[ve] = g
    routes: dict = {}

    def route_options(ve, a, b) -> list[tuple]:
        if (ve, a, b) not in routes:
            if a == b:
                routes[(ve, a, b)] = [()]
            else:
                paths = nx.all_simple_paths(graphs[ve], a, b, cutoff=cap)
                routes[(ve, a, b)] = sorted(tuple(zip(p, p[1:])) for p in paths)
        return routes[(ve, a, b)]

    out = []
    seen = 0
    for hosts in itertools.product(*(pl.nodes[i] for i in vnodes)):
        node_map = dict(zip(vnodes, hosts))
        options = [route_options(ve, node_map[ve[0]], node_map[ve[1]]) for ve in vedges]
        seen += math.prod(len(o) for o in options)
        if seen > budget:
            raise InstanceTooLarge(f"request {request.id}: more than {budget} candidate mappings")
        for combo in itertools.product(*options):
            m = Mapping(dict(node_map), dict(zip(vedges, combo)))
            if check_mapping_valid(request, m, substrate)[0]:
                out.append(m)
    return out


def enumerate_instance(
    substrate: Substrate, requests: list[Request], max_path_len: int | None = None
) -> MappingEnumeration:
    return MappingEnumeration(
        {r.id: enumerate_valid_mappings(r, substrate, max_path_len) for r in requests}
    )


def exact_optimum(
    substrate: Substrate,
    requests: list[Request],
    variant: str = "profit",
    enumeration: MappingEnumeration | None = None,
    budget: int = BUDGET,
) -> ExactResult:
    """Exhaustive search over per-request mapping choices under capacity limits."""
    if variant not in ("profit", "cost"):
        raise ValueError(f"variant must be profit or cost, got {variant}")
    enumeration = enumeration or enumerate_instance(substrate, requests)
    reqs = sorted(requests, key=lambda r: r.id)
    options = []
    for r in reqs:
        ms = enumeration.mappings.get(r.id, [])
        loads = [mapping_load(r, m) for m in ms]
        costs = [mapping_cost(r, m, substrate) for m in ms]
        options.append(list(zip(ms, loads, costs)))
    space = math.prod(len(o) + (1 if variant == "profit" else 0) for o in options)
    if space > budget:
        raise InstanceTooLarge(f"search space {space} exceeds budget {budget}")
    if variant == "cost" and any(not o for o in options):
        raise Infeasible("some request has no valid mapping")

    caps = {k: substrate.capacity(k) for k in substrate.resource_keys()}
    sign = 1.0 if variant == "profit" else -1.0
    best: dict = {"value": -math.inf, "picks": None}
    picks: list[int | None] = [None] * len(reqs)
    total: LoadVector = {}

    # optimistic remainder: max profit still collectible, min cost still payable
    rest = [0.0] * (len(reqs) + 1)
    for n in range(len(reqs) - 1, -1, -1):
        if variant == "profit":
            gain = reqs[n].profit if options[n] else 0.0
        else:
            gain = -min(c for _, _, c in options[n])
        rest[n] = rest[n + 1] + gain

    def fits(load: LoadVector) -> bool:
        return all(total.get(k, 0.0) + v <= caps[k] + TOL for k, v in load.items())

    def search(n: int, value: float) -> None:
        if value + rest[n] <= best["value"] + TOL:
            return
        if n == len(reqs):
            best["value"] = value
            best["picks"] = list(picks)
            return
        for k, (_, load, cost) in enumerate(options[n]):
            if not fits(load):
                continue
            for key, v in load.items():
                total[key] = total.get(key, 0.0) + v
            picks[n] = k
            gain = reqs[n].profit if variant == "profit" else -cost
            search(n + 1, value + gain)
            for key, v in load.items():
                total[key] -= v
            picks[n] = None
        if variant == "profit":
            search(n + 1, value)

    search(0, 0.0)
    if best["picks"] is None:
        if variant == "cost":
            raise Infeasible("no assignment of mappings respects the capacities")
        best["picks"] = [None] * len(reqs)
        best["value"] = 0.0
    chosen = {}
    load: LoadVector = {}
    for r, opts, k in zip(reqs, options, best["picks"]):
        if k is None:
            continue
        m, l, _ = opts[k]
        chosen[r.id] = m
        for key, v in l.items():
            load[key] = load.get(key, 0.0) + v
    return ExactResult(sign * best["value"], sorted(chosen), chosen, load)
