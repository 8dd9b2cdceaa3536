"""Turn relaxed LP solutions into weighted sets of valid mappings."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

import networkx as nx

from .cactus import CactusDecomposition
from .extgraph import ExtEdge, ExtendedGraph, ExtNode
from .lp import (
    LinearProgram,
    LpSolution,
    edge_flow_var,
    embed_var,
    flow_var,
    induce_var,
    load_var,
    node_map_var,
)
from .model import (
    LoadVector,
    Mapping,
    Request,
    Substrate,
    check_mapping_valid,
    mapping_cost,
    mapping_load,
)

ZERO = 1e-9
RESIDUAL_TOL = 1e-6


class ResidualFlow(RuntimeError):
    pass


@dataclass(frozen=True)
class FractionalMapping:
    weight: float
    mapping: Mapping
    load: LoadVector


@dataclass
class DecompositionSet:
    requests: dict[str, Request]
    mappings: dict[str, list[FractionalMapping]] = field(default_factory=dict)

    def total_weight(self, rid: str) -> float:
        return sum(fm.weight for fm in self.mappings.get(rid, []))

    def aggregate_load(self) -> LoadVector:
        out: LoadVector = {}
        for fms in self.mappings.values():
            for fm in fms:
                for key, val in fm.load.items():
                    out[key] = out.get(key, 0.0) + fm.weight * val
        return out


def _as_request_map(requests: Iterable[Request] | dict[str, Request]) -> dict[str, Request]:
    if isinstance(requests, dict):
        return dict(requests)
    return {r.id: r for r in requests}


def _widest_path(
    g: ExtendedGraph,
    flows: dict[ExtEdge, float],
    start: ExtNode,
    targets: set[ExtNode],
    allowed: Callable[[ExtEdge], bool] | None = None,
) -> list[ExtEdge] | None:
    """Max-bottleneck path over positive-flow edges, ties by node label."""
    out = g.out_edges()
    best = {start: math.inf}
    parent: dict[ExtNode, ExtEdge] = {}
    done = set()
    heap = [(-math.inf, start.label(), 0, start)]
    counter = 1
    while heap:
        neg, _, _, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        if n in targets:
            path = []
            while n != start:
                e = parent[n]
                path.append(e)
                n = e[0]
            return path[::-1]
        width = -neg
        for e in out[n]:
            f = flows.get(e, 0.0)
            if f <= ZERO or (allowed is not None and not allowed(e)):
                continue
            m = e[1]
            w = min(width, f)
            if m not in done and w > best.get(m, 0.0):
                best[m] = w
                parent[m] = e
                heapq.heappush(heap, (-w, m.label(), counter, m))
                counter += 1
    return None


def cancel_cycles(g: ExtendedGraph, flows: dict[ExtEdge, float]) -> float:
    """Remove circulations from ``flows`` in place; returns the total cancelled."""
    removed = 0.0
    while True:
        dg = nx.DiGraph()
        dg.add_edges_from(e for e in g.edges if flows.get(e, 0.0) > ZERO)
        try:
            cyc = nx.find_cycle(dg)
        except nx.NetworkXNoCycle:
            return removed
        amount = min(flows[(a, b)] for a, b in cyc)
        for a, b in cyc:
            flows[(a, b)] -= amount
            if flows[(a, b)] <= ZERO:
                flows[(a, b)] = 0.0
        removed += amount


class _Builder:
    """Collects one mapping while walking extended paths."""

    def __init__(self, request: Request, reversed_edges: frozenset = frozenset()):
        self.request = request
        self.reversed_edges = reversed_edges
        self.node_map: dict[str, str] = {}
        self.edge_lists: dict = {}
        self.new_nodes: list[str] = []

    def assign(self, j: str, host: str) -> None:
        old = self.node_map.get(j)
        if old is not None and old != host:
            raise ResidualFlow(f"request {self.request.id}: node {j} reached on {old} and {host}")
        if old is None:
            self.node_map[j] = host
            self.new_nodes.append(j)

    def walk(self, g: ExtendedGraph, path: list[ExtEdge]) -> None:
        for e in path:
            info = g.info[e]
            if info.kind == "intra":
                self.edge_lists.setdefault(info.vedge, []).append(info.sedge)
            elif info.kind in ("source", "inter", "sink"):
                self.assign(info.vnode, info.host)

    def mapping(self) -> Mapping:
        edge_map = {}
        for ve in self.request.edges:
            seq = list(self.edge_lists.get(ve, []))
            oriented = (ve[1], ve[0])
            if oriented in self.reversed_edges:
                seq.reverse()
            edge_map[ve] = tuple(seq)
        return Mapping(dict(self.node_map), edge_map)


def _normalize_graphs(extgraphs) -> dict[str, dict[tuple, ExtendedGraph]]:
    out = {}
    for rid, g in extgraphs.items():
        out[rid] = {g.owner: g} if isinstance(g, ExtendedGraph) else g
    return out


def decompose_chain(
    solution: LpSolution, extgraphs, requests, cancel: bool = True
) -> DecompositionSet:
    """Repeatedly peel o+ -> o- paths off the chain flow, widest first."""
    reqs = _as_request_map(requests)
    graphs = _normalize_graphs(extgraphs)
    out = DecompositionSet(reqs)
    for rid, req in reqs.items():
        out.mappings[rid] = []
        if rid not in graphs or not graphs[rid]:
            continue
        g = graphs[rid][("chain",)]
        flows = {e: solution.value(flow_var(rid, g.owner, e)) for e in g.edges}
        if cancel:
            cancel_cycles(g, flows)
        x = solution.value(embed_var(rid))
        src = ExtNode("super_source")
        snk = ExtNode("super_sink")
        while x > ZERO:
            path = _widest_path(g, flows, src, {snk})
            if path is None:
                if x > RESIDUAL_TOL:
                    raise ResidualFlow(f"request {rid}: {x} flow left without an o+ -> o- path")
                break
            weight = min([x] + [flows[e] for e in path])
            b = _Builder(req)
            b.walk(g, path)
            m = b.mapping()
            out.mappings[rid].append(FractionalMapping(weight, m, mapping_load(req, m)))
            for e in path:
                flows[e] -= weight
            x -= weight
    return out


def decompose_cactus(
    solution: LpSolution,
    extgraphs,
    decompositions: dict[str, CactusDecomposition],
    requests,
    cancel: bool = True,
    orientations: dict | None = None,
) -> DecompositionSet:
    """Queue-driven decomposition of cactus flows, one mapping per iteration."""
    reqs = _as_request_map(requests)
    graphs = _normalize_graphs(extgraphs)
    out = DecompositionSet(reqs)
    for rid, req in reqs.items():
        out.mappings[rid] = []
        dec = decompositions.get(rid)
        if dec is None:
            continue
        out.mappings[rid] = _decompose_one_cactus(solution, graphs[rid], dec, req, cancel)
    return out


def _decompose_one_cactus(
    solution: LpSolution,
    graphs: dict[tuple, ExtendedGraph],
    dec: CactusDecomposition,
    req: Request,
    cancel: bool,
) -> list[FractionalMapping]:
    rid = req.id
    vals: dict = {}
    gflows: dict[tuple, dict[ExtEdge, float]] = {}
    for owner, g in graphs.items():
        fl = {e: solution.value(flow_var(rid, owner, e)) for e in g.edges}
        if cancel:
            cancel_cycles(g, fl)
        gflows[owner] = fl
    induced = dec.induced_nodes()
    for i in induced:
        for (j, u), v in _induce_values(solution, rid, i).items():
            vals[induce_var(rid, j, u)] = v
    x = solution.value(embed_var(rid))
    reversed_edges = frozenset(e for c in dec.cycles for e in c.diff) | frozenset(
        e for p in dec.paths for e in p.diff
    )
    cycles_at: dict[str, list] = {}
    for k, c in enumerate(dec.cycles):
        cycles_at.setdefault(c.source, []).append((k, c))
    paths_at: dict[str, list] = {}
    for k, p in enumerate(dec.paths):
        paths_at.setdefault(p.source, []).append((k, p))
    induced_set = set(induced)

    result = []
    while x > ZERO:
        roots = [(v, key.key[1]) for key, v in vals.items()
                 if key.key[0] == dec.root and v > ZERO]
        if not roots:
            if x > RESIDUAL_TOL:
                raise ResidualFlow(f"request {rid}: {x} left but no root flow")
            break
        roots.sort(key=lambda t: (-t[0], t[1]))
        b = _Builder(req, reversed_edges)
        b.assign(dec.root, roots[0][1])
        used_flows: list[tuple[tuple, ExtEdge]] = []
        queue = deque([dec.root])
        seen = {dec.root}
        failed = False
        while queue and not failed:
            i = queue.popleft()
            u = b.node_map[i]
            for k, cyc in cycles_at.get(i, []):
                g = graphs[("cycle", k)]
                fl = gflows[g.owner]
                b1, b2 = set(cyc.branch1), set(cyc.branch2)
                p1 = _widest_path(g, fl, g.sources[u], set(g.sinks.values()),
                                  _branch_filter(b1, None))
                if p1 is None:
                    failed = True
                    break
                w = p1[-1][1].snode
                p2 = _widest_path(g, fl, g.sources[u], {g.sinks[w]}, _branch_filter(b2, w))
                if p2 is None:
                    failed = True
                    break
                for p in (p1, p2):
                    b.walk(g, p)
                    used_flows += [(g.owner, e) for e in p]
            if failed:
                break
            for k, path in paths_at.get(i, []):
                g = graphs[("path", k)]
                p = _widest_path(g, gflows[g.owner], g.sources[u], set(g.sinks.values()))
                if p is None:
                    failed = True
                    break
                b.walk(g, p)
                used_flows += [(g.owner, e) for e in p]
            for j in b.new_nodes:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
            b.new_nodes.clear()
        if failed:
            if x > RESIDUAL_TOL:
                raise ResidualFlow(f"request {rid}: no positive extended path for {x} remaining")
            break
        used_induce = [induce_var(rid, j, b.node_map[j]) for j in sorted(induced_set)]
        used_flows = list(dict.fromkeys(used_flows))
        weight = min([x] + [vals.get(v, 0.0) for v in used_induce]
                     + [gflows[o][e] for o, e in used_flows])
        if weight <= ZERO:
            if x > RESIDUAL_TOL:
                raise ResidualFlow(f"request {rid}: zero-weight iteration with {x} remaining")
            break
        for v in used_induce:
            vals[v] -= weight
        for o, e in used_flows:
            gflows[o][e] -= weight
        x -= weight
        m = b.mapping()
        result.append(FractionalMapping(weight, m, mapping_load(req, m)))
    return result


def _induce_values(solution: LpSolution, rid: str, i: str) -> dict:
    out = {}
    for var, v in solution.values.items():
        if var.kind == "induce" and var.request == rid and var.key[0] == i:
            out[var.key] = v
    return out


def _branch_filter(branch: set, replica: str | None) -> Callable[[ExtEdge], bool]:
    def ok(e: ExtEdge) -> bool:
        for n in e:
            if n.kind == "layer_copy":
                if n.vedge not in branch:
                    return False
                if replica is not None and n.replica != replica:
                    return False
            elif n.kind == "path_sink" and replica is not None and n.snode != replica:
                return False
        return True

    return ok


def decompose_solution(lp: LinearProgram, solution: LpSolution) -> DecompositionSet:
    """Dispatch on the formulation family that produced ``solution``."""
    family = lp.kind.split("-")[0]
    reqs = {rid: m.request for rid, m in lp.models.items()}
    if family == "SCEP":
        return decompose_chain(solution, lp.extgraphs, reqs)
    if family == "SCGEP":
        decs = {rid: m.decomposition for rid, m in lp.models.items() if m.decomposition}
        return decompose_cactus(solution, lp.extgraphs, decs, reqs)
    return try_decompose_mcf(solution, reqs, lp.substrate)[0]


def try_decompose_mcf(
    solution: LpSolution, requests, substrate: Substrate, budget: int = 20000
) -> tuple[DecompositionSet, dict[str, float]]:
    """Greedily extract valid mappings from an MCF solution.

    Returns the extracted set and, per request, the part of x_r that no
    valid mapping could explain.
    """
    reqs = _as_request_map(requests)
    out = DecompositionSet(reqs)
    residual = {}
    for rid, req in reqs.items():
        vals = {var: v for var, v in solution.values.items() if var.request == rid}
        x = vals.get(embed_var(rid), 0.0)
        out.mappings[rid] = []
        while x > ZERO:
            found = _find_mcf_mapping(req, vals, substrate, budget)
            if found is None:
                break
            m, used = found
            weight = min([x] + [vals[v] for v in used])
            if weight <= ZERO:
                break
            for v in used:
                vals[v] -= weight
            x -= weight
            out.mappings[rid].append(FractionalMapping(weight, m, mapping_load(req, m)))
        residual[rid] = x if x > ZERO else 0.0
    return out, residual


def _find_mcf_mapping(req: Request, vals: dict, substrate: Substrate, budget: int):
    rid = req.id
    adj: dict[str, set[str]] = {i: set() for i in req.nodes}
    for i, j in req.edges:
        adj[i].add(j)
        adj[j].add(i)
    order: list[str] = []
    for start in sorted(req.nodes):
        if start in order:
            continue
        order.append(start)
        q = deque([start])
        while q:
            i = q.popleft()
            for j in sorted(adj[i]):
                if j not in order:
                    order.append(j)
                    q.append(j)
    candidates = {}
    for i in req.nodes:
        hs = [(vals.get(node_map_var(rid, i, u), 0.0), u) for u in substrate.nodes]
        hs = [h for h in hs if h[0] > ZERO]
        hs.sort(key=lambda t: (-t[0], t[1]))
        candidates[i] = [u for _, u in hs]
    zflow = {}
    for ve in req.edges:
        g = nx.DiGraph()
        for se in substrate.edges:
            v = vals.get(edge_flow_var(rid, ve, se), 0.0)
            if v > ZERO:
                g.add_edge(se[0], se[1], weight=v)
        zflow[ve] = g

    steps = [0]
    node_map: dict[str, str] = {}
    paths: dict = {}

    def route(ve) -> tuple | None:
        a, b = node_map[ve[0]], node_map[ve[1]]
        if a == b:
            return ()
        g = zflow[ve]
        if a not in g or b not in g:
            return None
        p = _widest_substrate_path(g, a, b)
        return None if p is None else tuple(p)

    def dfs(pos: int) -> bool:
        if pos == len(order):
            return True
        i = order[pos]
        for u in candidates[i]:
            steps[0] += 1
            if steps[0] > budget:
                return False
            node_map[i] = u
            added = []
            ok = True
            for ve in req.edges:
                if i in ve and ve[0] in node_map and ve[1] in node_map and ve not in paths:
                    p = route(ve)
                    if p is None:
                        ok = False
                        break
                    paths[ve] = p
                    added.append(ve)
            if ok and dfs(pos + 1):
                return True
            for ve in added:
                del paths[ve]
            del node_map[i]
        return False

    if not dfs(0):
        return None
    used = [embed_var(rid)] + [node_map_var(rid, i, u) for i, u in node_map.items()]
    for ve, p in paths.items():
        used += [edge_flow_var(rid, ve, se) for se in p]
    m = Mapping(dict(node_map), {ve: paths[ve] for ve in req.edges})
    return m, used


def _widest_substrate_path(g: nx.DiGraph, a: str, b: str) -> list | None:
    best = {a: math.inf}
    parent = {}
    done = set()
    heap = [(-math.inf, a)]
    while heap:
        neg, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        if n == b:
            path = []
            while n != a:
                path.append((parent[n], n))
                n = parent[n]
            return path[::-1]
        for m in sorted(g.successors(n)):
            w = min(-neg, g[n][m]["weight"])
            if m not in done and w > best.get(m, 0.0):
                best[m] = w
                parent[m] = n
                heapq.heappush(heap, (-w, m))
    return None


@dataclass
class VerificationReport:
    checks: dict[str, bool]
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def verify_decomposition(
    dset: DecompositionSet,
    solution: LpSolution,
    requests=None,
    substrate: Substrate | None = None,
    tol: float = 1e-6,
) -> VerificationReport:
    """Validity, completeness, load domination, profit identity and cost bound."""
    reqs = _as_request_map(requests) if requests is not None else dset.requests
    msgs = []
    valid = True
    for rid, fms in dset.mappings.items():
        for k, fm in enumerate(fms):
            ok, diag = check_mapping_valid(reqs[rid], fm.mapping, substrate)
            if not ok:
                valid = False
                msgs.append(f"{rid}[{k}]: {'; '.join(diag)}")
            expect = mapping_load(reqs[rid], fm.mapping)
            if any(abs(expect.get(key, 0.0) - fm.load.get(key, 0.0)) > tol
                   for key in set(expect) | set(fm.load)):
                valid = False
                msgs.append(f"{rid}[{k}]: stored load differs from mapping load")
            if not (0.0 < fm.weight <= 1.0 + tol):
                valid = False
                msgs.append(f"{rid}[{k}]: weight {fm.weight} outside (0,1]")

    complete = True
    for rid in reqs:
        tot = dset.total_weight(rid)
        x = solution.value(embed_var(rid))
        if abs(tot - x) > tol:
            complete = False
            msgs.append(f"{rid}: weights sum to {tot}, x_r = {x}")

    dominated = True
    agg = dset.aggregate_load()
    for key in substrate.resource_keys():
        lp_load = sum(solution.value(load_var(rid, key)) for rid in reqs)
        if agg.get(key, 0.0) > lp_load + tol:
            dominated = False
            msgs.append(f"{key}: decomposition load {agg.get(key, 0.0)} > LP load {lp_load}")
        if lp_load > substrate.capacity(key) + tol:
            dominated = False
            msgs.append(f"{key}: LP load {lp_load} > capacity {substrate.capacity(key)}")

    checks = {"valid": valid, "complete": complete, "load": dominated}
    variant = solution.kind.rsplit("-", 1)[-1] if solution.kind else ""
    if variant == "P":
        profit = sum(dset.total_weight(rid) * reqs[rid].profit for rid in reqs)
        checks["profit"] = abs(profit - solution.objective_value) <= tol
        if not checks["profit"]:
            msgs.append(f"profit {profit} != objective {solution.objective_value}")
    if variant == "C":
        cost = sum(fm.weight * mapping_cost(reqs[rid], fm.mapping, substrate)
                   for rid, fms in dset.mappings.items() for fm in fms)
        ok = cost <= solution.objective_value + tol
        if solution.status == "optimal":
            ok = ok and abs(cost - solution.objective_value) <= tol
        checks["cost"] = ok
        if not ok:
            msgs.append(f"cost {cost} vs objective {solution.objective_value}")
    return VerificationReport(checks, msgs)
