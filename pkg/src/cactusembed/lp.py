"""LP formulations over extended graphs and the classic multi-commodity flow model."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .cactus import CactusDecomposition, decompose_cactus, orient_and_check
from .extgraph import (
    EmptyPlacement,
    ExtendedGraph,
    ExtNode,
    Placements,
    admissible_placements,
    build_cactus_extended,
    build_chain_extended,
)
from .model import Request, ResourceKey, Substrate, edge_res, node_res

KINDS = ("SCEP-P", "SCEP-C", "SCGEP-P", "SCGEP-C", "MCF-P", "MCF-C")
FEAS_TOL = 1e-7
OPT_TOL = 1e-7
ZERO = 1e-9


class ShapeMismatch(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


_PREFIX = {
    "embed": "x",
    "flow": "f",
    "induce": "fp",
    "load": "l",
    "node_map": "y",
    "edge_flow": "z",
}
_SAFE = re.compile(r"[^A-Za-z0-9_!\"#$%&/;?@`'{}|]")


def _atom(x) -> str:
    if hasattr(x, "kind") and hasattr(x, "snode"):
        return _ext_atom(x)
    return _SAFE.sub(lambda m: "~%02x" % ord(m.group()), str(x))


def _ext_atom(n) -> str:
    if n.kind == "super_source":
        return "src"
    if n.kind == "super_sink":
        return "snk"
    parts = [n.kind.split("_")[-1] if n.kind != "layer_copy" else "lay"]
    parts += [_atom(v) for v in n.vedge] + [_atom(n.snode)]
    if n.replica is not None:
        parts.append(_atom(n.replica))
    return ".".join(parts)


class VarId(NamedTuple):
    """Structured variable id; ``name`` is its LP-file spelling."""

    kind: str
    request: str
    key: tuple = ()

    @property
    def name(self) -> str:
        atoms = [_atom(self.request)]
        for k in self.key:
            if isinstance(k, tuple) and not hasattr(k, "snode"):
                atoms.extend(_atom(x) for x in k)
            else:
                atoms.append(_atom(k))
        return f"{_PREFIX[self.kind]}({','.join(atoms)})"


@dataclass
class Constraint:
    coeffs: dict[VarId, float]
    rel: str  # "=" or "<="
    rhs: float
    name: str = ""


@dataclass
class RequestModel:
    """Per-request structures the formulation was built from."""

    request: Request
    placements: Placements
    graphs: dict[tuple, ExtendedGraph] = field(default_factory=dict)
    decomposition: CactusDecomposition | None = None
    unembeddable: bool = False


@dataclass
class LinearProgram:
    kind: str
    variables: list[tuple[VarId, float, float]] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    sense: str = "max"
    objective: dict[VarId, float] = field(default_factory=dict)
    relax: bool = True
    substrate: Substrate | None = None
    models: dict[str, RequestModel] = field(default_factory=dict)

    def add_var(self, var: VarId, lb: float = 0.0, ub: float = 1.0) -> VarId:
        self.variables.append((var, lb, ub))
        return var

    def add(self, coeffs: dict[VarId, float], rel: str, rhs: float, name: str = "") -> None:
        self.constraints.append(Constraint(coeffs, rel, float(rhs), name))

    @property
    def requests(self) -> list[Request]:
        return [m.request for m in self.models.values()]

    @property
    def extgraphs(self) -> dict[str, dict[tuple, ExtendedGraph]]:
        return {rid: m.graphs for rid, m in self.models.items()}


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded_guard
    values: dict[VarId, float] = field(default_factory=dict)
    objective_value: float = math.nan
    kind: str = ""

    def value(self, var: VarId) -> float:
        return self.values.get(var, 0.0)


def embed_var(rid: str) -> VarId:
    return VarId("embed", rid)


def load_var(rid: str, key: ResourceKey) -> VarId:
    return VarId("load", rid, key)


def flow_var(rid: str, owner: tuple, e) -> VarId:
    return VarId("flow", rid, (_owner_tag(owner), e[0], e[1]))


def induce_var(rid: str, i: str, u: str) -> VarId:
    return VarId("induce", rid, (i, u))


def node_map_var(rid: str, i: str, u: str) -> VarId:
    return VarId("node_map", rid, (i, u))


def edge_flow_var(rid: str, ve, se) -> VarId:
    return VarId("edge_flow", rid, (ve[0], ve[1], se[0], se[1]))


def _owner_tag(owner: tuple) -> str:
    if owner[0] == "chain":
        return "chain"
    return ("C" if owner[0] == "cycle" else "P") + str(owner[1])


def prune_infeasible_placements(substrate: Substrate, request: Request) -> Placements:
    """Admissible (virtual, substrate) pairs: demand <= capacity, non-strict."""
    return admissible_placements(substrate, request)


def _add_terms(acc: dict[VarId, float], var: VarId, coef: float) -> None:
    acc[var] = acc.get(var, 0.0) + coef


def _flow_preservation(lp: LinearProgram, rid: str, g: ExtendedGraph) -> None:
    inflow: dict = {n: [] for n in g.nodes}
    outflow: dict = {n: [] for n in g.nodes}
    for e in g.edges:
        outflow[e[0]].append(e)
        inflow[e[1]].append(e)
    for n in g.inner_nodes():
        coeffs: dict[VarId, float] = {}
        for e in outflow[n]:
            _add_terms(coeffs, flow_var(rid, g.owner, e), 1.0)
        for e in inflow[n]:
            _add_terms(coeffs, flow_var(rid, g.owner, e), -1.0)
        if coeffs:
            lp.add(coeffs, "=", 0.0, "preserve")


def _load_rows(
    lp: LinearProgram,
    substrate: Substrate,
    request: Request,
    terms: dict[ResourceKey, dict[VarId, float]],
) -> None:
    rid = request.id
    for key in substrate.resource_keys():
        lv = load_var(rid, key)
        coeffs = {lv: 1.0}
        for var, c in terms.get(key, {}).items():
            coeffs[var] = coeffs.get(var, 0.0) - c
        lp.add(coeffs, "=", 0.0, "load")


def _graph_load_terms(
    rid: str, request: Request, graphs: dict[tuple, ExtendedGraph]
) -> dict[ResourceKey, dict[VarId, float]]:
    terms: dict[ResourceKey, dict[VarId, float]] = {}
    for g in graphs.values():
        for (tau, u), entries in g.vertical_index.items():
            acc = terms.setdefault(node_res(tau, u), {})
            for e, j in entries:
                _add_terms(acc, flow_var(rid, g.owner, e), request.nodes[j].demand)
        for (u, v), entries in g.horizontal_index.items():
            acc = terms.setdefault(edge_res(u, v), {})
            for e, ve in entries:
                _add_terms(acc, flow_var(rid, g.owner, e), request.edges[ve])
    return terms


def _declare_flows(lp: LinearProgram, rid: str, g: ExtendedGraph) -> None:
    for e in g.edges:
        lp.add_var(flow_var(rid, g.owner, e))


def _build_chain(lp: LinearProgram, model: RequestModel, substrate: Substrate) -> None:
    req = model.request
    rid = req.id
    g = build_chain_extended(req, substrate, model.placements)
    model.graphs = {g.owner: g}
    _declare_flows(lp, rid, g)
    coeffs = {flow_var(rid, g.owner, e): 1.0 for e in g.source_edges()}
    coeffs[embed_var(rid)] = -1.0
    lp.add(coeffs, "=", 0.0, "induce")
    _flow_preservation(lp, rid, g)
    _load_rows(lp, substrate, req, _graph_load_terms(rid, req, model.graphs))


def _build_cactus(lp: LinearProgram, model: RequestModel, substrate: Substrate) -> None:
    req = model.request
    rid = req.id
    dec = decompose_cactus(orient_and_check(req), req, substrate)
    model.decomposition = dec
    graphs = build_cactus_extended(dec, req, substrate, model.placements)
    model.graphs = graphs
    hosts = model.placements.nodes

    induced = dec.induced_nodes()
    for i in induced:
        for u in hosts[i]:
            lp.add_var(induce_var(rid, i, u))
    for g in graphs.values():
        _declare_flows(lp, rid, g)

    coeffs = {induce_var(rid, dec.root, u): 1.0 for u in hosts[dec.root]}
    coeffs[embed_var(rid)] = -1.0
    lp.add(coeffs, "=", 0.0, "induce_root")

    for k, cyc in enumerate(dec.cycles):
        g = graphs[("cycle", k)]
        first1, first2 = cyc.branch1[0], cyc.branch2[0]
        last1 = cyc.branch1[-1]
        for u in hosts[cyc.source]:
            src = g.sources[u]
            row = {}
            for e in g.source_edges():
                if e[0] == src and e[1].vedge == first1:
                    row[flow_var(rid, g.owner, e)] = 1.0
            row[induce_var(rid, cyc.source, u)] = -1.0
            lp.add(row, "=", 0.0, "induce_cycle")
            for w in g.replicas:
                e1 = (src, _layer(first1, u, w))
                e2 = (src, _layer(first2, u, w))
                lp.add({flow_var(rid, g.owner, e1): 1.0, flow_var(rid, g.owner, e2): -1.0},
                       "=", 0.0, "mirror")
        for w in g.replicas:
            e = (_layer(last1, w, w), g.sinks[w])
            lp.add({flow_var(rid, g.owner, e): 1.0, induce_var(rid, cyc.target, w): -1.0},
                   "=", 0.0, "cycle_end")
        for j in sorted(cyc.branching_nodes):
            into = next(ve for ve in cyc.edges if ve[1] == j)
            out = next(ve for ve in cyc.edges if ve[0] == j)
            for u in hosts[j]:
                row = {flow_var(rid, g.owner, (_layer(into, u, w), _layer(out, u, w))): 1.0
                       for w in g.replicas}
                row[induce_var(rid, j, u)] = -1.0
                lp.add(row, "=", 0.0, "branching")

    for k, path in enumerate(dec.paths):
        g = graphs[("path", k)]
        for e in g.source_edges():
            u = e[0].snode
            lp.add({flow_var(rid, g.owner, e): 1.0, induce_var(rid, path.source, u): -1.0},
                   "=", 0.0, "induce_path")
        for e in g.sink_edges():
            u = e[1].snode
            lp.add({flow_var(rid, g.owner, e): 1.0, induce_var(rid, path.target, u): -1.0},
                   "=", 0.0, "path_end")

    for g in graphs.values():
        _flow_preservation(lp, rid, g)

    terms = _graph_load_terms(rid, req, graphs)
    for i in induced:
        if i in dec.branching_nodes:
            continue
        vn = req.nodes[i]
        for u in hosts[i]:
            acc = terms.setdefault(node_res(vn.type, u), {})
            _add_terms(acc, induce_var(rid, i, u), vn.demand)
    _load_rows(lp, substrate, req, terms)


def _layer(vedge, u, w):
    return ExtNode("layer_copy", vedge, u, w)


def _build_mcf(lp: LinearProgram, model: RequestModel, substrate: Substrate) -> None:
    req = model.request
    rid = req.id
    hosts = model.placements.nodes
    for i in req.nodes:
        for u in hosts[i]:
            lp.add_var(node_map_var(rid, i, u))
    for ve in req.edges:
        for se in substrate.edges:
            if se in model.placements.edges[ve]:
                lp.add_var(edge_flow_var(rid, ve, se))
    for i in req.nodes:
        row = {node_map_var(rid, i, u): 1.0 for u in hosts[i]}
        row[embed_var(rid)] = -1.0
        lp.add(row, "=", 0.0, "node_embedding")
    for ve in req.edges:
        i, j = ve
        allowed = model.placements.edges[ve]
        for u in substrate.nodes:
            row: dict[VarId, float] = {}
            for se in substrate.edges:
                if se not in allowed:
                    continue
                if se[0] == u:
                    _add_terms(row, edge_flow_var(rid, ve, se), 1.0)
                if se[1] == u:
                    _add_terms(row, edge_flow_var(rid, ve, se), -1.0)
            if u in hosts[i]:
                _add_terms(row, node_map_var(rid, i, u), -1.0)
            if u in hosts[j]:
                _add_terms(row, node_map_var(rid, j, u), 1.0)
            row = {k: c for k, c in row.items() if c != 0.0}
            if row:
                lp.add(row, "=", 0.0, "edge_embedding")
    terms: dict[ResourceKey, dict[VarId, float]] = {}
    for i, vn in req.nodes.items():
        for u in hosts[i]:
            _add_terms(terms.setdefault(node_res(vn.type, u), {}), node_map_var(rid, i, u), vn.demand)
    for ve, d in req.edges.items():
        for se in model.placements.edges[ve]:
            _add_terms(terms.setdefault(edge_res(*se), {}), edge_flow_var(rid, ve, se), d)
    _load_rows(lp, substrate, req, terms)


def build_formulation(
    kind: str, substrate: Substrate, requests: list[Request], relax: bool = True
) -> LinearProgram:
    """Build one of SCEP-P/C, SCGEP-P/C, MCF-P/C over all requests."""
    if kind not in KINDS:
        raise ValueError(f"unknown formulation {kind}")
    family, variant = kind.split("-")
    for r in requests:
        if family == "SCEP" and r.shape != "chain":
            raise ShapeMismatch(f"{kind} needs chain requests, {r.id} is {r.shape}")
    lp = LinearProgram(kind=kind, relax=relax, substrate=substrate,
                       sense="max" if variant == "P" else "min")
    keys = substrate.resource_keys()
    for r in requests:
        rid = r.id
        x = lp.add_var(embed_var(rid))
        for key in keys:
            lp.add_var(load_var(rid, key), 0.0, math.inf)
        model = RequestModel(r, prune_infeasible_placements(substrate, r))
        lp.models[rid] = model
        if variant == "C":
            lp.add({x: 1.0}, "=", 1.0, "embed_all")
        else:
            lp.objective[x] = r.profit
        try:
            if family == "SCEP":
                _build_chain(lp, model, substrate)
            elif family == "SCGEP":
                _build_cactus(lp, model, substrate)
            else:
                if any(not h for h in model.placements.nodes.values()):
                    raise EmptyPlacement(rid)
                _build_mcf(lp, model, substrate)
        except EmptyPlacement:
            model.unembeddable = True
            lp.add({x: 1.0}, "<=", 0.0, "unembeddable")
            for key in keys:
                lp.add({load_var(rid, key): 1.0}, "=", 0.0, "load")
        if variant == "C":
            for key in keys:
                c = substrate.cost(key)
                if c:
                    lp.objective[load_var(rid, key)] = c
    for key in keys:
        cap = substrate.capacity(key)
        if math.isinf(cap):
            continue
        lp.add({load_var(r.id, key): 1.0 for r in requests}, "<=", cap, "capacity")
    return lp


def _highs(c, a_ub, b_ub, a_eq, b_eq, bounds):
    return linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs-ds",
        options={"primal_feasibility_tolerance": FEAS_TOL,
                 "dual_feasibility_tolerance": OPT_TOL, "presolve": True},
    )


Backend = Callable  # (c, A_ub, b_ub, A_eq, b_eq, bounds) -> scipy OptimizeResult-like


def solve_lp(lp: LinearProgram, backend: Backend | None = None) -> LpSolution:
    """Solve the continuous relaxation; raises SolverFailure on numerical breakdown."""
    backend = backend or _highs
    index = {}
    bounds = []
    for var, lb, ub in lp.variables:
        if var in index:
            raise ValueError(f"duplicate variable {var.name}")
        index[var] = len(bounds)
        bounds.append((lb, None if math.isinf(ub) else ub))
    n = len(bounds)
    c = np.zeros(n)
    sign = -1.0 if lp.sense == "max" else 1.0
    for var, coef in lp.objective.items():
        c[index[var]] += sign * coef

    def matrix(rows):
        r_idx, c_idx, vals, rhs = [], [], [], []
        for k, con in enumerate(rows):
            for var, coef in con.coeffs.items():
                if var not in index:
                    raise ValueError(f"undeclared variable {var.name}")
                r_idx.append(k)
                c_idx.append(index[var])
                vals.append(coef)
            rhs.append(con.rhs)
        if not rows:
            return None, None
        return coo_matrix((vals, (r_idx, c_idx)), shape=(len(rows), n)).tocsr(), np.array(rhs)

    a_eq, b_eq = matrix([k for k in lp.constraints if k.rel == "="])
    a_ub, b_ub = matrix([k for k in lp.constraints if k.rel == "<="])
    if n == 0:
        return LpSolution("optimal", {}, 0.0, lp.kind)
    res = backend(c, a_ub, b_ub, a_eq, b_eq, bounds)
    if res.status == 2:
        return LpSolution("infeasible", kind=lp.kind)
    if res.status == 3:
        return LpSolution("unbounded_guard", kind=lp.kind)
    if res.status != 0:
        raise SolverFailure(f"{lp.kind}: {res.message}")
    xs = np.asarray(res.x, dtype=float)
    values = {}
    for var, k in index.items():
        lb, ub = bounds[k]
        v = max(xs[k], lb)
        if ub is not None:
            v = min(v, ub)
        if abs(v) < ZERO:
            v = 0.0
        values[var] = float(v)
    obj = sum(coef * values[var] for var, coef in lp.objective.items())
    return LpSolution("optimal", values, float(obj), lp.kind)


def check_solution(lp: LinearProgram, sol: LpSolution, tol: float = FEAS_TOL) -> list[str]:
    """Constraint and bound violations of ``sol`` above ``tol``."""
    out = []
    for var, lb, ub in lp.variables:
        v = sol.value(var)
        if v < lb - tol or v > ub + tol:
            out.append(f"{var.name}={v} outside [{lb},{ub}]")
    for con in lp.constraints:
        lhs = sum(c * sol.value(v) for v, c in con.coeffs.items())
        scale = max(1.0, abs(con.rhs))
        if con.rel == "=" and abs(lhs - con.rhs) > tol * scale:
            out.append(f"{con.name}: {lhs} != {con.rhs}")
        if con.rel == "<=" and lhs > con.rhs + tol * scale:
            out.append(f"{con.name}: {lhs} > {con.rhs}")
    return out


def filter_unembeddable_requests(
    substrate: Substrate, requests: list[Request], kind: str = "SCEP-P"
) -> list[Request]:
    """Drop requests that cannot be fully embedded fractionally on an empty substrate."""
    if kind.endswith("-C"):
        kind = kind[:-1] + "P"
    kept = []
    for r in requests:
        lp = build_formulation(kind, substrate, [r])
        # embeddability is about x_r alone, whatever the profit
        lp.objective = {embed_var(r.id): 1.0}
        sol = solve_lp(lp)
        if sol.status == "optimal" and sol.value(embed_var(r.id)) >= 1.0 - 1e-6:
            kept.append(r)
    return kept


def _fmt(c: float) -> str:
    return repr(float(c))


def _terms(coeffs: dict[VarId, float]) -> list[str]:
    out = []
    for var, coef in coeffs.items():
        sign = "-" if coef < 0 else "+"
        out.append(f"{sign} {_fmt(abs(coef))} {var.name}")
    if out and out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for t in terms:
        if len(cur) + len(t) + 1 > 250:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    if tail:
        cur += " " + tail
    lines.append(cur)
    return lines


def to_lp_format(lp: LinearProgram) -> str:
    """Render in the CPLEX LP text format; unbounded capacities are not emitted."""
    lines = [f"\\ {lp.kind}", "Maximize" if lp.sense == "max" else "Minimize"]
    obj = _terms(lp.objective)
    if not obj and lp.variables:
        obj = [f"0 {lp.variables[0][0].name}"]
    lines += _wrap(" obj:", obj)
    lines.append("Subject To")
    for k, con in enumerate(lp.constraints):
        terms = _terms({v: c for v, c in con.coeffs.items() if c != 0.0})
        if not terms:
            terms = [f"0 {lp.variables[0][0].name}"]
        rel = "=" if con.rel == "=" else "<="
        lines += _wrap(f" c{k}_{con.name or 'row'}:", terms, f"{rel} {_fmt(con.rhs)}")
    lines.append("Bounds")
    for var, lb, ub in lp.variables:
        if math.isinf(ub):
            lines.append(f" {var.name} >= {_fmt(lb)}")
        else:
            lines.append(f" {_fmt(lb)} <= {var.name} <= {_fmt(ub)}")
    if not lp.relax:
        binaries = [v.name for v, _, ub in lp.variables if ub == 1.0 and v.kind != "load"]
        if binaries:
            lines.append("Binaries")
            lines += [f" {b}" for b in binaries]
    lines.append("End")
    return "\n".join(lines) + "\n"
