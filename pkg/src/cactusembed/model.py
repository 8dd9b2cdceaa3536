"""Substrates, requests and mappings, plus validity, feasibility, load and cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping as MappingT, NamedTuple

import networkx as nx

TOL = 1e-9
UNBOUNDED = math.inf
LOCATION_PREFIX = "loc_"

Edge = tuple[str, str]
# ("node", type, substrate node) or ("edge", tail, head)
ResourceKey = tuple[str, str, str]
LoadVector = dict  # ResourceKey -> float, missing keys read as 0


def node_res(tau: str, u: str) -> ResourceKey:
    return ("node", tau, u)


def edge_res(u: str, v: str) -> ResourceKey:
    return ("edge", u, v)


def location_type(u: str) -> str:
    return f"{LOCATION_PREFIX}{u}"


class Resource(NamedTuple):
    capacity: float
    cost: float


@dataclass(frozen=True)
class NodeType:
    id: str
    is_location: bool = False


class VNode(NamedTuple):
    type: str
    demand: float


@dataclass(frozen=True)
class Substrate:
    """Directed substrate network with typed node resources.

    Every node ``u`` implicitly offers the location type ``loc_u`` with
    unbounded capacity. Use :meth:`build` so these entries are filled in.
    """

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    node_resources: MappingT[tuple[str, str], Resource]
    edge_resources: MappingT[Edge, Resource]

    @classmethod
    def build(
        cls,
        nodes: Iterable,
        edges: MappingT[Edge, tuple[float, float]] | Iterable,
        node_resources: MappingT[tuple[str, str], tuple[float, float]],
    ) -> Substrate:
        """Normalize ids to strings and register the location types.

        ``edges`` maps (u, v) to (capacity, cost). ``node_resources`` maps
        (type, u) to (capacity, cost); an explicit ``loc_u`` entry overrides
        the default (unbounded, 0).
        """
        node_list = tuple(sorted({str(u) for u in nodes}))
        edge_items = edges.items() if isinstance(edges, MappingT) else edges
        edge_res_ = {}
        for (u, v), (cap, cost) in edge_items:
            edge_res_[(str(u), str(v))] = Resource(float(cap), float(cost))
        node_res_ = {}
        for u in node_list:
            node_res_[(location_type(u), u)] = Resource(UNBOUNDED, 0.0)
        for (tau, u), (cap, cost) in node_resources.items():
            node_res_[(str(tau), str(u))] = Resource(float(cap), float(cost))
        return cls(
            nodes=node_list,
            edges=tuple(sorted(edge_res_)),
            node_resources=dict(sorted(node_res_.items())),
            edge_resources=dict(sorted(edge_res_.items())),
        )

    @property
    def types(self) -> list[str]:
        return sorted({tau for tau, _ in self.node_resources})

    def node_types(self) -> list[NodeType]:
        return [NodeType(t, self.is_location_type(t)) for t in self.types]

    def is_location_type(self, tau: str) -> bool:
        if not tau.startswith(LOCATION_PREFIX):
            return False
        u = tau[len(LOCATION_PREFIX):]
        return (tau, u) in self.node_resources

    def hosts(self, tau: str) -> list[str]:
        """Substrate nodes offering type ``tau`` (V_S^tau)."""
        return [u for (t, u) in self.node_resources if t == tau]

    def resource_keys(self) -> list[ResourceKey]:
        keys = [node_res(t, u) for (t, u) in self.node_resources]
        keys += [edge_res(u, v) for (u, v) in self.edge_resources]
        return keys

    def capacity(self, key: ResourceKey) -> float:
        return self._resource(key).capacity

    def cost(self, key: ResourceKey) -> float:
        return self._resource(key).cost

    def _resource(self, key: ResourceKey) -> Resource:
        kind, a, b = key
        if kind == "node":
            return self.node_resources.get((a, b), Resource(0.0, 0.0))
        return self.edge_resources[(a, b)]

    def out_edges(self, u: str) -> list[Edge]:
        return [e for e in self.edges if e[0] == u]

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class Request:
    id: str
    nodes: MappingT[str, VNode]
    edges: MappingT[Edge, float]
    profit: float = 0.0
    shape: str = "chain"

    @classmethod
    def build(
        cls,
        id,
        nodes: MappingT,
        edges: MappingT,
        profit: float = 0.0,
        shape: str = "chain",
    ) -> Request:
        """``nodes`` maps id to (type, demand); ``edges`` maps (i, j) to demand."""
        node_map = {str(i): VNode(str(t), float(d)) for i, (t, d) in nodes.items()}
        edge_map = {(str(i), str(j)): float(d) for (i, j), d in edges.items()}
        return cls(str(id), dict(sorted(node_map.items())), dict(sorted(edge_map.items())),
                   float(profit), shape)

    def type_of(self, i: str) -> str:
        return self.nodes[i].type

    def chain_order(self) -> list[str]:
        """Virtual nodes of a chain from s_r to t_r."""
        if not self.edges:
            return list(self.nodes)[:1]
        succ = {i: j for (i, j) in self.edges}
        heads = {j for (_, j) in self.edges}
        start = [i for i in self.nodes if i not in heads]
        if len(start) != 1:
            raise ValueError(f"request {self.id} is not a chain")
        order = [start[0]]
        while order[-1] in succ and len(order) <= len(self.nodes):
            order.append(succ[order[-1]])
        return order

    def chain_edges(self) -> list[Edge]:
        order = self.chain_order()
        return list(zip(order, order[1:]))


@dataclass(frozen=True)
class Mapping:
    """Node placement plus one substrate edge list per virtual edge."""

    node_map: MappingT[str, str]
    edge_map: MappingT[Edge, tuple[Edge, ...]] = field(default_factory=dict)

    def key(self) -> tuple:
        return (tuple(sorted(self.node_map.items())),
                tuple(sorted((e, tuple(p)) for e, p in self.edge_map.items())))


def _is_chain(request: Request) -> bool:
    if not request.edges:
        return len(request.nodes) <= 1
    g = nx.DiGraph(list(request.edges))
    g.add_nodes_from(request.nodes)
    if any(g.in_degree(i) > 1 or g.out_degree(i) > 1 for i in g):
        return False
    return nx.is_weakly_connected(g) and nx.is_directed_acyclic_graph(g)


def undirected_is_cactus(nodes: Iterable[str], edges: Iterable[Edge]) -> bool:
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    for block in nx.biconnected_component_edges(g):
        block = list(block)
        if len(block) == 1:
            continue
        block_nodes = {x for e in block for x in e}
        if len(block) != len(block_nodes):
            return False
    return True


def validate_instance(substrate: Substrate, requests: list[Request]) -> list[str]:
    """Return every well-formedness violation; empty means the scenario is clean."""
    out = []
    nodes = set(substrate.nodes)
    for (u, v), res in substrate.edge_resources.items():
        if u not in nodes or v not in nodes:
            out.append(f"substrate edge ({u},{v}) has an undeclared endpoint")
        if u == v:
            out.append(f"substrate edge ({u},{v}) is a self-loop")
        if not (math.isfinite(res.capacity) and res.capacity >= 0):
            out.append(f"substrate edge ({u},{v}) has invalid capacity {res.capacity}")
        if not (math.isfinite(res.cost) and res.cost >= 0):
            out.append(f"substrate edge ({u},{v}) has invalid cost {res.cost}")
    for (tau, u), res in substrate.node_resources.items():
        if u not in nodes:
            out.append(f"node resource ({tau},{u}) on undeclared node")
        loc = substrate.is_location_type(tau)
        if tau.startswith(LOCATION_PREFIX) and not loc:
            out.append(f"location type {tau} offered on foreign node {u}")
        if not (res.capacity >= 0 and (loc or math.isfinite(res.capacity))):
            out.append(f"node resource ({tau},{u}) has invalid capacity {res.capacity}")
        if not (math.isfinite(res.cost) and res.cost >= 0):
            out.append(f"node resource ({tau},{u}) has invalid cost {res.cost}")

    types = set(substrate.types)
    seen = set()
    for r in requests:
        if r.id in seen:
            out.append(f"duplicate request id {r.id}")
        seen.add(r.id)
        if not (r.profit >= 0 and math.isfinite(r.profit)):
            out.append(f"request {r.id}: invalid profit {r.profit}")
        for i, vn in r.nodes.items():
            if vn.type not in types:
                out.append(f"request {r.id}: node {i} has unknown type {vn.type}")
            if not (vn.demand >= 0 and math.isfinite(vn.demand)):
                out.append(f"request {r.id}: node {i} has invalid demand {vn.demand}")
        for (i, j), d in r.edges.items():
            if i not in r.nodes or j not in r.nodes:
                out.append(f"request {r.id}: edge ({i},{j}) has an undeclared endpoint")
            if i == j:
                out.append(f"request {r.id}: edge ({i},{j}) is a self-loop")
            if not (d >= 0 and math.isfinite(d)):
                out.append(f"request {r.id}: edge ({i},{j}) has invalid demand {d}")
        if not r.nodes:
            out.append(f"request {r.id}: no nodes")
            continue
        if r.shape == "chain":
            if not _is_chain(r):
                out.append(f"request {r.id}: chain shape is not a simple directed path")
        elif r.shape == "cactus":
            opposite = [(i, j) for (i, j) in r.edges if (j, i) in r.edges and i < j]
            for i, j in opposite:
                out.append(f"request {r.id}: opposite edges ({i},{j}) and ({j},{i})")
            g = nx.Graph()
            g.add_nodes_from(r.nodes)
            g.add_edges_from(r.edges)
            if not nx.is_connected(g):
                out.append(f"request {r.id}: cactus is disconnected")
            elif not opposite and not undirected_is_cactus(r.nodes, r.edges):
                out.append(f"request {r.id}: two cycles share more than one node")
        else:
            out.append(f"request {r.id}: unknown shape {r.shape}")
    return out


def check_mapping_valid(
    request: Request, mapping: Mapping, substrate: Substrate
) -> tuple[bool, list[str]]:
    """Type-respecting placement and connecting edge-simple paths."""
    diag = []
    for i, vn in request.nodes.items():
        u = mapping.node_map.get(i)
        if u is None:
            diag.append(f"unmapped node {i}")
        elif (vn.type, u) not in substrate.node_resources:
            diag.append(f"type violation at {i}")
    for e in request.edges:
        if e not in mapping.edge_map:
            diag.append(f"unmapped edge {e}")
            continue
        path = list(mapping.edge_map[e])
        if any(p not in substrate.edge_resources for p in path):
            diag.append(f"edge path of {e} uses a non-substrate edge")
            continue
        if len(set(path)) != len(path):
            diag.append(f"edge path of {e} repeats an edge")
        start, end = mapping.node_map.get(e[0]), mapping.node_map.get(e[1])
        cur = start
        connected = True
        for a, b in path:
            if a != cur:
                connected = False
                break
            cur = b
        if not connected or cur != end:
            diag.append(f"disconnected edge path at {e}")
    for e in mapping.edge_map:
        if e not in request.edges:
            diag.append(f"edge {e} is not part of the request")
    return not diag, diag


def mapping_load(request: Request, mapping: Mapping, substrate: Substrate | None = None) -> LoadVector:
    load: LoadVector = {}
    for i, vn in request.nodes.items():
        key = node_res(vn.type, mapping.node_map[i])
        load[key] = load.get(key, 0.0) + vn.demand
    for e, d in request.edges.items():
        for u, v in mapping.edge_map.get(e, ()):
            key = edge_res(u, v)
            load[key] = load.get(key, 0.0) + d
    return load


def mapping_cost(request: Request, mapping: Mapping, substrate: Substrate) -> float:
    total = 0.0
    for i, vn in request.nodes.items():
        total += vn.demand * substrate.node_resources[(vn.type, mapping.node_map[i])].cost
    for e, d in request.edges.items():
        total += d * sum(substrate.edge_resources[p].cost for p in mapping.edge_map.get(e, ()))
    return total


def load_cost(load: LoadVector, substrate: Substrate) -> float:
    return sum(val * substrate.cost(key) for key, val in load.items() if val)


def check_embedding_feasible(
    substrate: Substrate,
    mappings: MappingT[str, Mapping] | Iterable[tuple[Request, Mapping]],
    requests: MappingT[str, Request] | Iterable[Request] | None = None,
) -> tuple[bool, dict[ResourceKey, float]]:
    """Sum loads of all mappings and compare against capacities.

    ``mappings`` is either a list of (request, mapping) pairs or a dict keyed
    by request id together with ``requests``. Returns (feasible, slack) with
    slack = capacity - load per resource; negative slack is an overload.
    """
    if isinstance(mappings, MappingT):
        if not isinstance(requests, MappingT):
            requests = {r.id: r for r in (requests or [])}
        pairs = [(requests[rid], m) for rid, m in mappings.items()]
    else:
        pairs = list(mappings)
    total: LoadVector = {}
    for req, m in pairs:
        for key, val in mapping_load(req, m).items():
            total[key] = total.get(key, 0.0) + val
    slack = {}
    ok = True
    for key in substrate.resource_keys():
        s = substrate.capacity(key) - total.get(key, 0.0)
        slack[key] = s
        if s < -TOL:
            ok = False
    return ok, slack


def loads_within(load: LoadVector, substrate: Substrate, factor: float = 1.0) -> bool:
    return all(val <= factor * substrate.capacity(key) + TOL for key, val in load.items())
