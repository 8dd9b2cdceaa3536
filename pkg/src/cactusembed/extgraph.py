"""Layered extended graphs for chains and for the paths and cycles of a cactus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .cactus import CactusDecomposition, Cycle, Path
from .model import Edge, Request, Substrate


class EmptyPlacement(ValueError):
    pass


class ExtNode(NamedTuple):
    """Structured extended-graph node.

    kind is one of super_source, super_sink, path_source, path_sink,
    layer_copy. ``vedge`` is the virtual edge of a layer copy, or the 1-tuple
    holding the virtual node of a path source or sink.
    """

    kind: str
    vedge: tuple = ()
    snode: str | None = None
    replica: str | None = None

    def label(self) -> str:
        if self.kind == "super_source":
            return "o+"
        if self.kind == "super_sink":
            return "o-"
        if self.kind == "path_source":
            return f"{self.snode}+[{self.vedge[0]}]"
        if self.kind == "path_sink":
            return f"{self.snode}-[{self.vedge[0]}]"
        tag = ",".join(self.vedge)
        if self.replica is not None:
            tag += f";{self.replica}"
        return f"{self.snode}[{tag}]"


ExtEdge = tuple[ExtNode, ExtNode]


class EdgeInfo(NamedTuple):
    """What an extended edge stands for.

    kind: "intra" (routing of ``vedge`` over substrate edge ``sedge`` in its
    original orientation), "inter" (processing of ``vnode`` on ``host``
    between two layers), "source" or "sink" (placement of ``vnode`` on
    ``host`` at an end of the graph).
    """

    kind: str
    vedge: Edge | None = None
    sedge: Edge | None = None
    vnode: str | None = None
    host: str | None = None


@dataclass
class ExtendedGraph:
    owner: tuple
    nodes: list[ExtNode] = field(default_factory=list)
    edges: list[ExtEdge] = field(default_factory=list)
    info: dict[ExtEdge, EdgeInfo] = field(default_factory=dict)
    horizontal_index: dict[Edge, list[tuple[ExtEdge, Edge]]] = field(default_factory=dict)
    vertical_index: dict[tuple[str, str], list[tuple[ExtEdge, str]]] = field(default_factory=dict)
    # source/sink ext nodes keyed by substrate host
    sources: dict[str, ExtNode] = field(default_factory=dict)
    sinks: dict[str, ExtNode] = field(default_factory=dict)
    replicas: tuple[str, ...] = ()

    def _add_node(self, n: ExtNode) -> None:
        self.nodes.append(n)

    def _add_edge(self, e: ExtEdge, info: EdgeInfo) -> None:
        self.edges.append(e)
        self.info[e] = info

    def source_edges(self) -> list[ExtEdge]:
        return [e for e in self.edges if self.info[e].kind == "source"]

    def sink_edges(self) -> list[ExtEdge]:
        return [e for e in self.edges if self.info[e].kind == "sink"]

    def inner_nodes(self) -> list[ExtNode]:
        return [n for n in self.nodes if n.kind == "layer_copy"]

    def out_edges(self) -> dict[ExtNode, list[ExtEdge]]:
        out: dict[ExtNode, list[ExtEdge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out[e[0]].append(e)
        return out

    def to_text(self) -> str:
        """One ``tail -> head`` line per edge, in a DOT digraph body."""
        name = "_".join(str(x) for x in self.owner)
        lines = [f'digraph "{name}" {{']
        for a, b in self.edges:
            lines.append(f'  "{a.label()}" -> "{b.label()}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Placements:
    """Admissible hosts per virtual node and substrate edges per virtual edge."""

    nodes: dict[str, tuple[str, ...]]
    edges: dict[Edge, frozenset[Edge]]


def admissible_placements(substrate: Substrate, request: Request) -> Placements:
    """Keep host u for i iff d_r(i) <= d_S(type(i), u), likewise for edges."""
    nodes = {}
    for i, vn in request.nodes.items():
        nodes[i] = tuple(
            u for u in substrate.hosts(vn.type)
            if vn.demand <= substrate.node_resources[(vn.type, u)].capacity
        )
    edges = {}
    for e, d in request.edges.items():
        edges[e] = frozenset(se for se, res in substrate.edge_resources.items() if d <= res.capacity)
    return Placements(nodes, edges)


def _check_nonempty(request: Request, placements: Placements) -> None:
    empty = sorted(i for i, hosts in placements.nodes.items() if not hosts)
    if empty:
        raise EmptyPlacement(f"request {request.id}: no admissible host for {', '.join(empty)}")


def _vertical(g: ExtendedGraph, request: Request, e: ExtEdge, j: str, u: str) -> None:
    g.vertical_index.setdefault((request.type_of(j), u), []).append((e, j))


def _add_layer(
    g: ExtendedGraph,
    substrate: Substrate,
    placements: Placements,
    vedge: Edge,
    original: Edge,
    reverse: bool,
    replica: str | None,
) -> None:
    for u in substrate.nodes:
        g._add_node(ExtNode("layer_copy", vedge, u, replica))
    allowed = placements.edges[original]
    for (u, v) in substrate.edges:
        if (u, v) not in allowed:
            continue
        a, b = (v, u) if reverse else (u, v)
        e = (ExtNode("layer_copy", vedge, a, replica), ExtNode("layer_copy", vedge, b, replica))
        g._add_edge(e, EdgeInfo("intra", vedge=original, sedge=(u, v)))
        g.horizontal_index.setdefault((u, v), []).append((e, original))


def build_chain_extended(
    request: Request, substrate: Substrate, placements: Placements | None = None
) -> ExtendedGraph:
    """Extended graph of a chain: o+ -> layer per virtual edge -> o-.

    Source and sink edges are indexed as processing of s_r and t_r, so the
    node loads of the chain's endpoints are accounted for as well.
    """
    placements = placements or admissible_placements(substrate, request)
    _check_nonempty(request, placements)
    order = request.chain_order()
    vedges = list(zip(order, order[1:]))
    g = ExtendedGraph(owner=("chain",))
    src, snk = ExtNode("super_source"), ExtNode("super_sink")
    g._add_node(src)
    g._add_node(snk)

    if not vedges:
        i = order[0]
        for u in placements.nodes[i]:
            mid = ExtNode("layer_copy", (i,), u)
            g._add_node(mid)
            e_in, e_out = (src, mid), (mid, snk)
            g._add_edge(e_in, EdgeInfo("source", vnode=i, host=u))
            g._add_edge(e_out, EdgeInfo("sink", vnode=i, host=u))
            _vertical(g, request, e_in, i, u)
        return g

    for ve in vedges:
        _add_layer(g, substrate, placements, ve, ve, False, None)
    s, t = order[0], order[-1]
    for u in placements.nodes[s]:
        e = (src, ExtNode("layer_copy", vedges[0], u))
        g._add_edge(e, EdgeInfo("source", vnode=s, host=u))
        _vertical(g, request, e, s, u)
    for (i, j), (_, k) in zip(vedges, vedges[1:]):
        for u in placements.nodes[j]:
            e = (ExtNode("layer_copy", (i, j), u), ExtNode("layer_copy", (j, k), u))
            g._add_edge(e, EdgeInfo("inter", vnode=j, host=u))
            _vertical(g, request, e, j, u)
    for u in placements.nodes[t]:
        e = (ExtNode("layer_copy", vedges[-1], u), snk)
        g._add_edge(e, EdgeInfo("sink", vnode=t, host=u))
        _vertical(g, request, e, t, u)
    return g


def _build_sequence(
    g: ExtendedGraph,
    request: Request,
    substrate: Substrate,
    placements: Placements,
    seq: tuple[Edge, ...],
    diff: frozenset[Edge],
    replica: str | None,
    sink_hosts: list[str],
) -> None:
    """Layers, inter-layer edges and end edges for one oriented edge sequence."""
    for ve in seq:
        orig = (ve[1], ve[0]) if ve in diff else ve
        _add_layer(g, substrate, placements, ve, orig, ve in diff, replica)
    s, t = seq[0][0], seq[-1][1]
    for u in placements.nodes[s]:
        e = (g.sources[u], ExtNode("layer_copy", seq[0], u, replica))
        g._add_edge(e, EdgeInfo("source", vnode=s, host=u))
    for (i, j), (_, k) in zip(seq, seq[1:]):
        for u in placements.nodes[j]:
            e = (ExtNode("layer_copy", (i, j), u, replica), ExtNode("layer_copy", (j, k), u, replica))
            g._add_edge(e, EdgeInfo("inter", vnode=j, host=u))
            _vertical(g, request, e, j, u)
    for u in sink_hosts:
        e = (ExtNode("layer_copy", seq[-1], u, replica), g.sinks[u])
        g._add_edge(e, EdgeInfo("sink", vnode=t, host=u))


def build_path_extended(
    k: int, path: Path, request: Request, substrate: Substrate, placements: Placements
) -> ExtendedGraph:
    g = ExtendedGraph(owner=("path", k))
    for u in placements.nodes[path.source]:
        g.sources[u] = ExtNode("path_source", (path.source,), u)
        g._add_node(g.sources[u])
    for u in placements.nodes[path.target]:
        g.sinks[u] = ExtNode("path_sink", (path.target,), u)
        g._add_node(g.sinks[u])
    _build_sequence(g, request, substrate, placements, path.edges, path.diff, None,
                    list(placements.nodes[path.target]))
    return g


def build_cycle_extended(
    k: int, cycle: Cycle, request: Request, substrate: Substrate, placements: Placements
) -> ExtendedGraph:
    targets = placements.nodes[cycle.target]
    g = ExtendedGraph(owner=("cycle", k), replicas=tuple(targets))
    for u in placements.nodes[cycle.source]:
        g.sources[u] = ExtNode("path_source", (cycle.source,), u)
        g._add_node(g.sources[u])
    for w in targets:
        g.sinks[w] = ExtNode("path_sink", (cycle.target,), w)
        g._add_node(g.sinks[w])
    for w in targets:
        for branch in (cycle.branch1, cycle.branch2):
            _build_sequence(g, request, substrate, placements, branch, cycle.diff, w, [w])
    return g


def build_cactus_extended(
    decomposition: CactusDecomposition,
    request: Request,
    substrate: Substrate,
    placements: Placements | None = None,
) -> dict[tuple, ExtendedGraph]:
    """One extended graph per path and per cycle, keyed by its owner tuple."""
    placements = placements or admissible_placements(substrate, request)
    _check_nonempty(request, placements)
    out = {}
    for k, cyc in enumerate(decomposition.cycles):
        g = build_cycle_extended(k, cyc, request, substrate, placements)
        out[g.owner] = g
    for k, path in enumerate(decomposition.paths):
        g = build_path_extended(k, path, request, substrate, placements)
        out[g.owner] = g
    return out
