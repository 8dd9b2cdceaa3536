"""BFS reorientation of cactus requests and their split into cycles and paths."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .model import Edge, Request, Substrate, undirected_is_cactus


class NotACactus(ValueError):
    pass


class Disconnected(ValueError):
    pass


@dataclass(frozen=True)
class BfsOrientation:
    root: str
    predecessor: dict[str, str | None]
    oriented_edges: tuple[Edge, ...]
    reversed_edges: frozenset[Edge]
    # discovery index of each node; edges point from lower to higher index
    order: dict[str, int] = field(default_factory=dict)

    def original(self, e: Edge) -> Edge:
        return (e[1], e[0]) if e in self.reversed_edges else e

    def in_degree(self) -> dict[str, int]:
        deg = {i: 0 for i in self.order}
        for _, j in self.oriented_edges:
            deg[j] += 1
        return deg

    def out_degree(self) -> dict[str, int]:
        deg = {i: 0 for i in self.order}
        for i, _ in self.oriented_edges:
            deg[i] += 1
        return deg


@dataclass(frozen=True)
class Cycle:
    source: str
    target: str
    branch1: tuple[Edge, ...]
    branch2: tuple[Edge, ...]
    same: frozenset[Edge]
    diff: frozenset[Edge]
    branching_nodes: frozenset[str]
    target_hosts: tuple[str, ...] = ()

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self.branch1 + self.branch2

    def inner_nodes(self) -> set[str]:
        return {j for (_, j) in self.edges} - {self.target}


@dataclass(frozen=True)
class Path:
    source: str
    target: str
    edges: tuple[Edge, ...]
    same: frozenset[Edge]
    diff: frozenset[Edge]


@dataclass(frozen=True)
class CactusDecomposition:
    root: str
    cycles: tuple[Cycle, ...]
    paths: tuple[Path, ...]

    @property
    def sources_targets(self) -> set[str]:
        """V^+- of all cycles and paths."""
        out = set()
        for c in self.cycles:
            out |= {c.source, c.target}
        for p in self.paths:
            out |= {p.source, p.target}
        return out

    @property
    def branching_nodes(self) -> set[str]:
        out = set()
        for c in self.cycles:
            out |= c.branching_nodes
        return out

    def induced_nodes(self) -> list[str]:
        """Virtual nodes that own flow-induction variables, root first."""
        rest = sorted((self.sources_targets | self.branching_nodes) - {self.root})
        return [self.root] + rest


def orient_and_check(request: Request, root: str | None = None) -> BfsOrientation:
    """Orient every edge along BFS discovery order from ``root``.

    Neighbors are explored in ascending id order; the default root is the
    smallest node id.
    """
    nodes = sorted(request.nodes)
    if not nodes:
        raise Disconnected(f"request {request.id} has no nodes")
    pairs = set()
    adj: dict[str, set[str]] = {i: set() for i in nodes}
    for i, j in request.edges:
        pair = frozenset((i, j))
        if pair in pairs:
            raise NotACactus(f"request {request.id}: opposite edges between {i} and {j}")
        pairs.add(pair)
        adj[i].add(j)
        adj[j].add(i)
    root = nodes[0] if root is None else str(root)
    if root not in adj:
        raise ValueError(f"root {root} is not a node of request {request.id}")

    order = {root: 0}
    pred: dict[str, str | None] = {root: None}
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j in sorted(adj[i]):
            if j not in order:
                order[j] = len(order)
                pred[j] = i
                queue.append(j)
    if len(order) != len(nodes):
        raise Disconnected(f"request {request.id} is not connected")
    if not undirected_is_cactus(nodes, request.edges):
        raise NotACactus(f"request {request.id}: two cycles share more than one node")

    oriented = []
    reversed_ = set()
    for i, j in request.edges:
        if order[i] < order[j]:
            oriented.append((i, j))
        else:
            oriented.append((j, i))
            reversed_.add((j, i))
    oriented.sort(key=lambda e: (order[e[0]], order[e[1]]))
    orientation = BfsOrientation(root, pred, tuple(oriented), frozenset(reversed_), order)
    if any(d > 2 for d in orientation.in_degree().values()):
        raise NotACactus(f"request {request.id}: in-degree above 2 after orientation")
    return orientation


def _backtrack(start: str, pred: dict[str, str | None]) -> list[str]:
    chain = [start]
    while pred[chain[-1]] is not None:
        chain.append(pred[chain[-1]])
    return chain


def decompose_cactus(
    orientation: BfsOrientation,
    request: Request | None = None,
    substrate: Substrate | None = None,
) -> CactusDecomposition:
    """Split the oriented request into cycles (one per in-degree-2 node) and single-edge paths.

    With ``request`` and ``substrate`` given, each cycle also records the
    substrate nodes that may host its target.
    """
    indeg = orientation.in_degree()
    outdeg = orientation.out_degree()
    pred = orientation.predecessor
    incoming: dict[str, list[str]] = {i: [] for i in orientation.order}
    for i, j in orientation.oriented_edges:
        incoming[j].append(i)

    targets = sorted((t for t, d in indeg.items() if d == 2), key=orientation.order.get)
    cycles = []
    used: set[Edge] = set()
    for t in targets:
        a, b = incoming[t]
        back_a, back_b = _backtrack(a, pred), _backtrack(b, pred)
        common = set(back_a) & set(back_b)
        source = next(x for x in back_a if x in common)
        branches = []
        for back in (back_a, back_b):
            nodes_ = back[: back.index(source) + 1][::-1] + [t]
            branches.append(tuple(zip(nodes_, nodes_[1:])))
        branches.sort(key=lambda br: br[0][1])
        b1, b2 = branches
        if set(b1) & set(b2) or used & set(b1 + b2):
            raise NotACactus(f"overlapping backtracks at {t}")
        used |= set(b1 + b2)
        inner = {j for (_, j) in b1 + b2} - {t}
        branching = frozenset(i for i in inner if outdeg[i] > 1)
        all_edges = b1 + b2
        hosts: tuple[str, ...] = ()
        if request is not None and substrate is not None:
            hosts = tuple(substrate.hosts(request.type_of(t)))
        cycles.append(Cycle(
            source=source,
            target=t,
            branch1=b1,
            branch2=b2,
            same=frozenset(e for e in all_edges if e not in orientation.reversed_edges),
            diff=frozenset(e for e in all_edges if e in orientation.reversed_edges),
            branching_nodes=branching,
            target_hosts=hosts,
        ))

    paths = []
    for e in orientation.oriented_edges:
        if e in used:
            continue
        rev = e in orientation.reversed_edges
        paths.append(Path(
            source=e[0],
            target=e[1],
            edges=(e,),
            same=frozenset() if rev else frozenset([e]),
            diff=frozenset([e]) if rev else frozenset(),
        ))
    return CactusDecomposition(orientation.root, tuple(cycles), tuple(paths))
