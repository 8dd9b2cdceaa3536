"""Scenario files, bundled fixtures and seeded instance generation."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import networkx as nx

from .model import Request, Substrate
from .rounding import RoundingParams

FIXTURES = ("fig2-chain", "fig3-cactus", "fig5-nondecomposable")


class ScenarioError(ValueError):
    pass


class SpecError(ValueError):
    pass


@dataclass
class Scenario:
    substrate: Substrate
    requests: list[Request]
    params: RoundingParams | None = None
    generator: dict | None = None
    name: str = ""


def _num(value, where: str) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _get(obj: dict, key: str, where: str, default=...):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{where}: missing field '{key}'")
        return default
    return obj[key]


def parse_scenario(data: dict, name: str = "") -> Scenario:
    """Build a Scenario from its decoded JSON form."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: top level must be an object")
    params = None
    if "params" in data:
        p = data["params"]
        try:
            params = RoundingParams(
                alpha=_num(_get(p, "alpha", "params", 1.0 / 3.0), "params.alpha"),
                beta=_num(_get(p, "beta", "params", 0.0), "params.beta"),
                gamma=_num(_get(p, "gamma", "params", 0.0), "params.gamma"),
                Q=int(_num(_get(p, "Q", "params", 100), "params.Q")),
                seed=int(_num(_get(p, "seed", "params", 0), "params.seed")),
            )
        except ValueError as exc:
            raise ScenarioError(f"params: {exc}") from exc
    generator = data.get("generator")
    if "substrate" not in data:
        if generator is None:
            raise ScenarioError("scenario: needs 'substrate' or 'generator'")
        sc = generate_instance(generator)
        sc.params = params or sc.params
        sc.name = name
        return sc

    s = data["substrate"]
    nodes = [str(u) for u in _get(s, "nodes", "substrate")]
    edges = {}
    for n, e in enumerate(_get(s, "edges", "substrate", [])):
        where = f"substrate.edges[{n}]"
        key = (str(_get(e, "tail", where)), str(_get(e, "head", where)))
        edges[key] = (_num(_get(e, "capacity", where), f"{where}.capacity"),
                      _num(_get(e, "cost", where, 0.0), f"{where}.cost"))
    node_res = {}
    for n, r in enumerate(_get(s, "node_resources", "substrate", [])):
        where = f"substrate.node_resources[{n}]"
        key = (str(_get(r, "type", where)), str(_get(r, "node", where)))
        node_res[key] = (_num(_get(r, "capacity", where), f"{where}.capacity"),
                         _num(_get(r, "cost", where, 0.0), f"{where}.cost"))
    substrate = Substrate.build(nodes, edges, node_res)

    requests = []
    for n, r in enumerate(_get(data, "requests", "scenario")):
        where = f"requests[{n}]"
        vnodes = {}
        for m, v in enumerate(_get(r, "nodes", where)):
            w = f"{where}.nodes[{m}]"
            vnodes[str(_get(v, "id", w))] = (str(_get(v, "type", w)),
                                             _num(_get(v, "demand", w, 0.0), f"{w}.demand"))
        vedges = {}
        for m, e in enumerate(_get(r, "edges", where, [])):
            w = f"{where}.edges[{m}]"
            vedges[(str(_get(e, "tail", w)), str(_get(e, "head", w)))] = _num(
                _get(e, "demand", w, 0.0), f"{w}.demand")
        shape = str(_get(r, "shape", where, "chain"))
        if shape not in ("chain", "cactus"):
            raise ScenarioError(f"{where}.shape: expected chain or cactus, got {shape!r}")
        requests.append(Request.build(_get(r, "id", where), vnodes, vedges,
                                      _num(_get(r, "profit", where, 0.0), f"{where}.profit"), shape))
    return Scenario(substrate, requests, params, generator, name)


def _jnum(x: float):
    if math.isinf(x):
        return "inf"
    return int(x) if float(x).is_integer() else x


def serialize_scenario(sc: Scenario) -> dict:
    """Inverse of parse_scenario; default location resources are left implicit."""
    s = sc.substrate
    node_res = []
    for (t, u), res in sorted(s.node_resources.items()):
        if s.is_location_type(t) and math.isinf(res.capacity) and res.cost == 0:
            continue
        node_res.append({"type": t, "node": u, "capacity": _jnum(res.capacity),
                         "cost": _jnum(res.cost)})
    out = {
        "substrate": {
            "nodes": list(s.nodes),
            "edges": [{"tail": u, "head": v, "capacity": _jnum(r.capacity), "cost": _jnum(r.cost)}
                      for (u, v), r in sorted(s.edge_resources.items())],
            "node_resources": node_res,
        },
        "requests": [
            {
                "id": r.id,
                "shape": r.shape,
                "profit": _jnum(r.profit),
                "nodes": [{"id": i, "type": vn.type, "demand": _jnum(vn.demand)}
                          for i, vn in r.nodes.items()],
                "edges": [{"tail": i, "head": j, "demand": _jnum(d)}
                          for (i, j), d in r.edges.items()],
            }
            for r in sc.requests
        ],
    }
    if sc.params is not None:
        p = sc.params
        out["params"] = {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma, "Q": p.Q,
                         "seed": p.seed}
    if sc.generator is not None:
        out["generator"] = sc.generator
    return out


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file, or a bundled fixture by name."""
    p = Path(path)
    if not p.exists() and str(path) in FIXTURES:
        text = resources.files("cactusembed").joinpath(f"fixtures/{path}.json").read_text()
        name = str(path)
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioError(f"{path}: {exc.strerror}") from exc
        name = p.stem
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data, name)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(serialize_scenario(sc), indent=2, sort_keys=True) + "\n"


@dataclass
class GeneratorSpec:
    topology: str = "ring"  # ring | star | waxman
    substrate_nodes: int = 6
    requests: int = 2
    shape: str = "chain"  # chain | cactus
    chain_length: int = 3  # virtual nodes including both endpoints
    cycles: list[int] = field(default_factory=lambda: [4])
    pendants: int = 2
    max_request_nodes: int = 6
    types: list[str] = field(default_factory=lambda: ["A", "B", "C"])
    type_probability: float = 0.6
    demand: tuple[float, float] = (0.5, 1.5)
    capacity: tuple[float, float] = (2.0, 5.0)
    cost: tuple[float, float] = (1.0, 3.0)
    profit: tuple[float, float] = (1.0, 10.0)
    epsilon: float | None = None
    waxman_alpha: float = 0.6
    waxman_beta: float = 0.4
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorSpec:
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise SpecError(f"unknown generator fields: {', '.join(unknown)}")
        spec = cls(**d)
        for name in ("demand", "capacity", "cost", "profit"):
            setattr(spec, name, tuple(getattr(spec, name)))
        return spec


def generate_instance(spec: GeneratorSpec | dict) -> Scenario:
    """Seeded substrate plus chain or cactus requests.

    With ``epsilon`` set, every non-location capacity equals the upper end of
    the capacity range and demands are drawn in [epsilon/2, epsilon] times
    that capacity, the first virtual edge pinned to exactly epsilon times it.
    """
    raw = spec if isinstance(spec, dict) else None
    if isinstance(spec, dict):
        spec = GeneratorSpec.from_dict(spec)
    _check_spec(spec)
    rng = random.Random(spec.seed)
    n = spec.substrate_nodes
    nodes = [f"s{k}" for k in range(n)]

    pairs: set[tuple[int, int]] = set()
    if spec.topology == "ring":
        pairs = {(k, (k + 1) % n) for k in range(n)} if n > 1 else set()
    elif spec.topology == "star":
        pairs = {(0, k) for k in range(1, n)}
    else:
        g = nx.waxman_graph(n, beta=spec.waxman_beta, alpha=spec.waxman_alpha,
                            seed=rng.randrange(2**31))
        pairs = {(min(a, b), max(a, b)) for a, b in g.edges() if a != b}
        # a ring backbone keeps every Waxman draw connected
        pairs |= {(min(k, (k + 1) % n), max(k, (k + 1) % n)) for k in range(n)} if n > 1 else set()

    fixed_cap = spec.capacity[1] if spec.epsilon is not None else None

    def cap() -> float:
        return fixed_cap if fixed_cap is not None else round(rng.uniform(*spec.capacity), 3)

    def cost() -> float:
        return round(rng.uniform(*spec.cost), 3)

    edges = {}
    for a, b in sorted(pairs):
        edges[(nodes[a], nodes[b])] = (cap(), cost())
        edges[(nodes[b], nodes[a])] = (cap(), cost())
    node_res = {}
    for t in spec.types:
        hosts = [u for u in nodes if rng.random() < spec.type_probability]
        if not hosts:
            hosts = [rng.choice(nodes)]
        for u in hosts:
            node_res[(t, u)] = (cap(), cost())
    substrate = Substrate.build(nodes, edges, node_res)

    def demand() -> float:
        if spec.epsilon is not None:
            return round(rng.uniform(0.5, 1.0) * spec.epsilon * fixed_cap, 6)
        return round(rng.uniform(*spec.demand), 3)

    requests = []
    for k in range(spec.requests):
        if spec.shape == "chain":
            vnodes, vedges = _chain_request(rng, spec, nodes, demand)
        else:
            vnodes, vedges = _cactus_request(rng, spec, demand)
        if spec.epsilon is not None and k == 0 and vedges:
            first = sorted(vedges)[0]
            vedges[first] = spec.epsilon * fixed_cap
        profit = round(rng.uniform(*spec.profit), 3)
        requests.append(Request.build(f"r{k}", vnodes, vedges, profit, spec.shape))
    return Scenario(substrate, requests, None, raw if raw is not None else vars(spec).copy())


def _check_spec(spec: GeneratorSpec) -> None:
    if spec.topology not in ("ring", "star", "waxman"):
        raise SpecError(f"unknown topology {spec.topology!r}")
    if spec.shape not in ("chain", "cactus"):
        raise SpecError(f"unknown request shape {spec.shape!r}")
    if spec.substrate_nodes < 1:
        raise SpecError("substrate needs at least one node")
    if spec.requests < 0:
        raise SpecError("request count must be non-negative")
    if not spec.types:
        raise SpecError("at least one network function type is required")
    if spec.shape == "chain" and not 1 <= spec.chain_length <= spec.max_request_nodes:
        raise SpecError(f"chain length {spec.chain_length} outside 1..{spec.max_request_nodes}")
    if spec.shape == "cactus":
        if any(c < 3 for c in spec.cycles):
            raise SpecError("cycles need at least 3 nodes")
        size = 1 + sum(c - 1 for c in spec.cycles) + spec.pendants
        if size > spec.max_request_nodes:
            raise SpecError(f"cactus needs {size} nodes, budget is {spec.max_request_nodes}")
    if spec.epsilon is not None and not 0.0 < spec.epsilon <= 1.0:
        raise SpecError("epsilon must lie in (0, 1]")


def _chain_request(rng: random.Random, spec: GeneratorSpec, nodes: list[str], demand):
    ids = [f"v{k}" for k in range(spec.chain_length)]
    vnodes = {}
    for k, i in enumerate(ids):
        if k in (0, len(ids) - 1):
            vnodes[i] = (f"loc_{rng.choice(nodes)}", 0.0)
        else:
            vnodes[i] = (rng.choice(spec.types), demand())
    vedges = {(a, b): demand() for a, b in zip(ids, ids[1:])}
    return vnodes, vedges


def _cactus_request(rng: random.Random, spec: GeneratorSpec, demand):
    """Glue cycles and pendant edges onto single existing nodes, so it stays a cactus."""
    ids = ["v0"]
    pairs = []
    for c in spec.cycles:
        anchor = rng.choice(ids)
        ring = [anchor] + [f"v{len(ids) + m}" for m in range(c - 1)]
        ids.extend(ring[1:])
        pairs += list(zip(ring, ring[1:] + ring[:1]))
    for _ in range(spec.pendants):
        anchor = rng.choice(ids)
        new = f"v{len(ids)}"
        ids.append(new)
        pairs.append((anchor, new))
    vedges = {}
    for a, b in pairs:
        e = (a, b) if rng.random() < 0.5 else (b, a)
        vedges[e] = demand()
    vnodes = {i: (rng.choice(spec.types), demand()) for i in ids}
    return vnodes, vedges
