"""Randomized rounding of decompositions and closed-form augmentation bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decompose import DecompositionSet, FractionalMapping
from .extgraph import admissible_placements
from .model import (
    LoadVector,
    Mapping,
    Request,
    ResourceKey,
    Substrate,
    mapping_cost,
)

TOL = 1e-9


class DegenerateInstance(ValueError):
    pass


@dataclass(frozen=True)
class RoundingParams:
    alpha: float = 1.0 / 3.0
    beta: float = 0.0
    gamma: float = 0.0
    Q: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.Q < 1:
            raise ValueError(f"Q must be at least 1, got {self.Q}")


@dataclass
class RoundingOutcome:
    status: str  # success | exhausted
    mappings: dict[str, Mapping] = field(default_factory=dict)
    objective: float = 0.0
    load: LoadVector = field(default_factory=dict)
    rounds_used: int = 0
    node_violation: float = 0.0
    edge_violation: float = 0.0

    @property
    def accepted_requests(self) -> list[str]:
        return sorted(self.mappings)


@dataclass
class WacEntry:
    weighted_cost: float
    retained: float
    mappings: list[FractionalMapping]
    costs: list[float]
    dropped: int = 0


@dataclass
class WacPruneReport:
    entries: dict[str, WacEntry]
    requests: dict[str, Request]

    @property
    def total_weighted_cost(self) -> float:
        return sum(e.weighted_cost for e in self.entries.values())


class _Dice:
    """Per-request prefix sums and a dense load matrix over resource keys."""

    def __init__(self, rows: list[tuple[str, list[FractionalMapping]]], keys: list[ResourceKey]):
        self.keys = keys
        index = {k: n for n, k in enumerate(keys)}
        self.rids = [rid for rid, _ in rows]
        self.cums = []
        self.loads = []
        self.mappings = []
        for _, fms in rows:
            self.cums.append(np.cumsum([fm.weight for fm in fms]))
            mat = np.zeros((len(fms), len(keys)))
            for k, fm in enumerate(fms):
                for key, val in fm.load.items():
                    mat[k, index[key]] = val
            self.loads.append(mat)
            self.mappings.append([fm.mapping for fm in fms])

    def draw(self, seed: int, rnd: int, clamp: bool) -> list[int | None]:
        p = np.random.default_rng([seed, rnd]).random(len(self.rids))
        out: list[int | None] = []
        for cum, pr in zip(self.cums, p):
            if len(cum) == 0:
                out.append(None)
                continue
            k = int(np.searchsorted(cum, pr, side="left"))
            if k >= len(cum):
                k = len(cum) - 1 if clamp else None
            out.append(k)
        return out

    def total_load(self, picks: list[int | None]) -> np.ndarray:
        tot = np.zeros(len(self.keys))
        for mat, k in zip(self.loads, picks):
            if k is not None:
                tot += mat[k]
        return tot


def _caps(substrate: Substrate, keys: list[ResourceKey]) -> tuple[np.ndarray, np.ndarray]:
    caps = np.array([substrate.capacity(k) for k in keys], dtype=float)
    is_node = np.array([k[0] == "node" for k in keys])
    return caps, is_node


def _violations(tot: np.ndarray, caps: np.ndarray, is_node: np.ndarray) -> tuple[float, float]:
    """Largest load/capacity ratio among node and among edge resources."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.isinf(caps), 0.0,
                         np.where(caps > 0, tot / np.where(caps > 0, caps, 1.0),
                                  np.where(tot > TOL, np.inf, 0.0)))
    node = float(ratio[is_node].max()) if is_node.any() else 0.0
    edge = float(ratio[~is_node].max()) if (~is_node).any() else 0.0
    return node, edge


def _within(tot: np.ndarray, caps: np.ndarray, is_node: np.ndarray, fn: float, fe: float) -> bool:
    limit = np.where(is_node, fn, fe) * caps
    return bool(np.all(tot <= limit + TOL * np.maximum(1.0, limit)))


def round_profit(
    decomp: DecompositionSet,
    params: RoundingParams,
    substrate: Substrate,
    opt_lp: float | None = None,
) -> RoundingOutcome:
    """Cast one die per request and round; accept on profit and (1+beta, 1+gamma) loads."""
    rows = sorted(decomp.mappings.items())
    if opt_lp is None:
        opt_lp = sum(fm.weight * decomp.requests[rid].profit for rid, fms in rows for fm in fms)
    keys = sorted(substrate.resource_keys(), key=repr)
    dice = _Dice(rows, keys)
    caps, is_node = _caps(substrate, keys)
    profits = np.array([decomp.requests[rid].profit for rid in dice.rids])
    target = params.alpha * opt_lp
    for rnd in range(params.Q):
        picks = dice.draw(params.seed, rnd, clamp=False)
        profit = float(sum(b for b, k in zip(profits, picks) if k is not None))
        tot = dice.total_load(picks)
        if profit >= target - TOL * max(1.0, abs(target)) and _within(
            tot, caps, is_node, 1.0 + params.beta, 1.0 + params.gamma
        ):
            return _outcome("success", dice, picks, profit, tot, rnd + 1, caps, is_node)
    return RoundingOutcome("exhausted", rounds_used=params.Q)


def _outcome(status, dice, picks, objective, tot, rounds, caps, is_node) -> RoundingOutcome:
    chosen = {rid: dice.mappings[n][k] for n, (rid, k) in enumerate(zip(dice.rids, picks))
              if k is not None}
    load = {key: float(v) for key, v in zip(dice.keys, tot) if v > 0}
    nv, ev = _violations(tot, caps, is_node)
    return RoundingOutcome(status, chosen, objective, load, rounds, nv, ev)


def wac_prune(decomp: DecompositionSet, costs) -> WacPruneReport:
    """Drop mappings costing more than twice the request's weighted cost, then rescale.

    ``costs`` is either the substrate (costs are computed from it) or a map
    from request id to the list of mapping costs in decomposition order.
    """
    entries = {}
    for rid, fms in sorted(decomp.mappings.items()):
        if isinstance(costs, Substrate):
            cs = [mapping_cost(decomp.requests[rid], fm.mapping, costs) for fm in fms]
        else:
            cs = [float(c) for c in costs[rid]]
        wc = sum(fm.weight * c for fm, c in zip(fms, cs))
        keep = [(fm, c) for fm, c in zip(fms, cs) if c <= 2.0 * wc + TOL * max(1.0, wc)]
        lam = sum(fm.weight for fm, _ in keep)
        scaled = [FractionalMapping(fm.weight / lam, fm.mapping, fm.load) for fm, _ in keep]
        entries[rid] = WacEntry(wc, lam, scaled, [c for _, c in keep], len(fms) - len(keep))
    return WacPruneReport(entries, dict(decomp.requests))


def round_cost(pruned: WacPruneReport, params: RoundingParams, substrate: Substrate) -> RoundingOutcome:
    """Give every request one mapping; accept on (2+beta, 2+gamma) loads."""
    rows = sorted((rid, e.mappings) for rid, e in pruned.entries.items())
    keys = sorted(substrate.resource_keys(), key=repr)
    dice = _Dice(rows, keys)
    caps, is_node = _caps(substrate, keys)
    costs = [pruned.entries[rid].costs for rid in dice.rids]
    for rnd in range(params.Q):
        picks = dice.draw(params.seed, rnd, clamp=True)
        tot = dice.total_load(picks)
        if _within(tot, caps, is_node, 2.0 + params.beta, 2.0 + params.gamma):
            cost = float(sum(cs[k] for cs, k in zip(costs, picks)))
            return _outcome("success", dice, picks, cost, tot, rnd + 1, caps, is_node)
    return RoundingOutcome("exhausted", rounds_used=params.Q)


@dataclass
class BoundsReport:
    delta_v: float
    delta_e: float
    epsilon: float
    max_node_demand: dict[tuple[str, str], float]
    sum_node_demand: dict[tuple[str, str], float]
    max_edge_demand: dict[str, float]
    beta: float
    gamma: float
    node_violation_prob: float
    edge_violation_prob: float
    variant: str
    b_max: float
    opt_lp: float | None = None


def theoretical_bounds(
    substrate: Substrate,
    requests: list[Request],
    variant: str = "profit",
    opt_lp: float | None = None,
) -> BoundsReport:
    """Delta_V, Delta_E, epsilon and the resulting beta, gamma for one variant.

    Also returns the union-bounded probability that some node (edge)
    resource exceeds its augmented capacity in a single round.
    """
    if variant not in ("profit", "cost"):
        raise ValueError(f"variant must be profit or cost, got {variant}")
    max_nd: dict[tuple[str, str], float] = {}
    sum_nd: dict[tuple[str, str], float] = {}
    max_ed: dict[str, float] = {}
    delta_v = 0.0
    delta_e = 0.0
    eps = 0.0
    for r in requests:
        for vn in r.nodes.values():
            key = (r.id, vn.type)
            max_nd[key] = max(max_nd.get(key, 0.0), vn.demand)
            sum_nd[key] = sum_nd.get(key, 0.0) + vn.demand
        max_ed[r.id] = max(r.edges.values(), default=0.0)
        ratios = [
            1.0 if max_nd[(r.id, t)] == 0 else sum_nd[(r.id, t)] / max_nd[(r.id, t)]
            for (rid, t) in max_nd if rid == r.id
        ]
        delta_v += max(ratios, default=1.0) ** 2
        delta_e += len(r.edges) ** 2

        pl = admissible_placements(substrate, r)
        for i, vn in r.nodes.items():
            if not pl.nodes[i]:
                raise DegenerateInstance(f"request {r.id}: node {i} has no admissible host")
            for u in pl.nodes[i]:
                eps = max(eps, _ratio(vn.demand, substrate.node_resources[(vn.type, u)].capacity))
        for ve, d in r.edges.items():
            if not pl.edges[ve]:
                raise DegenerateInstance(f"request {r.id}: edge {ve} has no admissible substrate edge")
            for se in pl.edges[ve]:
                eps = max(eps, _ratio(d, substrate.edge_resources[se].capacity))
    if not 0.0 < eps <= 1.0:
        raise DegenerateInstance(f"demand-to-capacity ratio {eps} outside (0, 1]")

    n_v = len(substrate.nodes)
    n_t = len(substrate.types)
    ln_vt = math.log(n_v * n_t)
    ln_v = math.log(n_v)
    n_node_res = sum(1 for k in substrate.resource_keys() if k[0] == "node")
    n_edge_res = len(substrate.edges)
    if variant == "profit":
        beta = eps * math.sqrt(2.0 * ln_vt * delta_v)
        gamma = eps * math.sqrt(2.0 * ln_v * delta_e)
        p_node = n_node_res * (n_v * n_t) ** -4.0
        p_edge = n_edge_res * float(n_v) ** -4.0
    else:
        beta = eps * math.sqrt(ln_vt * delta_v)
        gamma = eps * math.sqrt(1.5 * ln_v * delta_e)
        p_node = n_node_res * (n_v * n_t) ** -2.0
        p_edge = n_edge_res * float(n_v) ** -2.0
    b_max = max((r.profit for r in requests), default=0.0)
    return BoundsReport(delta_v, delta_e, eps, max_nd, sum_nd, max_ed, beta, gamma,
                        min(1.0, p_node), min(1.0, p_edge), variant, b_max, opt_lp)


def _ratio(demand: float, capacity: float) -> float:
    if math.isinf(capacity):
        return 0.0
    if capacity <= 0:
        return 0.0 if demand <= 0 else math.inf
    return demand / capacity


@dataclass
class SampleSet:
    """Unconditioned single-round samples: objective, violation ratios and loads."""

    keys: list[ResourceKey]
    objective: np.ndarray
    node_violation: np.ndarray
    edge_violation: np.ndarray
    loads: np.ndarray  # trials x keys


def sample_rounds(source, substrate: Substrate, seed: int, trials: int) -> SampleSet:
    """Draw ``trials`` independent rounds without any acceptance test.

    ``source`` is a DecompositionSet (profit dice, a request may stay
    unembedded) or a WacPruneReport (cost dice, every request is embedded).
    """
    keys = sorted(substrate.resource_keys(), key=repr)
    caps, is_node = _caps(substrate, keys)
    if isinstance(source, WacPruneReport):
        rows = sorted((rid, e.mappings) for rid, e in source.entries.items())
        dice = _Dice(rows, keys)
        values = [source.entries[rid].costs for rid in dice.rids]
        clamp = True
    else:
        rows = sorted(source.mappings.items())
        dice = _Dice(rows, keys)
        values = [[source.requests[rid].profit] * len(fms) for rid, fms in rows]
        clamp = False
    obj = np.zeros(trials)
    nv = np.zeros(trials)
    ev = np.zeros(trials)
    loads = np.zeros((trials, len(keys)))
    for t in range(trials):
        picks = dice.draw(seed, t, clamp)
        tot = dice.total_load(picks)
        obj[t] = sum(vs[k] for vs, k in zip(values, picks) if k is not None)
        nv[t], ev[t] = _violations(tot, caps, is_node)
        loads[t] = tot
    return SampleSet(keys, obj, nv, ev, loads)
