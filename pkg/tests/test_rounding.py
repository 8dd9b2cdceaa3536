from __future__ import annotations

import math

import numpy as np
import pytest

from cactusembed.decompose import DecompositionSet, FractionalMapping
from cactusembed.model import Mapping, Request, Substrate, mapping_load
from cactusembed.rounding import (
    DegenerateInstance,
    RoundingParams,
    round_cost,
    round_profit,
    sample_rounds,
    theoretical_bounds,
    wac_prune,
)


def one_node_substrate(cap=10.0, hosts=("u",)):
    return Substrate.build(list(hosts), {}, {("A", h): (cap, 1.0) for h in hosts})


def single(rid, demand=1.0, profit=1.0):
    return Request.build(rid, {"a": ("A", demand)}, {}, profit)


def dset(items):
    """``items``: list of (request, [(weight, host), ...])."""
    reqs = {r.id: r for r, _ in items}
    maps = {}
    for r, opts in items:
        maps[r.id] = [FractionalMapping(w, Mapping({"a": h}), mapping_load(r, Mapping({"a": h})))
                      for w, h in opts]
    return DecompositionSet(reqs, maps)


def test_params_validation():
    with pytest.raises(ValueError):
        RoundingParams(alpha=1.5)
    with pytest.raises(ValueError):
        RoundingParams(beta=-1)
    with pytest.raises(ValueError):
        RoundingParams(Q=0)


def test_deterministic_success():
    s = one_node_substrate()
    out = round_profit(dset([(single("r", profit=5), [(1.0, "u")])]), RoundingParams(alpha=1.0), s, 5.0)
    assert out.status == "success" and out.rounds_used == 1
    assert out.objective == 5.0 and out.accepted_requests == ["r"]


def test_unreachable_target_exhausts():
    # alpha is capped at 1, so an unreachable target doubles the reference optimum
    s = one_node_substrate()
    out = round_profit(dset([(single("r", profit=5), [(1.0, "u")])]),
                       RoundingParams(alpha=1.0, Q=1), s, 10.0)
    assert out.status == "exhausted" and out.rounds_used == 1


def test_twenty_half_requests_success_frequency():
    s = one_node_substrate(cap=100.0)
    d = dset([(single(f"r{k:02d}"), [(0.5, "u")]) for k in range(20)])
    params = RoundingParams(alpha=1.0 / 3.0)
    hits = sum(round_profit(d, RoundingParams(params.alpha, Q=1, seed=t), s, 10.0).status == "success"
               for t in range(10000))
    assert hits / 10000 > 1 - math.exp(-2.0 / 9.0)


def test_dice_frequencies():
    s = one_node_substrate(hosts=("u", "v", "w"))
    d = dset([(single("r"), [(0.2, "u"), (0.3, "v"), (0.4, "w")])])
    n = 20000
    smp = sample_rounds(d, s, seed=3, trials=n)
    keys = smp.keys
    for host, p in (("u", 0.2), ("v", 0.3), ("w", 0.4)):
        col = smp.loads[:, keys.index(("node", "A", host))]
        freq = (col > 0).mean()
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)
    none = (smp.objective == 0).mean()
    assert abs(none - 0.1) <= 3 * math.sqrt(0.09 / n)


def test_reproducible():
    s = one_node_substrate(cap=1.5, hosts=("u", "v"))
    d = dset([(single(f"r{k}"), [(0.5, "u"), (0.5, "v")]) for k in range(4)])
    a = round_profit(d, RoundingParams(seed=9, Q=50), s)
    b = round_profit(d, RoundingParams(seed=9, Q=50), s)
    assert a == b


def test_wac_examples():
    r = single("r")
    m = Mapping({"a": "u"})
    d = DecompositionSet({"r": r}, {"r": [FractionalMapping(0.6, m, {}), FractionalMapping(0.4, m, {})]})
    e = wac_prune(d, {"r": [1, 10]}).entries["r"]
    # 10 > 2 * 4.6, so the costlier mapping goes
    assert e.weighted_cost == pytest.approx(4.6)
    assert e.dropped == 1 and e.retained == pytest.approx(0.6)
    assert [fm.weight for fm in e.mappings] == [pytest.approx(1.0)]
    d = DecompositionSet({"r": r}, {"r": [FractionalMapping(0.9, m, {}), FractionalMapping(0.1, m, {})]})
    e = wac_prune(d, {"r": [1, 100]}).entries["r"]
    assert e.weighted_cost == pytest.approx(10.9)
    assert e.retained == pytest.approx(0.9) and e.retained >= 0.5
    assert [fm.weight for fm in e.mappings] == [pytest.approx(1.0)]
    d = DecompositionSet({"r": r}, {"r": [FractionalMapping(0.5, m, {}), FractionalMapping(0.5, m, {})]})
    e = wac_prune(d, {"r": [3, 3]}).entries["r"]
    assert e.retained == 1.0 and e.dropped == 0


def test_round_cost_single_mapping():
    s = one_node_substrate()
    pr = wac_prune(dset([(single("r"), [(1.0, "u")])]), s)
    out = round_cost(pr, RoundingParams(), s)
    assert out.status == "success" and out.rounds_used == 1
    assert out.mappings["r"].node_map == {"a": "u"}


def test_round_cost_bound_and_quick_success():
    s = one_node_substrate(cap=1.0, hosts=("u", "v", "w"))
    d = dset([(single(f"r{k}"), [(1 / 3, "u"), (1 / 3, "v"), (1 / 3, "w")]) for k in range(3)])
    pr = wac_prune(d, s)
    rounds = []
    for seed in range(300):
        out = round_cost(pr, RoundingParams(beta=0, gamma=0, Q=100, seed=seed), s)
        assert out.status == "success"
        assert out.objective <= 2 * pr.total_weighted_cost + 1e-9
        rounds.append(out.rounds_used)
    assert np.mean(rounds) <= 3


def test_bounds_delta_v_unique_types():
    s = Substrate.build(["u", "v"], {("u", "v"): (4, 1)},
                        {("A", "u"): (4, 1), ("B", "v"): (4, 1)})
    reqs = [Request.build(f"r{k}", {"a": ("A", 1), "b": ("B", 1)}, {("a", "b"): 1}) for k in range(10)]
    b = theoretical_bounds(s, reqs, "profit")
    assert b.delta_v == 10
    assert b.delta_e == 10


def test_bounds_delta_e_and_formulas():
    s = Substrate.build(["u", "v"], {("u", "v"): (4, 1)}, {("A", "u"): (4, 1), ("A", "v"): (4, 1)})
    r = Request.build("r", {"a": ("A", 2), "b": ("A", 1), "c": ("A", 1), "d": ("A", 1)},
                      {("a", "b"): 1, ("b", "c"): 1, ("c", "d"): 1})
    b = theoretical_bounds(s, [r], "profit")
    assert b.delta_e == 9
    assert b.epsilon == 0.5
    assert b.delta_v == pytest.approx((5 / 2) ** 2)
    n_t = len(s.types)
    assert b.beta == pytest.approx(0.5 * math.sqrt(2 * math.log(2 * n_t) * b.delta_v))
    assert b.gamma == pytest.approx(0.5 * math.sqrt(2 * math.log(2) * 9))
    c = theoretical_bounds(s, [r], "cost")
    assert c.beta == pytest.approx(0.5 * math.sqrt(math.log(2 * n_t) * b.delta_v))
    assert c.gamma == pytest.approx(0.5 * math.sqrt(1.5 * math.log(2) * 9))


def test_bounds_scale_linearly_in_epsilon():
    s = Substrate.build(["u", "v"], {("u", "v"): (4, 1)}, {("A", "u"): (4, 1), ("A", "v"): (4, 1)})
    small = Request.build("r", {"a": ("A", 1), "b": ("A", 1)}, {("a", "b"): 1})
    large = Request.build("r", {"a": ("A", 2), "b": ("A", 2)}, {("a", "b"): 2})
    b1, b2 = theoretical_bounds(s, [small]), theoretical_bounds(s, [large])
    assert b1.epsilon <= 0.5 and b2.epsilon == 2 * b1.epsilon
    assert b2.beta == pytest.approx(2 * b1.beta)
    assert b2.gamma == pytest.approx(2 * b1.gamma)


def test_degenerate_instance():
    s = one_node_substrate(cap=1.0)
    with pytest.raises(DegenerateInstance):
        theoretical_bounds(s, [single("r", demand=2.0)])
