from __future__ import annotations

import itertools

import networkx as nx
import pytest

from cactusembed.model import Request, Substrate, check_embedding_feasible
from cactusembed.oracle import (
    Infeasible,
    InstanceTooLarge,
    enumerate_instance,
    enumerate_valid_mappings,
    exact_optimum,
)

from conftest import full_substrate


def test_single_fixed_route():
    s = Substrate.build(["u", "v"], {("u", "v"): (1, 1)}, {})
    r = Request.build("r", {"i": ("loc_u", 0), "j": ("loc_v", 0)}, {("i", "j"): 1})
    assert len(enumerate_valid_mappings(r, s)) == 1


def test_two_hosts_two_mappings():
    s = Substrate.build(["u", "v", "w"], {("u", "v"): (1, 1), ("u", "w"): (1, 1)},
                        {("A", "v"): (1, 1), ("A", "w"): (1, 1)})
    r = Request.build("r", {"i": ("loc_u", 0), "j": ("A", 1)}, {("i", "j"): 1})
    assert len(enumerate_valid_mappings(r, s)) == 2


def test_triangle_counts_simple_paths():
    s = full_substrate("uvw")
    r = Request.build("r", {"i": ("loc_u", 0), "j": ("loc_v", 0)}, {("i", "j"): 1})
    g = nx.DiGraph(list(itertools.permutations("uvw", 2)))
    expected = len(list(nx.all_simple_paths(g, "u", "v")))
    assert expected == 2
    assert len(enumerate_valid_mappings(r, s)) == expected


def test_guard():
    s = full_substrate([f"n{k}" for k in range(13)])
    r = Request.build("r", {"i": ("A", 0)}, {})
    with pytest.raises(InstanceTooLarge):
        enumerate_valid_mappings(r, s)


def test_profit_single():
    s = Substrate.build(["u"], {}, {("A", "u"): (1, 1)})
    r = Request.build("r", {"i": ("A", 1)}, {}, profit=5)
    assert exact_optimum(s, [r], "profit").objective == 5


def test_profit_shared_capacity():
    s = Substrate.build(["u"], {}, {("A", "u"): (1, 1)})
    a = Request.build("a", {"i": ("A", 1)}, {}, profit=2)
    b = Request.build("b", {"i": ("A", 1)}, {}, profit=3)
    res = exact_optimum(s, [a, b], "profit")
    assert res.objective == 3 and res.selection == ["b"]
    assert check_embedding_feasible(s, res.mappings, [a, b])[0]


def test_cost_picks_cheaper():
    s = Substrate.build(["u", "v"], {}, {("A", "u"): (5, 11), ("A", "v"): (5, 7)})
    r = Request.build("r", {"i": ("A", 1)}, {})
    assert exact_optimum(s, [r], "cost").objective == 7


def test_cost_infeasible():
    s = Substrate.build(["u"], {}, {("A", "u"): (1, 1)})
    a = Request.build("a", {"i": ("A", 1)}, {})
    b = Request.build("b", {"i": ("A", 1)}, {})
    with pytest.raises(Infeasible):
        exact_optimum(s, [a, b], "cost")


def test_budget():
    s = full_substrate("uvw")
    reqs = [Request.build(f"r{k}", {"i": ("A", 1)}, {}) for k in range(5)]
    enum = enumerate_instance(s, reqs)
    with pytest.raises(InstanceTooLarge):
        exact_optimum(s, reqs, "profit", enum, budget=100)
