from __future__ import annotations

import json

import pytest

from cactusembed.cactus import orient_and_check
from cactusembed.model import validate_instance
from cactusembed.rounding import theoretical_bounds
from cactusembed.scenario import (
    FIXTURES,
    ScenarioError,
    SpecError,
    dump_scenario,
    generate_instance,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_are_clean(name):
    sc = load_scenario(name)
    assert validate_instance(sc.substrate, sc.requests) == []


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip(name):
    sc = load_scenario(name)
    again = parse_scenario(json.loads(dump_scenario(sc)))
    assert again.substrate == sc.substrate
    assert again.requests == sc.requests
    assert serialize_scenario(again) == serialize_scenario(sc)


def test_field_diagnostics():
    bad = {"substrate": {"nodes": ["u"], "edges": [{"tail": "u"}]}, "requests": []}
    with pytest.raises(ScenarioError, match=r"substrate.edges\[0\]: missing field 'head'"):
        parse_scenario(bad)


def test_json_line_diagnostics(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "substrate": ,\n}')
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(p)


def test_generator_is_deterministic():
    spec = {"topology": "ring", "substrate_nodes": 6, "requests": 2, "seed": 42}
    assert dump_scenario(generate_instance(spec)) == dump_scenario(generate_instance(spec))


def test_generated_cactus_passes_orientation():
    spec = {"shape": "cactus", "cycles": [4], "pendants": 2, "requests": 5, "seed": 1}
    sc = generate_instance(spec)
    assert validate_instance(sc.substrate, sc.requests) == []
    for r in sc.requests:
        assert len(r.nodes) == 6
        o = orient_and_check(r)
        assert max(o.in_degree().values()) <= 2


def test_generated_epsilon_is_reported():
    spec = {"topology": "star", "substrate_nodes": 5, "requests": 3, "epsilon": 0.4, "seed": 5}
    sc = generate_instance(spec)
    b = theoretical_bounds(sc.substrate, sc.requests)
    assert b.epsilon == pytest.approx(0.4)


def test_spec_errors():
    with pytest.raises(SpecError):
        generate_instance({"shape": "cactus", "cycles": [4, 4], "pendants": 0})
    with pytest.raises(SpecError):
        generate_instance({"topology": "torus"})
    with pytest.raises(SpecError):
        generate_instance({"colour": "blue"})
