from __future__ import annotations

import pytest

from weaksym.model import ModelError, parse_model
from weaksym.scenarios import SCENARIOS, emit_model

BASE = """[model]
indep: x, t
dep: u
const: c = 1/2

[system]
eq: u_t + u*u_x
"""


def test_minimal_model():
    m = parse_model(BASE)
    assert m.system.classification == "quasilinear"
    assert float(m.constants["c"].value) == 0.5


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_every_scenario_emits_a_parsable_model(name):
    m = parse_model(emit_model(name))
    assert m.scenario["tasks"]


def test_undeclared_symbol_reports_line_and_column():
    with pytest.raises(ModelError) as ei:
        parse_model(BASE + "\n[group G]\nx: x + eta*w\nt: t\nu: u\n")
    assert ei.value.line == 10
    assert ei.value.column == 12
    assert "w" in ei.value.message


def test_missing_model_section():
    with pytest.raises(ModelError):
        parse_model("[system]\neq: u_t\n")


def test_unknown_section():
    with pytest.raises(ModelError):
        parse_model(BASE + "[bogus]\nx: 1\n")


def test_group_linear_parts_detected():
    m = parse_model(BASE + "\n[group G]\nx: x/(1 - eta*t)\nt: t/(1 - eta*t)\nu: eta*x + u - eta*u*t\n")
    assert m.group("G").action.linear


def test_generator_linked_to_group():
    text = BASE + "\n[group G]\nx: x + eta\nt: t\nu: u\n\n[generator v]\nx: 1\nt: 0\nu: 0\ngroup: G\n"
    m = parse_model(text)
    assert m.generator("v").group == "G"


def test_net_with_equation_override():
    text = """[model]
indep: x
dep: u

[net n]
u: cos(eps^2*x)/eps
eq: u_x
centers: 0
"""
    m = parse_model(text)
    nd = m.nets[0]
    assert nd.system is not None and nd.family is not None


def test_comments_and_blank_lines_ignored():
    m = parse_model("# header\n" + BASE.replace("eq: u_t + u*u_x", "eq: u_t + u*u_x  # Burgers"))
    assert len(m.system.equations) == 1


def test_reserved_names_rejected():
    with pytest.raises(ModelError):
        parse_model(BASE.replace("const: c = 1/2", "const: eta = 1"))
