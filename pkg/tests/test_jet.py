from __future__ import annotations

from math import comb

import numpy as np
import pytest
import sympy as S
from hypothesis import given, settings, strategies as st

from weaksym.expr import evaluate_array, is_zero, normalize
from weaksym.jet import (
    JetSpec,
    ProjectabilityError,
    VectorField,
    flow,
    numeric_prolonged_generator,
    prolong_function,
    prolong_group_action,
    prolong_vector_field,
    total_derivative,
    vector_field_from_action,
)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 3))
def test_coordinate_count(p, q, n):
    sp = JetSpec("xyz"[:p], ["u", "v", "w"][:q], n)
    assert sp.N == p + q * comb(p + n, n)
    assert len(set(sp.coords)) == sp.N


def test_jet_names_are_canonical():
    sp = JetSpec(("x", "t"), ("u",), 2)
    assert sp.canonical("u_tx") == "u_xt"
    assert sp.multi_index("u_xt") == (0, (0, 1))
    assert sp.jet_order("u_tt") == 2


def test_total_derivative_on_function(burgers_spec):
    sp = JetSpec(("x", "t"), ("u",), 2)
    t = sp.table()
    e = t.parse("u*u_x + sin(x)*u_t")
    jets = prolong_function([t.parse("exp(x)*t^2")], sp)
    from weaksym.expr import substitute

    lhs = substitute(total_derivative(e, 0, sp), jets)
    rhs = __import__("weaksym.expr", fromlist=["differentiate"]).differentiate(substitute(e, jets), "x")
    assert is_zero(lhs - rhs)


def _sympy_pr1(xi, tau, phi):
    x, t, u, ux, ut = S.symbols("x t u u_x u_t")

    def D(e, var):
        return S.diff(e, var) + (ux if var == x else ut) * S.diff(e, u)

    xi_, tau_, phi_ = (S.sympify(s, locals={"x": x, "t": t, "u": u}) for s in (xi, tau, phi))
    out = {}
    for var, name in ((x, "u_x"), (t, "u_t")):
        out[name] = D(phi_, var) - ux * D(xi_, var) - ut * D(tau_, var)
    return (x, t, u, ux, ut), out


@pytest.mark.parametrize(
    "xi,tau,phi",
    [("x*t", "t**2", "x - u*t"), ("x**2", "x*t", "u*(x - u*t)"), ("sin(x)", "0", "u**2 + t")],
)
def test_first_prolongation_matches_sympy(burgers_spec, xi, tau, phi, rng):
    sp = burgers_spec
    tb = sp.table()
    v = VectorField(sp, (tb.parse(xi.replace("**", "^")), tb.parse(tau.replace("**", "^"))), (tb.parse(phi.replace("**", "^")),))
    coeffs = prolong_vector_field(v, sp)
    syms, want = _sympy_pr1(xi, tau, phi)
    Z = rng.uniform(-1, 1, size=(40, 5))
    for name in ("u_x", "u_t"):
        got = np.broadcast_to(evaluate_array(coeffs[name], sp.coords, *Z.T), (40,))
        ref = S.lambdify(syms, want[name], "numpy")(*Z.T)
        assert np.allclose(got, ref, atol=1e-12)


def test_closed_and_recursive_prolongation_agree():
    sp = JetSpec(("x", "t"), ("u",), 2)
    tb = sp.table()
    v = VectorField(sp, (tb.parse("x*t"), tb.parse("t^2")), (tb.parse("x - u*t"),))
    a = prolong_vector_field(v, sp, method="closed")
    b = prolong_vector_field(v, sp, method="recursive")
    for k in a:
        assert is_zero(a[k] - b[k])


def test_prolongation_matches_flow_oracle(burgers_spec, rng):
    tb = burgers_spec.table()
    v = VectorField(burgers_spec, (tb.parse("x*t"), tb.parse("t^2")), (tb.parse("x - u*t"),))
    Z = rng.uniform(-0.5, 0.5, size=(10, burgers_spec.N))
    coeffs = prolong_vector_field(v)
    sym = np.column_stack([evaluate_array(coeffs[c], burgers_spec.coords, *Z.T) for c in ("u_x", "u_t")])
    assert np.max(np.abs(sym - numeric_prolonged_generator(v, Z))) < 1e-5


def test_non_projectable_field_rejected(burgers_spec):
    tb = burgers_spec.table()
    with pytest.raises(ProjectabilityError):
        VectorField(burgers_spec, (tb.parse("u"), tb.parse("0")), (tb.parse("0"),))


def test_generator_of_projective_action(gb_id):
    g = gb_id.group("G1").action
    v = vector_field_from_action(g)
    tb = gb_id.table
    want = [tb.parse(s) for s in ("x*t", "t^2", "x - u*t")]
    for got, w in zip(v.xi + v.phi, want):
        assert is_zero(normalize(got) - w)


def test_flow_of_scaling_is_exponential(burgers_spec):
    tb = burgers_spec.table()
    v = VectorField(burgers_spec, (tb.parse("x"), tb.parse("0")), (tb.parse("u"),))
    end = flow(v, 0.5, [1.0, 2.0, 3.0])
    assert np.allclose(end, [np.exp(0.5), 2.0, 3 * np.exp(0.5)], rtol=1e-10)


def test_prolonged_action_round_trip(gb_exp, rng):
    g = gb_exp.group("G1").action
    pa = prolong_group_action(g, gb_exp.spec)
    Z = rng.uniform(-0.5, 0.5, size=(20, gb_exp.spec.N))
    fwd = pa.apply(0.05, Z)
    back = pa.apply(-0.05, fwd)
    assert np.max(np.abs(back - Z)) < 1e-10
