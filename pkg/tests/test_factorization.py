from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weaksym.expr import is_zero, render
from weaksym.factorization import (
    ETA_X,
    ETA_X_U,
    NotASymmetryError,
    build_solved_form,
    check_conditions,
    check_growth_a3,
    closed_form_factor,
    cocycle_defect,
    compute_factor_Q,
    determining_equations,
    infinitesimal_factor,
    injectivity_spot_check,
    principal_matrix_from_Qtilde,
    quasilinear_closed_form_factor,
    verify_factorization,
)
from weaksym.jet import GroupAction, JetSpec, VectorField
from weaksym.model import parse_model
from weaksym.system import make_system


def _burgers():
    sp = JetSpec(("x", "t"), ("u",), 1)
    return make_system(sp, ["u_t + u*u_x"])


def _g1_linear(sys):
    tb = sys.spec.table()
    return GroupAction(
        sys.spec,
        (tb.parse("x/(1 - eta*t)"), tb.parse("t/(1 - eta*t)")),
        (tb.parse("eta*x + u - eta*u*t"),),
        box={"x": (-1, 1), "t": (-1, 1), "u": (-1, 1)},
    )


def _transformed_residual(eta, coeffs, x, t, h=1e-4):
    """Delta of the G1-image of u(x,t) = a + b x + c t + d x t at the image point, by finite differences."""
    a, b, c, d = coeffs

    def u(x, t):
        return a + b * x + c * t + d * x * t

    def image(X, T):
        # inverse of x~ = x/(1 - eta t), t~ = t/(1 - eta t)
        x0, t0 = X / (1 + eta * T), T / (1 + eta * T)
        v = u(x0, t0)
        return eta * x0 + v - eta * v * t0

    X, T = x / (1 - eta * t), t / (1 - eta * t)
    uX = (image(X + h, T) - image(X - h, T)) / (2 * h)
    uT = (image(X, T + h) - image(X, T - h)) / (2 * h)
    here = (b + d * t, c + d * x)
    return uT + image(X, T) * uX, here[1] + u(x, t) * here[0]


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-0.1, 0.1),
    st.tuples(*(st.floats(-1, 1) for _ in range(4))),
    st.floats(-0.8, 0.8),
    st.floats(-0.8, 0.8),
)
def test_burgers_projective_factor_against_graph_transform(eta, coeffs, x, t):
    sys = _burgers()
    Q = compute_factor_Q(sys, _g1_linear(sys))
    lhs, rhs = _transformed_residual(eta, coeffs, x, t)
    u = coeffs[0] + coeffs[1] * x + coeffs[2] * t + coeffs[3] * x * t
    z = np.array([[x, t, u, coeffs[1] + coeffs[3] * t, coeffs[2] + coeffs[3] * x]])
    q = Q.evaluate(eta, z)[0, 0, 0]
    assert lhs == pytest.approx(q * rhs, abs=1e-6)
    assert q == pytest.approx((1 - eta * t) ** 3, abs=1e-12)


def test_exact_tau_method_and_dependence():
    sys = _burgers()
    Q = compute_factor_Q(sys, _g1_linear(sys))
    assert Q.method == "exact-tau"
    assert Q.dependence == ETA_X
    tb = sys.spec.table()
    assert is_zero(Q.entries[0][0] - tb.parse("(1 - eta*t)^3"))


def test_gauss_rule_agrees_with_exact(rng):
    sys = _burgers()
    g = _g1_linear(sys)
    a = compute_factor_Q(sys, g)
    b = compute_factor_Q(sys, g, tau_rule="gauss")
    Z = rng.uniform(-1, 1, size=(50, 5))
    eta = rng.uniform(-0.1, 0.1, 50)
    assert np.max(np.abs(a.evaluate(eta, Z) - b.evaluate(eta, Z))) < 1e-12


def test_quasilinear_formula(rng):
    sys = _burgers()
    g = _g1_linear(sys)
    Ql = quasilinear_closed_form_factor(sys, g)
    Z = rng.uniform(-1, 1, size=(50, 5))
    eta = rng.uniform(-0.1, 0.1, 50)
    assert np.allclose(Ql.evaluate(eta, Z)[:, 0, 0], (1 - eta * Z[:, 1]) ** 3, atol=1e-12)


def test_verify_detects_wrong_factor(rng):
    sys = _burgers()
    g = _g1_linear(sys)
    tb = sys.spec.table()
    bad = closed_form_factor(sys, [[tb.parse("(1 - eta*t)^2")]])
    rep = verify_factorization(sys, g, bad, 100, rng=rng)
    assert not rep.passed
    good = verify_factorization(sys, g, compute_factor_Q(sys, g), 100, rng=rng)
    assert good.passed and good.max_residual < 1e-10


def test_exp_family_dependence(gb_exp):
    for name in ("G1", "G2"):
        Q = compute_factor_Q(gb_exp.system, gb_exp.group(name).action)
        assert Q.dependence == ETA_X_U


def test_newton_solved_form(rng):
    sp = JetSpec(("x", "t"), ("u",), 1)
    sys = make_system(sp, ["u_t + u_t^3 + u*u_x"])
    sf = build_solved_form(sys)
    assert not sf.closed_form
    assert sf.round_trip(rng, 50) < 1e-9


def test_infinitesimal_factor_of_w1(gb_id, rng):
    Qt = infinitesimal_factor(gb_id.system, gb_id.generator("w1").field, rng)
    tb = gb_id.table
    assert is_zero(Qt.entries[0][0] - tb.parse("-3*t"))


def test_non_symmetry_has_witness(rng):
    sys = _burgers()
    tb = sys.spec.table()
    v = VectorField(sys.spec, (tb.parse("0"), tb.parse("x")), (tb.parse("0"),))
    with pytest.raises(NotASymmetryError) as ei:
        infinitesimal_factor(sys, v, rng)
    assert ei.value.witness


def test_principal_matrix_value(gb_id):
    g = gb_id.group("G1").action
    Qt = infinitesimal_factor(gb_id.system, gb_id.generator("w1").field, np.random.default_rng(0))
    P = principal_matrix_from_Qtilde(Qt, g, np.array([0.2, 1.0, 0.3, 0.5, -0.4]), 0.1)
    assert P[0, 0] == pytest.approx(0.9**3, abs=1e-9)


def test_cocycle(gb_exp, rng):
    g = gb_exp.group("G2").action
    Q = compute_factor_Q(gb_exp.system, g)
    Z = rng.uniform(-0.5, 0.5, size=(10, 5))
    assert cocycle_defect(Q, g, 0.04, -0.03, Z) < 1e-10


def test_determining_equations_separate_symmetries(gb_exp, rng):
    conds = determining_equations(gb_exp.system, gb_exp.ansatz)
    names = ("x", "t", "u")
    box = {n: (-1, 1) for n in names}
    for w in ("w1", "w2"):
        fns = gb_exp.specialization(gb_exp.generator(w))
        assert check_conditions(conds, names, rng, 50, box, fns) < 1e-10
    wrong = parse_model(gb_exp.text.replace("t: t^2\nu: (x - f(u)*t)/fp(u)", "t: t^2\nu: x/fp(u)"))
    fns = wrong.specialization(wrong.generator("w1"))
    assert check_conditions(conds, names, rng, 50, box, fns) > 1e-3


def test_growth_and_injectivity(rng):
    sys = _burgers()
    ga = check_growth_a3(sys, {"x": (-1, 1), "t": (-1, 1)}, rng=rng)
    assert not ga.violated and ga.constant and ga.C == 1.0
    assert injectivity_spot_check(build_solved_form(sys), rng, 2000) == 0
    sp = JetSpec(("x", "t"), ("u",), 1)
    deg = make_system(sp, ["x*u_t + u_x"])
    assert check_growth_a3(deg, {"x": (-1, 1), "t": (-1, 1)}, rng=rng, zero_tol=1e-3).violated


def test_rendered_factor_is_readable():
    sys = _burgers()
    Q = compute_factor_Q(sys, _g1_linear(sys))
    assert "eta" in render(Q.entries[0][0])
