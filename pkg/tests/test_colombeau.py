from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as si

from weaksym.colombeau import (
    CONVERGES_TO_NONZERO,
    CONVERGES_TO_ZERO,
    DIVERGES,
    Mollifier,
    ProbeFamily,
    apply_group,
    classify_curve,
    default_grid,
    embed_delta,
    embed_heaviside,
    growth_exponent,
    integrate_test_function,
    pair_association_curve,
    probe,
    riemann_limit_oracle,
    shock_net,
    strong_association_check,
    weak_residual_curve,
)
from weaksym.expr import Sym, call, lambdify
from weaksym.jet import GroupAction, JetSpec
from weaksym.system import make_system


@pytest.fixture(scope="module")
def moll():
    return Mollifier()


def _raw(y):
    return math.exp(-1 / (1 - y * y)) if abs(y) < 1 else 0.0


def test_mollifier_normalized_against_scipy(moll):
    Z, _ = si.quad(_raw, -1, 1, epsabs=1e-15)
    th = lambdify(_call(moll.theta), ("y",))
    for y in (0.0, 0.3, -0.8):
        assert float(th(y)) == pytest.approx(_raw(y) / Z, rel=1e-12)
    moll.check()


def _call(fn):
    return call(fn, [Sym("y")])


def test_Theta_is_primitive(moll):
    Z, _ = si.quad(_raw, -1, 1, epsabs=1e-15)
    T = lambdify(_call(moll.Theta), ("y",))
    for y in (-0.9, -0.2, 0.0, 0.55, 0.99):
        want, _ = si.quad(_raw, -1, y, epsabs=1e-15)
        assert float(T(y)) == pytest.approx(want / Z, abs=1e-12)
    assert float(T(2.0)) == 1.0
    assert float(T(-2.0)) == 0.0


def test_delta_net_pairs_to_point_value(moll):
    # int delta_eps(x) phi(x) dx -> phi(0); phi is the bump at 0.3 of radius 1
    phi = probe(("x",), (0.3,), 1.0)
    f = lambdify(phi.expr, ("x",))
    net = embed_delta(moll, Sym("x"))
    g = lambdify(net.components[0], ("x", "eps"))
    vals = [si.quad(lambda x: float(g(x, e)) * float(f(x)), -e, e, epsabs=1e-14)[0] for e in (1e-2, 1e-3)]
    assert vals[-1] == pytest.approx(float(f(0.0)), abs=1e-5)
    assert abs(vals[-1] - f(0.0)) < abs(vals[0] - f(0.0))


def test_probe_mass_against_scipy():
    phi = probe(("x",), (0.0,), 0.5)
    want, _ = si.quad(lambda x: _raw(x / 0.5), -0.5, 0.5, epsabs=1e-15)
    assert integrate_test_function(phi) == pytest.approx(want, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.8, 3.0), st.floats(0.1, 5.0))
def test_classify_decaying_curve(p, c):
    eps = default_grid()
    slope, verdict, _ = classify_curve(eps, c * eps**p)
    assert verdict == CONVERGES_TO_ZERO
    assert slope == pytest.approx(p, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.8, 3.0))
def test_classify_diverging_curve(p):
    eps = default_grid()
    _, verdict, _ = classify_curve(eps, eps**-p)
    assert verdict == DIVERGES


def test_classify_nonzero_limit():
    eps = default_grid()
    _, verdict, lim = classify_curve(eps, 0.7 + 0.3 * eps)
    assert verdict == CONVERGES_TO_NONZERO
    assert lim == pytest.approx(0.7, abs=1e-6)


def test_exact_zero_curve():
    _, verdict, _ = classify_curve(default_grid(), np.zeros(10))
    assert verdict == CONVERGES_TO_ZERO


def test_growth_of_heaviside_and_delta(moll):
    grid = default_grid(3, 10)
    H = embed_heaviside(moll, Sym("x"))
    assert abs(growth_exponent(H, (0,), {"x": (-1, 1)}, grid).p) < 0.05
    d = embed_delta(moll, Sym("x"))
    assert growth_exponent(d, (1,), {"x": (-1, 1)}, grid).p == pytest.approx(2.0, abs=0.1)


def _burgers():
    sp = JetSpec(("x", "t"), ("u",), 1)
    return make_system(sp, ["u_t + u*u_x"])


def test_riemann_oracle_line_integral(moll):
    phi = probe(("x", "t"), (1.0, 2.0), 1.0, 1)
    f = lambdify(phi.expr, ("x", "t"))
    c = 0.4
    line, _ = si.quad(lambda t: float(f(c * t, t)), 0.5, 3.5, epsabs=1e-14, limit=200)
    # jump [F(u_r) - F(u_l) - c (u_r - u_l)] for u_l = 1, u_r = 0, F = u^2/2
    assert riemann_limit_oracle(phi, 1.0, 0.0, c) == pytest.approx((-0.5 + c) * line, rel=1e-9)


def test_rh_shock_residual_vanishes(moll):
    net = shock_net(moll, 1.0, 0.0, 0.5)
    phi = probe(("x", "t"), (1.2, 2.0), 0.5, 1)
    cur = weak_residual_curve(_burgers(), net, phi, default_grid(3, 10))
    assert cur.verdict == CONVERGES_TO_ZERO
    assert cur.slope >= 0.8


def test_wrong_speed_shock_converges_to_oracle(moll):
    net = shock_net(moll, 1.0, 0.0, 0.4)
    phi = probe(("x", "t"), (0.9, 2.0), 1.0, 1)
    cur = weak_residual_curve(_burgers(), net, phi, default_grid(3, 10))
    assert cur.verdict == CONVERGES_TO_NONZERO
    assert cur.limit_estimate == pytest.approx(riemann_limit_oracle(phi, 1.0, 0.0, 0.4), rel=0.05)


def test_strong_association_family(moll):
    fam = ProbeFamily(("x", "t"), ((1.0, 2.0), (1.2, 2.2)), (1.0, 0.5), 1)
    cur = strong_association_check(_burgers(), shock_net(moll, 1.0, 0.0, 0.5), fam, default_grid(3, 9))
    assert cur.verdict == CONVERGES_TO_ZERO
    assert cur.per_probe.shape == (4, 1, 7)


def test_translated_shock_stays_associated(moll):
    sp = JetSpec(("x", "t"), ("u",), 1)
    tb = sp.table()
    g = GroupAction(sp, (tb.parse("x + eta"), tb.parse("t")), (tb.parse("u"),))
    moved = apply_group(shock_net(moll, 1.0, 0.0, 0.5), g, 0.1)
    phi = probe(("x", "t"), (1.3, 2.0), 0.5, 1)
    cur = weak_residual_curve(_burgers(), moved, phi, default_grid(3, 10))
    assert cur.verdict == CONVERGES_TO_ZERO


def test_pair_association_of_equal_limits(moll):
    a = embed_heaviside(moll, Sym("x"))
    b = embed_heaviside(moll, Sym("x") * 2)
    cur = pair_association_curve(a, b, probe(("x",), (0.2,), 1.0), default_grid(3, 10))
    assert cur.verdict == CONVERGES_TO_ZERO
