from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as si
from scipy.linalg import expm

from weaksym.numerics import (
    BlowUpError,
    QuadratureError,
    QuadratureSpec,
    eig2,
    fit_power_law,
    gauss_legendre,
    integrate,
    rk4_solve,
)


@pytest.mark.parametrize("order", [2, 8, 16, 32])
def test_gauss_legendre_exact_for_polynomials(order):
    x, w = gauss_legendre(order)
    for k in range(2 * order):
        want = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(w, x**k) == pytest.approx(want, abs=1e-13)


@pytest.mark.parametrize(
    "f,dom",
    [
        (lambda x: np.exp(-x * x), (-3.0, 2.0)),
        (lambda x: np.sqrt(np.abs(x)), (-1.0, 1.0)),
        (lambda x: np.sin(30 * x) * np.exp(x), (0.0, 2.0)),
    ],
)
def test_adaptive_integral_against_scipy(f, dom):
    got = integrate(f, dom, QuadratureSpec(tol=1e-12))
    want, _ = si.quad(f, *dom, epsabs=1e-13, limit=500, points=[0.0] if dom[0] < 0 < dom[1] else None)
    assert got.converged
    assert got.value == pytest.approx(want, abs=1e-10)


def test_reversed_interval_changes_sign():
    a = integrate(np.cos, (0.0, 1.0)).value
    b = integrate(np.cos, (1.0, 0.0)).value
    assert a == pytest.approx(-b)


def test_2d_integral_with_variable_bounds():
    # integral over the unit disc of x^2
    got = integrate(lambda x, t: x * x, ((lambda t: (-np.sqrt(1 - t * t), np.sqrt(1 - t * t))), (-1.0, 1.0)), QuadratureSpec(tol=1e-11))
    assert got.value == pytest.approx(np.pi / 4, abs=1e-8)


def test_strict_integration_raises():
    spec = QuadratureSpec(tol=1e-15, max_panels=4)
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.abs(np.sin(1 / (x + 1e-9))), (0.0, 1.0), spec, strict=True)


def test_rk4_linear_system_matches_expm():
    A = np.array([[0.3, -1.0], [1.2, -0.4]])
    Y = rk4_solve(lambda s, y: A @ y, np.eye(2), (0.0, 1.0), 200)
    assert np.max(np.abs(Y - expm(A))) < 1e-9


def test_rk4_fourth_order_convergence():
    errs = []
    for n in (10, 20, 40):
        y = rk4_solve(lambda s, y: -y * np.cos(s), np.array([1.0]), (0.0, 2.0), n)
        errs.append(abs(y[0] - np.exp(-np.sin(2.0))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.7)


def test_rk4_blow_up_is_reported():
    with pytest.raises(BlowUpError) as ei:
        rk4_solve(lambda s, y: y * y, np.array([1.0]), (0.0, 2.0), 1000)
    assert 0.9 < ei.value.at < 1.1


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_power_law_fit_recovers_exponent(p, c):
    x = 2.0 ** -np.arange(3, 12)
    fit = fit_power_law(x, c * x**p)
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert np.exp(fit.intercept) == pytest.approx(c, rel=1e-8)


def test_power_law_undefined_for_nonpositive():
    fit = fit_power_law([1, 2, 3, 4], [1, 0, 1, 1])
    assert not fit.defined


@settings(max_examples=60, deadline=None)
@given(*(st.floats(-3, 3) for _ in range(4)))
def test_eig2_against_numpy(a, b, c, d):
    if (a - d) ** 2 + 4 * b * c < 1e-3:
        return
    l1, l2, r1, r2, L1, L2 = eig2(a, b, c, d)
    A = np.array([[a, b], [c, d]])
    assert np.allclose(sorted(np.linalg.eigvals(A).real), [l1, l2], atol=1e-9)
    for lam, r, l in ((l1, r1, L1), (l2, r2, L2)):
        assert np.allclose(A @ r, lam * r, atol=1e-8 * (1 + np.linalg.norm(r)))
        assert np.dot(l, r) == pytest.approx(1.0)
