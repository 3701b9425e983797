from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weaksym.expr import Const
from weaksym.hyperbolic import (
    HyperbolicityError,
    characteristic_candidate,
    characteristic_fields,
    hyperbolic_equations,
    verify_hyperbolic_reduction,
)
from weaksym.table import Role, SymbolTable


@pytest.fixture
def tb():
    t = SymbolTable()
    t.declare_many(["x", "t", "u", "v", "s"], Role.INDEPENDENT)
    return t


@settings(max_examples=40, deadline=None)
@given(*(st.integers(-4, 4) for _ in range(4)))
def test_constant_eigenpairs_against_numpy(a, b, c, d):
    if (a - d) ** 2 + 4 * b * c <= 0:
        return
    F = characteristic_fields([[a, b], [c, d]])
    lam, r, l = F.evaluate(np.zeros((1, 2)))
    want = np.sort(np.linalg.eigvals(np.array([[a, b], [c, d]], float)).real)
    assert np.allclose(lam[:, 0], want, atol=1e-10)
    assert F.defect <= 1e-10


def test_elliptic_matrix_rejected():
    with pytest.raises(HyperbolicityError):
        characteristic_fields([[0, 1], [-1, 0]])


def test_characteristic_candidate_solves_first(tb, rng):
    A = [[1, 2], [Const(0.5), -1]]
    F = characteristic_fields(A, rng=rng)
    phi, psi = characteristic_candidate(F, [tb.parse("sin(s)"), tb.parse("s^3")])
    r = verify_hyperbolic_reduction(A, 0, 0, phi, psi, rng=rng)
    assert r.first <= 1e-10


def test_scaling_satisfies_reduced(tb, rng):
    A = [[1, 2], [Const(0.5), -1]]
    r = verify_hyperbolic_reduction(A, tb.parse("x"), tb.parse("t"), 0, 0, rng=rng)
    assert r.second <= 1e-10 and r.reduced <= 1e-10


def test_non_symmetry_has_residual(tb, rng):
    A = [[1, 2], [Const(0.5), -1]]
    r = verify_hyperbolic_reduction(A, tb.parse("x^2"), 0, tb.parse("u"), 0, rng=rng)
    assert max(r.second, r.reduced) > 1e-3


def test_nonconstant_fields(tb, rng):
    A = [[tb.parse("v"), tb.parse("u")], [1, tb.parse("v^2")]]
    F = characteristic_fields(A, box={"u": (0.5, 1.0)}, rng=rng)
    assert F.defect <= 1e-10 and F.gap > 0


def test_equations_are_returned_for_both_components(tb):
    eqs = hyperbolic_equations([[1, 0], [0, -1]], 0, 0, tb.parse("u"), tb.parse("v"))
    assert len(eqs["first"]) == 2 and len(eqs["second"]) == 4 and len(eqs["reduced"]) == 4
