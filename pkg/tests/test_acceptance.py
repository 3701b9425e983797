"""Acceptance criteria 1-10, each against an oracle built here from numpy/scipy/sympy.

Run under pytest (a summary line per criterion is printed at the end of the
session) or directly: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
import sympy as S
from scipy import integrate as si
from scipy import optimize as so

from weaksym.analysis import prolongation_defect
from weaksym.cli import analyze
from weaksym.colombeau import (
    CONVERGES_TO_ZERO,
    DIVERGES,
    embed_delta,
    growth_exponent,
    strong_association_check,
)
from weaksym.expr import Const, Sym, evaluate_array
from weaksym.factorization import (
    ETA_X,
    build_solved_form,
    check_conditions,
    compute_factor_Q,
    determining_equations,
    infinitesimal_factor,
    principal_matrix_from_Qtilde,
    quasilinear_closed_form_factor,
    verify_factorization,
)
from weaksym.hyperbolic import characteristic_candidate, characteristic_fields, verify_hyperbolic_reduction
from weaksym.jet import prolong_vector_field
from weaksym.model import grid_from, parse_model
from weaksym.scenarios import emit_model, run_scenario

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


# ---------------------------------------------------------------------------
# oracles

FAM = {
    "id": dict(f=lambda u: u, fp=lambda u: np.ones_like(u), finv=lambda y: y),
    "exp": dict(f=np.exp, fp=np.exp, finv=np.log),
}


def Q1(fam, eta, x, t, u):
    f, fp, finv = FAM[fam]["f"], FAM[fam]["fp"], FAM[fam]["finv"]
    return (1 - eta * t) ** 3 * fp(u) / fp(finv(eta * x + f(u) - eta * f(u) * t))


def Q2(fam, eta, x, t, u):
    f, fp, finv = FAM[fam]["f"], FAM[fam]["fp"], FAM[fam]["finv"]
    d = 1 - eta * (x - t * f(u))
    return (1 - eta * x) ** 3 * fp(u) / (d**3 * fp(finv(f(u) / d)))


def act(group, fam, eta, x, t, u):
    """Explicit action on (x, t, u)."""
    f, finv = FAM[fam]["f"], FAM[fam]["finv"]
    if group == "G1":
        return x / (1 - eta * t), t / (1 - eta * t), finv(eta * x + f(u) - eta * f(u) * t)
    return x / (1 - eta * x), t / (1 - eta * x), finv(f(u) / (1 - eta * (x - f(u) * t)))


def act_inverse_base(group, eta, X, T):
    if group == "G1":
        return X / (1 + eta * T), T / (1 + eta * T)
    return X / (1 + eta * X), T / (1 + eta * X)


def transformed_jet(group, fam, eta, z, h=1e-4):
    """pr^1 g_eta z by transforming the graph of the affine function through z (central differences)."""
    x, t, u, ux, ut = z

    def ulin(a, b):
        return u + ux * (a - x) + ut * (b - t)

    def image(X, T):
        a, b = act_inverse_base(group, eta, X, T)
        return act(group, fam, eta, a, b, ulin(a, b))[2]

    X, T, U = act(group, fam, eta, x, t, u)
    uX = (image(X + h, T) - image(X - h, T)) / (2 * h)
    uT = (image(X, T + h) - image(X, T - h)) / (2 * h)
    return np.array([X, T, U, uX, uT])


def bump(r2):
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    m = r2 < 1
    out[m] = np.exp(-1.0 / (1.0 - r2[m]))
    return out


def probe_value(center, scale, k, x, t):
    r2 = ((x - center[0]) / scale) ** 2 + ((t - center[1]) / scale) ** 2
    return scale**k * bump(r2)


def line_integral(center, scale, k, c):
    """integral over t of phi(c t, t), restricted to the support."""
    # |(c t - a, t - b)| < s  <=>  quadratic in t
    a, b = center
    A = c * c + 1
    B = -2 * (c * a + b)
    C = a * a + b * b - scale * scale
    disc = B * B - 4 * A * C
    if disc <= 0:
        return 0.0
    lo, hi = (-B - math.sqrt(disc)) / (2 * A), (-B + math.sqrt(disc)) / (2 * A)
    val, _ = si.quad(lambda t: float(probe_value(center, scale, k, c * t, t)), lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)
    return val


def loglog_slope(eps, r):
    return float(np.polyfit(np.log(eps), np.log(np.abs(r)), 1)[0])


# ---------------------------------------------------------------------------
# 1. Rankine-Hugoniot


def criterion_1():
    t0 = time.perf_counter()
    rep = run_scenario("burgers-riemann", {"ul": 1, "ur": 0, "c": 0.5})
    dt_rh = time.perf_counter() - t0
    chk = rep.by_name()["associate:shock"]
    eps = np.array(chk.epsilons)
    r = np.array(chk.residuals[0])
    window = eps <= 2.0**-8 + 1e-15
    slope = loglog_slope(eps[window], r[window])
    ok_rh = chk.status == "pass" and slope >= 0.8 and window.sum() == 5

    t0 = time.perf_counter()
    c = 0.4
    m = parse_model(emit_model("burgers-riemann", {"c": c}))
    nd = m.nets[0]
    cur = strong_association_check(m.system, nd.net, nd.family, grid_from(m.scenario))
    dt_bad = time.perf_counter() - t0
    members = nd.family.members()
    ul, ur = 1.0, 0.0
    # derived sign: r(eps) -> [F(u_r) - F(u_l) - c (u_r - u_l)] int phi(ct, t) dt
    jump = (0.5 * ur**2 - 0.5 * ul**2) - c * (ur - ul)
    lines = [line_integral(p.center, p.radius, nd.family.k, c) for p in members]
    w = int(np.argmax(np.abs(lines)))
    rw = cur.per_probe[w, 0]
    lim = 2 * rw[-1] - rw[-2]  # first-order Richardson on eps, eps/2
    oracle = jump * lines[w]
    printed = (c * (ur - ul) - 0.5 * (ur**2 - ul**2)) * lines[w]
    rel = abs(lim - oracle) / abs(oracle)
    rel_printed = abs(lim - (-printed)) / abs(printed)
    ok_bad = cur.verdict != CONVERGES_TO_ZERO and rel <= 0.05 and rel_printed <= 0.05
    ok = ok_rh and ok_bad and dt_rh <= 60 and dt_bad <= 60
    record(
        1,
        ok,
        f"RH slope {slope:.3f} (eps 2^-8..2^-12); c=0.4 limit {lim:.6g} vs oracle {oracle:.6g} (rel {rel:.2e}); "
        f"printed sign gives {printed:.6g}; runtimes {dt_rh:.1f}s/{dt_bad:.1f}s",
    )
    return ok


# ---------------------------------------------------------------------------
# 2. generalized Burgers shock


def criterion_2(tmp_path=None):
    import tempfile
    from pathlib import Path

    ul, ur = 1.0, 0.0
    c_rh = (math.exp(ur) - math.exp(ul)) / (ur - ul)
    out = {}
    times = {}
    d = Path(tmp_path or tempfile.mkdtemp())
    for label, c in (("rh", c_rh), ("perturbed", c_rh + 0.05)):
        p = d / f"gb_{label}.wsm"
        p.write_text(emit_model("generalized-burgers", {"f": "exp", "c": c}))
        t0 = time.perf_counter()
        rep = analyze(str(p), "associate")
        times[label] = time.perf_counter() - t0
        out[label] = rep.by_name()["associate:shock"]
    ok = out["rh"].status == "pass" and out["perturbed"].status == "fail" and max(times.values()) <= 60
    record(
        2,
        ok,
        f"c={c_rh:.6f}: {out['rh'].status} (slope {out['rh'].slope:.3f}); c+0.05: {out['perturbed'].status} "
        f"({out['perturbed'].details['verdict']}); runtimes {times['rh']:.1f}s/{times['perturbed']:.1f}s",
    )
    return ok


# ---------------------------------------------------------------------------
# 3. closed-form factors


def criterion_3():
    rng = np.random.default_rng(3)
    worst_formula = 0.0
    worst_resid = 0.0
    worst_graph = 0.0
    for fam in ("id", "exp"):
        m = parse_model(emit_model("generalized-burgers", {"f": fam}))
        for gname, formula in (("G1", Q1), ("G2", Q2)):
            g = m.group(gname).action
            Q = compute_factor_Q(m.system, g)
            eta = rng.uniform(-0.1, 0.1, 200)
            Z = rng.uniform(-1, 1, size=(200, 5))
            got = Q.evaluate(eta, Z)[:, 0, 0]
            want = formula(fam, eta, Z[:, 0], Z[:, 1], Z[:, 2])
            worst_formula = max(worst_formula, float(np.max(np.abs(got - want))))
            rep = verify_factorization(m.system, g, Q, 200, rng=rng, tol=1e-8)
            worst_resid = max(worst_resid, rep.max_residual)
            f = FAM[fam]["f"]
            for e, z in zip(eta[:30], Z[:30]):
                W = transformed_jet(gname, fam, e, z)
                lhs = W[4] + f(W[2]) * W[3]
                rhs = formula(fam, e, *z[:3]) * (z[4] + f(z[2]) * z[3])
                worst_graph = max(worst_graph, abs(lhs - rhs))
    ok = worst_formula <= 1e-8 and worst_resid <= 1e-8 and worst_graph <= 1e-6
    record(3, ok, f"max |Q - Q_formula| {worst_formula:.2e}; factorization residual {worst_resid:.2e}; graph-transform oracle {worst_graph:.2e}")
    return ok


# ---------------------------------------------------------------------------
# 4. ODE bridge and cocycle


def criterion_4():
    rng = np.random.default_rng(4)
    vals = {}
    worst = 0.0
    for fam in ("id", "exp"):
        m = parse_model(emit_model("generalized-burgers", {"f": fam}))
        g = m.group("G1").action
        Qt = infinitesimal_factor(m.system, m.generator("w1").field, rng)
        z = np.array([0.3, 1.0, 0.2, 0.4, -0.7])
        P = principal_matrix_from_Qtilde(Qt, g, z, 0.1)[0, 0]
        want = Q1(fam, 0.1, 0.3, 1.0, 0.2)
        vals[fam] = P
        worst = max(worst, abs(P - want))
    ok_bridge = worst <= 1e-6 and abs(vals["id"] - 0.729) <= 1e-6
    # cocycle, with the formula and the explicit action only
    cw = 0.0
    for fam in ("id", "exp"):
        for gname, formula in (("G1", Q1), ("G2", Q2)):
            for _ in range(100):
                e1, e2 = rng.uniform(-0.05, 0.05, 2)
                x, t, u = rng.uniform(-1, 1, 3)
                X, T, U = act(gname, fam, e1, x, t, u)
                lhs = formula(fam, e1 + e2, x, t, u)
                rhs = formula(fam, e2, X, T, U) * formula(fam, e1, x, t, u)
                cw = max(cw, abs(lhs - rhs))
    ok = ok_bridge and cw <= 1e-8
    record(4, ok, f"RK4 principal matrix at eta=0.1,t=1: {vals['id']:.9f} (f=id), |P - Q1| max {worst:.2e}; cocycle defect {cw:.2e}")
    return ok


# ---------------------------------------------------------------------------
# 5. determining equations


def _sympy_symmetry_residual(xi, tau, phi):
    """pr v(Delta) on shell for u_t + exp(u) u_x, built with sympy."""
    x, t, u, ux = S.symbols("x t u u_x")
    ut = -S.exp(u) * ux
    f = S.exp(u)

    def D(e, var):
        return S.diff(e, var) + (ux if var == x else ut) * S.diff(e, u)

    Px = D(phi, x) - ux * D(xi, x) - ut * D(tau, x)
    Pt = D(phi, t) - ux * D(xi, t) - ut * D(tau, t)
    expr = Pt + f * Px + phi * S.diff(f, u) * ux
    return S.lambdify((x, t, u, ux), expr, "numpy")


def criterion_5():
    rng = np.random.default_rng(5)
    m = parse_model(emit_model("generalized-burgers", {"f": "exp"}))
    conds = determining_equations(m.system, m.ansatz)
    names = ("x", "t", "u")
    box = {n: (-1, 1) for n in names}
    res = {w: check_conditions(conds, names, rng, 100, box, m.specialization(m.generator(w))) for w in ("w1", "w2")}
    x, t, u = S.symbols("x t u")
    fields = {
        "w1": (x * t, t**2, (x - S.exp(u) * t) / S.exp(u)),
        "w2": (x**2, x * t, S.exp(u) * (x - S.exp(u) * t) / S.exp(u)),
    }
    P = rng.uniform(-1, 1, size=(100, 4))
    sres = {w: float(np.max(np.abs(_sympy_symmetry_residual(*fields[w])(*P.T)))) for w in fields}
    two = parse_model(emit_model("two-component-transport"))
    det = build_solved_form(two.system).det
    exact = isinstance(det, Const) and det.value == 1
    ok = max(res.values()) <= 1e-10 and max(sres.values()) <= 1e-10 and exact
    record(
        5,
        ok,
        f"determining residual w1 {res['w1']:.2e}, w2 {res['w2']:.2e}; sympy oracle {sres['w1']:.2e}/{sres['w2']:.2e}; two-component det = {det}",
    )
    return ok


# ---------------------------------------------------------------------------
# 6. quasilinear factor and negative controls


def criterion_6():
    rng = np.random.default_rng(6)
    m = parse_model(emit_model("quasilinear-factor"))
    g = m.group("G1").action
    Qg = compute_factor_Q(m.system, g, tau_rule="gauss")
    Ql = quasilinear_closed_form_factor(m.system, g)
    eta = rng.uniform(-0.1, 0.1, 100)
    Z = rng.uniform(-1, 1, size=(100, 5))
    a = Qg.evaluate(eta, Z)[:, 0, 0]
    d = float(np.max(np.abs(a - Ql.evaluate(eta, Z)[:, 0, 0])))
    d_oracle = float(np.max(np.abs(a - (1 - eta * Z[:, 1]) ** 3)))
    deps = {}
    for label, fam, gname in (("(i)", "exp", "G1"), ("(ii)", "id", "G2")):
        mm = parse_model(emit_model("generalized-burgers", {"f": fam}))
        deps[label] = compute_factor_Q(mm.system, mm.group(gname).action).dependence
    ok = d <= 1e-8 and d_oracle <= 1e-8 and all(v != ETA_X for v in deps.values()) and Qg.method == "gauss-legendre"
    record(6, ok, f"|Q_gauss - Q_formula| {d:.2e} (vs (1-eta t)^3: {d_oracle:.2e}); negative controls {deps}")
    return ok


# ---------------------------------------------------------------------------
# 7. counterexample


def criterion_7():
    rep = run_scenario("ode-counterexample").by_name()
    d = rep["associate:derivative"]
    c0 = rep["associate:const0"]
    c1 = rep["associate:const1"]
    ok_lib = d.details["verdict"] == CONVERGES_TO_ZERO and d.slope >= 0.8
    ok_lib &= all(c.details["verdict"] == DIVERGES and c.slope <= -0.8 for c in (c0, c1))
    # scipy oracle for int (u_eps - c) phi on the first probe (centered at 0, scale 1, k = 1)
    eps = np.array(c0.epsilons)
    phi = lambda x: bump(np.asarray(x) ** 2)  # noqa: E731
    ref = np.array([si.quad(lambda x: math.cos(e * e * x) / e * float(phi(x)), -1, 1, epsabs=1e-13)[0] for e in eps])
    oracle_slope = loglog_slope(eps[5:], ref[5:])
    ok = ok_lib and oracle_slope <= -0.8
    record(7, ok, f"u_x slope {d.slope:.3f} ({d.details['verdict']}); u slope {c0.slope:.3f}, u-1 slope {c1.slope:.3f}; scipy oracle slope {oracle_slope:.3f}")
    return ok


# ---------------------------------------------------------------------------
# 8. growth exponents


def criterion_8():
    m = parse_model(emit_model("burgers-riemann"))
    grid = grid_from(m.scenario)
    moll = m.mollifier
    d = embed_delta(moll, Sym("x"))
    K = {"x": (-1.0, 1.0)}
    p0 = growth_exponent(d, (0,), K, grid)
    p1 = growth_exponent(d, (1,), K, grid)
    shock = next(n for n in m.nets if n.name == "shock").net
    ps = growth_exponent(shock, (0, 0), shock.box, grid)
    # scipy oracle: sup|theta_eps| = theta(0)/eps, sup|theta_eps'| = max|theta'|/eps^2
    Z, _ = si.quad(lambda y: math.exp(-1 / (1 - y * y)), -1, 1, epsabs=1e-15)
    dth = lambda y: -2 * y / (1 - y * y) ** 2 * math.exp(-1 / (1 - y * y)) / Z  # noqa: E731
    ymax = so.minimize_scalar(lambda y: -abs(dth(y)), bounds=(0.05, 0.95), method="bounded").x
    sup0 = math.exp(-1) / Z / grid
    sup1 = abs(dth(ymax)) / grid**2
    rel0 = float(np.max(np.abs(p0.sups - sup0) / sup0))
    rel1 = float(np.max(np.abs(p1.sups - sup1) / sup1))
    ok = abs(p0.p - 1) <= 0.1 and abs(p1.p - 2) <= 0.1 and abs(ps.p) <= 0.05 and rel0 <= 1e-6 and rel1 <= 1e-3
    record(8, ok, f"p(delta) {p0.p:.4f}, p(delta') {p1.p:.4f}, p(shock) {ps.p:.4f}; sup vs closed form rel {rel0:.1e}/{rel1:.1e}")
    return ok


# ---------------------------------------------------------------------------
# 9. prolongation oracle


def criterion_9():
    rng = np.random.default_rng(9)
    worst = {}
    m = parse_model(emit_model("generalized-burgers", {"f": "exp"}))
    for w, gname in (("w1", "G1"), ("w2", "G2")):
        v = m.generator(w).field
        coeffs = prolong_vector_field(v, m.spec)
        Z = rng.uniform(-0.5, 0.5, size=(50, 5))
        sym = np.column_stack([np.broadcast_to(evaluate_array(coeffs[c], m.spec.coords, *Z.T), (50,)) for c in ("u_x", "u_t")])
        de = 1e-4
        num = np.array([(transformed_jet(gname, "exp", de, z) - transformed_jet(gname, "exp", -de, z))[3:] / (2 * de) for z in Z])
        worst[w] = max(float(np.max(np.abs(sym - num))), prolongation_defect(v, rng, 50, m.group(gname).action.box))
    q = parse_model(emit_model("quasilinear-factor"))
    from weaksym.jet import vector_field_from_action

    vq = vector_field_from_action(q.group("G1").action)
    coeffs = prolong_vector_field(vq, q.spec)
    Z = rng.uniform(-0.5, 0.5, size=(50, 5))
    sym = np.column_stack([np.broadcast_to(evaluate_array(coeffs[c], q.spec.coords, *Z.T), (50,)) for c in ("u_x", "u_t")])
    num = np.array([(transformed_jet("G1", "id", 1e-4, z) - transformed_jet("G1", "id", -1e-4, z))[3:] / 2e-4 for z in Z])
    worst["quasilinear"] = max(float(np.max(np.abs(sym - num))), prolongation_defect(vq, rng, 50, q.group("G1").action.box))
    ok = max(worst.values()) <= 1e-5
    record(9, ok, "max |pr1 symbolic - flow derivative| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    return ok


# ---------------------------------------------------------------------------
# 10. hyperbolic reduction


def criterion_10():
    rng = np.random.default_rng(10)
    m = parse_model(emit_model("hyperbolic-2x2"))
    A = m.system.quasilinear_matrix()
    F = characteristic_fields(A, rng=rng)
    tb = m.table
    phi, psi = characteristic_candidate(F, [tb.parse("sin(x)"), tb.parse("x^3")], arg="x")
    r1 = verify_hyperbolic_reduction(A, 0, 0, phi, psi, rng=rng)
    r2 = verify_hyperbolic_reduction(A, tb.parse("x"), tb.parse("t"), 0, 0, rng=rng)
    # numpy/sympy oracle: eigenpairs of the numeric matrix and (first) for the same candidate
    An = np.array([[1.0, 2.0], [0.5, -1.0]])
    lam, R = np.linalg.eig(An)
    order = np.argsort(lam)
    lam, R = lam[order], R[:, order]
    x, t = S.symbols("x t")
    W = sum((S.sin(x - t * lam[0]) * S.Matrix(R[:, 0]), (x - t * lam[1]) ** 3 * S.Matrix(R[:, 1])), S.zeros(2, 1))
    first = W.diff(t) + S.Matrix(An) * W.diff(x)
    fn = S.lambdify((x, t), list(first), "numpy")
    P = rng.uniform(-1, 1, size=(100, 2))
    oracle_first = float(max(np.max(np.abs(np.broadcast_to(v, (100,)))) for v in fn(P[:, 0], P[:, 1])))
    lam_lib = F.evaluate(np.zeros((1, 2)))[0][:, 0]
    ok = r1.first <= 1e-10 and r2.reduced <= 1e-10 and F.defect <= 1e-10 and oracle_first <= 1e-10 and np.allclose(lam_lib, lam, atol=1e-12)
    record(
        10,
        ok,
        f"(first) residual {r1.first:.2e}; reduced (M) residual {r2.reduced:.2e}; eigen defect {F.defect:.2e}; numpy eigenvalues {lam.round(12).tolist()}",
    )
    return ok


# ---------------------------------------------------------------------------
# pytest entry points

CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    assert CRITERIA[n](), RESULTS.get(n, (False, ""))[1]


if __name__ == "__main__":
    failed = [n for n, fn in CRITERIA.items() if not fn()]
    raise SystemExit(1 if failed else 0)
