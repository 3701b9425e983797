"""Generic pipelines run on a parsed model: factor, determining, verify, associate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colombeau import (
    CONVERGES_TO_NONZERO,
    CONVERGES_TO_ZERO,
    DIVERGES,
    INCONCLUSIVE as V_INCONCLUSIVE,
    growth_exponent,
    strong_association_check,
)
from .expr import DomainError, ExprError, is_zero, render
from .factorization import (
    ETA_X,
    FactorizationError,
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
    quasilinear_determining_system,
    sample_action_domain,
    verify_factorization,
)
from .jet import numeric_prolonged_generator, prolong_group_action, prolong_vector_field, vector_field_from_action
from .model import Model, grid_from
from .report import FAIL, INCONCLUSIVE, PASS, Check, status_of
from .system import LINEAR

TASKS = ("factor", "determining", "verify", "associate")
_EXPECT = {"zero": CONVERGES_TO_ZERO, "nonzero": CONVERGES_TO_NONZERO, "diverges": DIVERGES}


@dataclass
class Tolerances:
    factor: float = 1e-8
    determining: float = 1e-10
    bridge: float = 1e-6
    cocycle: float = 1e-8
    prolongation: float = 1e-5
    association_slope: float = 0.8
    samples: int = 200
    determining_samples: int = 100
    bridge_samples: int = 20
    prolongation_samples: int = 50


def run_tasks(model: Model, tasks, seed: int = 42, tol: Tolerances | None = None, cache: dict | None = None) -> list:
    """Run the named tasks in canonical order; ``cache`` collects association curves by net name."""
    tol = tol or Tolerances()
    cache = cache if cache is not None else {}
    checks = []
    for t in tasks:
        if t not in TASKS:
            raise ValueError(f"unknown task {t!r}; choose from {', '.join(TASKS)}")
    # each task gets its own stream so the task subset does not change results
    for i, t in enumerate(TASKS):
        if t in tasks:
            rng = np.random.default_rng([seed, i])
            checks.extend(_RUNNERS[t](model, rng, tol, cache))
    return checks


def _need_system(model: Model, task: str):
    if model.system is None:
        raise FactorizationError(f"task {task!r} needs a [system] section")
    return model.system


# ---------------------------------------------------------------------------


def factor_task(model: Model, rng, tol: Tolerances, cache: dict | None = None) -> list:
    sys = _need_system(model, "factor")
    out = []
    for gd in model.groups:
        g = gd.action
        name = f"factor:{gd.name}"
        try:
            Q = compute_factor_Q(sys, g)
            rep = verify_factorization(sys, g, Q, tol.samples, rng=rng, tol=tol.factor)
            ident = Q.check_identity(rng, tol=1e-10)
        except (FactorizationError, DomainError, ExprError) as exc:
            out.append(Check(name, FAIL, details={"error": str(exc)}))
            continue
        out.append(
            Check(
                name,
                status_of(rep.passed),
                max_residual=max(rep.max_residual, rep.functional_residual or 0.0),
                expression=Q.rendered() or None,
                details={
                    "method": Q.method,
                    "dependence": Q.dependence,
                    "pointwise_residual": rep.max_residual,
                    "functional_residual": rep.functional_residual,
                    "resampled": rep.resampled,
                    "identity_at_zero": ident,
                },
            )
        )
        pa = prolong_group_action(g, sys.spec)
        eta, Z, _, _ = sample_action_domain(pa, rng, tol.samples, g.eta_range, g.box)
        if gd.factor is not None:
            Qc = closed_form_factor(sys, gd.factor, g.box, "Q_closed")
            with np.errstate(all="ignore"):
                diff = np.abs(Q.evaluate(eta, Z) - Qc.evaluate(eta, Z))
            d = float(np.nanmax(diff)) if np.isfinite(diff).any() else float("inf")
            out.append(Check(f"{name}:closed-form", status_of(d <= tol.factor and np.all(np.isfinite(diff))), max_residual=d, expression=Qc.rendered()))
        if sys.is_quasilinear and g.linear:
            Qg = compute_factor_Q(sys, g, tau_rule="gauss")
            Ql = quasilinear_closed_form_factor(sys, g)
            d = float(np.max(np.abs(Qg.evaluate(eta[:100], Z[:100]) - Ql.evaluate(eta[:100], Z[:100]))))
            out.append(
                Check(
                    f"{name}:quasilinear-formula",
                    status_of(d <= tol.factor),
                    max_residual=d,
                    expression=Ql.rendered(),
                    details={"dependence": Qg.dependence},
                )
            )
        if sys.classification == LINEAR and g.linear:
            out.append(Check(f"{name}:eta-x-only", status_of(Q.dependence == ETA_X), details={"dependence": Q.dependence}))
    return out


def determining_task(model: Model, rng, tol: Tolerances, cache: dict | None = None) -> list:
    sys = _need_system(model, "determining")
    if model.ansatz is None:
        return [Check("determining", FAIL, details={"error": "no [ansatz] section"})]
    out = []
    try:
        conds = determining_equations(sys, model.ansatz)
    except FactorizationError as exc:
        return [Check("determining", FAIL, details={"error": str(exc)})]
    out.append(Check("determining", PASS, expression=[f"{c.label()}: {render(c.expr)} = 0" for c in conds], details={"conditions": len(conds)}))
    if sys.is_quasilinear:
        ok, worst = matches_matrix_form(sys, model.ansatz, conds)
        out.append(Check("determining:matrix-form", status_of(ok), details={"unmatched": worst}))
    names = sys.spec.indep + sys.spec.dep
    box = dict(model.groups[0].action.box) if model.groups else {}
    for gd in model.generators:
        try:
            fns = model.specialization(gd)
        except ExprError as exc:
            out.append(Check(f"determining:{gd.name}", FAIL, details={"error": str(exc)}))
            continue
        r = check_conditions(conds, names, rng, tol.determining_samples, box=_jet_box(box, names), functions=fns)
        out.append(Check(f"determining:{gd.name}", status_of(r <= tol.determining), max_residual=r))
    return out


def _jet_box(box: dict, names) -> dict:
    return {n: box.get(n, (-2.0, 2.0)) for n in names}


def matches_matrix_form(sys, ansatz, conds) -> tuple[bool, list]:
    """Monomial conditions versus the two matrix equations, entry by entry."""
    sp = sys.spec
    first, second = quasilinear_determining_system(sys, ansatz)
    want = {}
    for i in range(sys.s):
        want[(i, ())] = first[i]
        for b in range(sp.q):
            want[(i, ((sp.jet_name(b, (0,)), 1),))] = second[i][b]
    got = {(c.equation, c.monomial): c.expr for c in conds}
    bad = []
    for key in set(want) | set(got):
        a = want.get(key)
        b = got.get(key)
        diff = (a if a is not None else 0) - (b if b is not None else 0) if (a is not None or b is not None) else 0
        try:
            ok = is_zero(diff)
        except (DomainError, ExprError):
            ok = False
        if not ok:
            bad.append(f"eq{key[0]}{list(key[1])}")
    return not bad, sorted(bad)


def verify_task(model: Model, rng, tol: Tolerances, cache: dict | None = None) -> list:
    sys = _need_system(model, "verify")
    sp = sys.spec
    out = []
    try:
        sf = build_solved_form(sys)
        err = sf.round_trip(rng, 50, 1e-9)
        out.append(Check("solved-form", PASS, max_residual=err, expression=render(sf.det), details={"closed_form": sf.closed_form}))
    except (FactorizationError, DomainError) as exc:
        out.append(Check("solved-form", FAIL, details={"error": str(exc)}))
        sf = None
    K = {x: (-1.0, 1.0) for x in sp.indep}
    ga = check_growth_a3(sys, K, rng=rng)
    out.append(
        Check(
            "growth-a3",
            status_of(not ga.violated),
            details={"C": ga.C, "r": ga.r, "constant_determinant": ga.constant, "witness": ga.witness},
        )
    )
    if sf is not None:
        hits = injectivity_spot_check(sf, rng)
        out.append(Check("injectivity-spot-check", status_of(hits == 0), details={"pairs": 10000, "collisions": hits}))
    groups = {gd.name: gd for gd in model.groups}
    for gd in model.generators:
        v = gd.field
        name = f"infinitesimal:{gd.name}"
        try:
            Qt = infinitesimal_factor(sys, v, rng)
        except NotASymmetryError as exc:
            out.append(Check(name, FAIL, details={"error": str(exc), "witness": exc.witness}))
            continue
        except FactorizationError as exc:
            out.append(Check(name, FAIL, details={"error": str(exc)}))
            continue
        rec = Check(name, PASS, expression=Qt.rendered(), details={"dependence": Qt.dependence})
        if gd.factor is not None:
            want = closed_form_factor(sys, gd.factor)
            Z = rng.uniform(-1, 1, size=(tol.determining_samples, sp.N))
            d = float(np.max(np.abs(Qt.evaluate(0.0, Z) - want.evaluate(0.0, Z))))
            rec.max_residual = d
            rec.status = status_of(d <= tol.determining)
        out.append(rec)
        if gd.group and gd.group in groups:
            out.extend(_bridge_checks(sys, groups[gd.group], gd, Qt, rng, tol))
    if sp.order == 1:
        fields = [(gd.name, gd.field) for gd in model.generators]
        fields += [(gd.name, vector_field_from_action(gd.action, gd.name)) for gd in model.groups]
        boxes = {gd.name: gd.action.box for gd in model.groups}
        for gd in model.generators:
            if gd.group in boxes:
                boxes[gd.name] = boxes[gd.group]
        for name, v in fields:
            d = prolongation_defect(v, rng, tol.prolongation_samples, boxes.get(name, {}))
            out.append(Check(f"prolongation:{name}", status_of(d <= tol.prolongation), max_residual=d))
    return out


def prolongation_defect(v, rng, samples: int, box: dict) -> float:
    """Symbolic pr^1 coefficients against eta-differentiation of the numeric flow."""
    sp = v.spec
    lo = np.array([box.get(c, (-1.0, 1.0))[0] for c in sp.coords])
    hi = np.array([box.get(c, (-1.0, 1.0))[1] for c in sp.coords])
    Z = rng.uniform(0.5 * lo, 0.5 * hi, size=(samples, sp.N))
    coeffs = prolong_vector_field(v, sp)
    first = [sp.jet_name(a, (j,)) for a in range(sp.q) for j in range(sp.p)]
    from .expr import evaluate_array

    sym = np.column_stack([np.broadcast_to(evaluate_array(coeffs[c], sp.coords, *Z.T), (samples,)) for c in first])
    num = numeric_prolonged_generator(v, Z)
    return float(np.max(np.abs(sym - num)))


def _bridge_checks(sys, gd, gen, Qt, rng, tol: Tolerances) -> list:
    g = gd.action
    pa = prolong_group_action(g, sys.spec)
    out = []
    try:
        Q = compute_factor_Q(sys, g)
        eta, Z, _, _ = sample_action_domain(pa, rng, tol.bridge_samples, g.eta_range, g.box)
        worst = 0.0
        for e, z in zip(eta, Z):
            P = principal_matrix_from_Qtilde(Qt, g, z, float(e), pa=pa)
            worst = max(worst, float(np.max(np.abs(P - Q.evaluate(e, z[None, :])[0]))))
        out.append(Check(f"ode-bridge:{gen.name}", status_of(worst <= tol.bridge), max_residual=worst))
        h = 0.5 * max(abs(g.eta_range[0]), abs(g.eta_range[1]))
        e1 = rng.uniform(-h, h, size=tol.bridge_samples)
        e2 = rng.uniform(-h, h, size=tol.bridge_samples)
        worst = 0.0
        for a, b, z in zip(e1, e2, Z):
            worst = max(worst, cocycle_defect(Q, g, float(a), float(b), z[None, :], pa))
        out.append(Check(f"cocycle:{gd.name}", status_of(worst <= tol.cocycle), max_residual=worst))
    except (DomainError, FactorizationError, ArithmeticError) as exc:
        out.append(Check(f"ode-bridge:{gen.name}", FAIL, details={"error": str(exc)}))
    return out


def associate_task(model: Model, rng, tol: Tolerances, cache: dict | None = None) -> list:
    out = []
    grid = grid_from(model.scenario)
    for nd in model.nets:
        sys = nd.system or model.system
        name = f"associate:{nd.name}"
        if nd.family is None:
            pass  # growth-only net
        elif sys is None:
            out.append(Check(name, FAIL, details={"error": "no relation to test"}))
        else:
            cur = strong_association_check(sys, nd.net, nd.family, grid)
            if cache is not None:
                cache[nd.name] = cur
            out.append(curve_check(name, cur, _EXPECT[nd.expect], tol.association_slope))
        K = nd.net.box or {x: (-1.0, 1.0) for x in nd.net.indep}
        for alpha, p, ptol in nd.growth:
            fit = growth_exponent(nd.net, alpha, K, grid)
            label = "".join(map(str, alpha))
            out.append(
                Check(
                    f"growth:{nd.name}:{label}",
                    status_of(abs(fit.p - p) <= ptol),
                    slope=fit.p,
                    details={"expected": p, "tolerance": ptol, "verdict": fit.verdict, "sups": fit.sups.tolist()},
                )
            )
    return out


def curve_check(name: str, cur, expected: str, min_slope: float) -> Check:
    """pass iff the curve verdict matches; a converging curve also needs slope >= min_slope."""
    v = cur.verdict
    if v == V_INCONCLUSIVE:
        status = INCONCLUSIVE
    else:
        ok = v == expected
        exact = bool(np.all(np.abs(cur.residuals) <= 1e-15))
        if ok and expected == CONVERGES_TO_ZERO and not exact:
            ok = cur.slope >= min_slope
        if ok and expected == DIVERGES:
            ok = cur.slope <= -min_slope
        status = status_of(ok)
    lim = [l for l in cur.limits if l is not None]
    return Check(
        name,
        status,
        slope=cur.slope,
        residuals=cur.residuals.tolist(),
        epsilons=cur.epsilons.tolist(),
        limit_estimate=lim[0] if lim else None,
        details={"verdict": v, "expected": expected, "converged": bool(cur.converged)},
    )


_RUNNERS = {"factor": factor_task, "determining": determining_task, "verify": verify_task, "associate": associate_task}

__all__ = ["TASKS", "Tolerances", "associate_task", "curve_check", "determining_task", "factor_task", "matches_matrix_form", "prolongation_defect", "run_tasks", "verify_task"]
