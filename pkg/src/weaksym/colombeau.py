"""Regularized nets, mollifier embeddings and epsilon-convergence verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import (
    ONE,
    Const,
    Expr,
    ExprError,
    Function,
    Sym,
    add,
    call,
    differentiate,
    div,
    evaluate_array,
    lambdify,
    mul,
    normalize,
    placeholder,
    power,
    sub,
    substitute,
    wrap,
)
from .jet import GroupAction, JetSpec, prolong_function
from .numerics import PowerLawFit, QuadratureSpec, fit_power_law, integrate
from .table import SymbolTable

CONVERGES_TO_ZERO = "converges-to-zero"
CONVERGES_TO_NONZERO = "converges-to-nonzero"
DIVERGES = "diverges"
INCONCLUSIVE = "inconclusive"

EPS = Sym("eps")


def default_grid(j0: int = 3, j1: int = 12) -> np.ndarray:
    """eps_j = 2^-j, j = j0..j1 (strictly decreasing)."""
    return np.array([2.0**-j for j in range(j0, j1 + 1)])


# ---------------------------------------------------------------------------
# compactly supported exp-type functions h(y) = exp(E(y)) on a mask


class _CompactExp:
    """Evaluators for h = c * exp(E(y)) on {inside(y)}, 0 elsewhere, and all derivatives.

    h^(k) = h * R_k with R_0 = 1, R_{k+1} = R_k' + R_k E'.
    """

    def __init__(self, name: str, E: Expr, inside, scale: float = 1.0):
        self.name = name
        self.y = "y"
        self.E = normalize(E)
        self.dE = differentiate(self.E, self.y)
        self.inside = inside
        self.scale = scale
        self._R = [ONE]
        self._fns: dict[int, Function] = {}

    def R(self, k: int) -> Expr:
        while len(self._R) <= k:
            r = self._R[-1]
            self._R.append(add(differentiate(r, self.y), mul(r, self.dE)))
        return self._R[k]

    def numeric(self, k: int):
        expo = lambdify(self.E, (self.y,))
        rk = lambdify(self.R(k), (self.y,))
        inside, scale = self.inside, self.scale

        def ev(y):
            y = np.asarray(y, dtype=float)
            scalar = np.ndim(y) == 0
            y = np.atleast_1d(y)
            m = inside(y)
            out = np.zeros(y.shape)
            if m.any():
                ym = y[m]
                # near the edge exp(E) underflows while R_k overflows; the true value is 0
                with np.errstate(all="ignore"):
                    v = scale * np.exp(expo(ym)) * rk(ym)
                out[m] = np.where(np.isfinite(v), v, 0.0)
            return float(out[0]) if scalar else out

        return ev

    def function(self, k: int) -> Function:
        if k not in self._fns:
            nm = self.name if k == 0 else f"{self.name}_d{k}"
            self._fns[k] = Function(
                nm,
                1,
                self.numeric(k),
                [lambda k=k: call(self.function(k + 1), [placeholder(0)])],
                base=self.name,
                dindex=(k,),
            )
        return self._fns[k]


# ---------------------------------------------------------------------------
# mollifier


class Mollifier:
    """theta(y) = exp(-a / (1 - y^2)) / Z on |y| < 1, with primitive Theta.

    Theta is a cached 512-node Chebyshev interpolant of the integral of theta,
    evaluated through local Chebyshev pieces; its symbolic derivative is theta.
    """

    def __init__(self, a: float = 1.0, name: str = "theta", nodes: int = 512):
        if a <= 0:
            raise ValueError("mollifier parameter must be positive")
        self.a = float(a)
        self.name = name
        self.support = 1.0
        y = Sym("y")
        E = mul(Const(-self.a), power(sub(ONE, power(y, 2)), -1))
        inside = lambda v: np.abs(v) < 1.0  # noqa: E731
        raw = _CompactExp(name + "raw", E, inside)
        spec = QuadratureSpec(tol=1e-16, rtol=1e-15)
        self.mass_raw = integrate(raw.numeric(0), (-1.0, 1.0), spec).value
        self._fam = _CompactExp(name, E, inside, scale=1.0 / self.mass_raw)
        self.theta = self._fam.function(0)
        cheb = np.polynomial.chebyshev.Chebyshev.interpolate(self._fam.numeric(0), nodes - 1, domain=[-1, 1])
        prim = cheb.integ(lbnd=-1)
        self._prim = prim
        top = float(prim(1.0))

        # Clenshaw with 512 terms is slow on millions of nodes, and a low-order
        # table leaves derivative jumps that stall adaptive quadrature; use 64
        # local degree-24 Chebyshev pieces fitted to the global interpolant
        pieces, deg = 64, 24
        edges = np.linspace(-1.0, 1.0, pieces + 1)
        loc = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        coefs = np.empty((pieces, deg + 1))
        for k in range(pieces):
            lo_, hi_ = edges[k], edges[k + 1]
            xs = 0.5 * (lo_ + hi_) + 0.5 * (hi_ - lo_) * loc
            coefs[k] = np.polynomial.chebyshev.chebfit(loc, prim(xs), deg)
        width = edges[1] - edges[0]

        def Theta_eval(v):
            v = np.asarray(v, dtype=float)
            scalar = np.ndim(v) == 0
            v = np.atleast_1d(v)
            out = np.where(v >= 1.0, 1.0, 0.0)
            m = np.abs(v) < 1.0
            if m.any():
                vm = v[m]
                i = np.minimum(((vm + 1.0) / width).astype(np.int64), pieces - 1)
                z = 2.0 * (vm - edges[i]) / width - 1.0
                c = coefs[i]
                b1 = np.zeros_like(z)
                b2 = np.zeros_like(z)
                for j in range(deg, 0, -1):
                    b1, b2 = 2.0 * z * b1 - b2 + c[:, j], b1
                out[m] = z * b1 - b2 + c[:, 0]
            return float(out[0]) if scalar else out

        probe_pts = np.linspace(-0.999, 0.999, 3001)
        self.table_error = float(np.max(np.abs(Theta_eval(probe_pts) - prim(probe_pts))))

        self.Theta = Function(name[0].upper() + name[1:], 1, Theta_eval, [lambda: call(self.theta, [placeholder(0)])])
        self.theta_max = float(self._fam.numeric(0)(0.0))
        self.certificate = {
            "mass_error": abs(integrate(self._fam.numeric(0), (-1.0, 1.0), spec).value - 1.0),
            "Theta_top_error": abs(top - 1.0),
            "Theta_bottom": abs(float(prim(-1.0))),
            "Theta_table": self.table_error,
        }

    def register(self, table: SymbolTable) -> None:
        for fn in (self.theta, self.Theta):
            if table.function(fn.name) is None:
                table.register(fn)

    def check(self, tol: float = 1e-10) -> dict:
        c = self.certificate
        ys = np.linspace(-1, 1, 2001)
        if np.any(self._fam.numeric(0)(ys) < 0):
            raise ArithmeticError("mollifier is negative somewhere")
        if max(c.values()) > tol:
            raise ArithmeticError(f"mollifier certificate fails: {c}")
        return c


# ---------------------------------------------------------------------------
# nets


@dataclass
class GNet:
    """Representative (u_eps) of a generalized function: Exprs in (x, eps).

    ``layers`` lists shift expressions whose zero set carries an O(eps)
    transition layer (used for quadrature and sup-search refinement);
    ``layer_scale`` is the half-width of the layer in units of eps.
    """

    components: tuple
    indep: tuple = ("x",)
    box: dict = field(default_factory=dict)
    claims_bounded: bool = False
    layers: tuple = ()
    layer_scale: float = 1.0
    name: str = "u_eps"

    def __post_init__(self):
        self.components = tuple(normalize(wrap(c)) for c in self.components)
        self.indep = tuple(self.indep)
        allowed = set(self.indep) | {"eps"}
        for c in self.components:
            extra = set(c.free_symbols) - allowed
            if extra:
                raise ExprError(f"net component {c} has unexpected symbols {sorted(extra)}")

    @property
    def q(self) -> int:
        return len(self.components)

    def names(self) -> tuple:
        return self.indep + ("eps",)

    def derivative(self, alpha: Sequence[int], component: int = 0) -> Expr:
        e = self.components[component]
        for i, n in enumerate(alpha):
            for _ in range(n):
                e = differentiate(e, self.indep[i])
        return e

    def evaluate(self, points, eps: float, component: int = 0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != len(self.indep) and pts.shape[0] == len(self.indep):
            pts = pts.T
        e = np.full(pts.shape[0], float(eps))
        return evaluate_array(self.components[component], self.names(), *pts.T, e)

    def with_components(self, comps, name=None) -> "GNet":
        return GNet(tuple(comps), self.indep, dict(self.box), self.claims_bounded, self.layers, self.layer_scale, name or self.name)


def embed_heaviside(m: Mollifier, shift, indep: Sequence[str] = ("x",), box=None) -> GNet:
    """y -> Theta(shift / eps)."""
    shift = normalize(wrap(shift))
    return GNet((call(m.Theta, [div(shift, EPS)]),), tuple(indep), dict(box or {}), True, (shift,), m.support, "H_eps")


def embed_delta(m: Mollifier, shift, indep: Sequence[str] = ("x",), box=None) -> GNet:
    """y -> theta(shift / eps) / eps."""
    shift = normalize(wrap(shift))
    return GNet((div(call(m.theta, [div(shift, EPS)]), EPS),), tuple(indep), dict(box or {}), False, (shift,), m.support, "delta_eps")


def shock_net(m: Mollifier, ul: float, ur: float, c: float, box=None) -> GNet:
    """u_eps(x, t) = u_l + (u_r - u_l) H_eps(x - c t)."""
    shift = sub(Sym("x"), mul(Const(_num(c)), Sym("t")))
    H = call(m.Theta, [div(shift, EPS)])
    comp = add(Const(_num(ul)), mul(Const(_num(ur) - _num(ul)), H))
    return GNet((comp,), ("x", "t"), dict(box or {}), True, (shift,), m.support, "shock")


def _num(v):
    from fractions import Fraction

    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    f = float(v)
    fr = Fraction(f).limit_denominator(10**6)
    return fr if abs(float(fr) - f) < 1e-15 else f


def apply_group(net: GNet, g: GroupAction, eta: float) -> GNet:
    """x -> Phi_eta(Xi_eta^{-1}(x), u_eps(Xi_eta^{-1}(x))), with Xi_eta^{-1} = Xi_{-eta}.

    Composition is exact at the expression level.
    """
    sp = g.spec
    if tuple(sp.indep) != tuple(net.indep) or sp.q != net.q:
        raise ExprError("group action and net live on different spaces")
    if eta == 0:
        return net.with_components(net.components)
    ev = {"eta": Const(_num(eta))}
    inv = [substitute(e, ev) for e in g.inverse_Xi()]
    back = dict(zip(sp.indep, inv))
    u_back = [substitute(c, back) for c in net.components]
    m = dict(back)
    m.update(dict(zip(sp.dep, u_back)))
    comps = [substitute(substitute(P, ev), m) for P in g.Phi]
    layers = tuple(substitute(L, back) for L in net.layers)
    out = GNet(tuple(comps), net.indep, dict(net.box), net.claims_bounded, layers, net.layer_scale, net.name + "~")
    return out


# ---------------------------------------------------------------------------
# sup search and growth exponents


def _layer_roots(shift: Expr, indep: tuple, var: int, others: dict, lo: float, hi: float, n: int = 400) -> list:
    """Zeros of shift along coordinate ``var`` (others fixed) in [lo, hi]."""
    xs = np.linspace(lo, hi, n)
    cols = []
    for k, name in enumerate(indep):
        cols.append(xs if k == var else np.full(n, others[name]))
    try:
        s = evaluate_array(shift, indep, *cols)
    except Exception:
        return []
    roots = []
    sg = np.sign(s)
    for i in np.nonzero(sg[:-1] * sg[1:] <= 0)[0]:
        a, b = xs[i], xs[i + 1]
        fa = s[i]
        if fa == 0:
            roots.append(a)
            continue
        for _ in range(60):
            mid = 0.5 * (a + b)
            c = [np.array([mid]) if k == var else np.array([others[nm]]) for k, nm in enumerate(indep)]
            fm = float(evaluate_array(shift, indep, *c)[0])
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
        roots.append(0.5 * (a + b))
    return roots


def sup_on_box(e: Expr, net: GNet, K: dict, eps: float, per_dim: int = 200) -> float:
    """sup_K |e(x, eps)| from a lattice plus local refinement.

    The lattice has ``per_dim`` points per dimension; refinement adds fine
    points (spacing eps/50) across every layer of the net and around the
    lattice maximum.
    """
    indep = net.indep
    names = indep + ("eps",)
    ev = lambda *a: evaluate_array(e, names, *a)  # noqa: E731
    axes = [np.linspace(K[v][0], K[v][1], per_dim) for v in indep]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    extra = []
    w = net.layer_scale * eps
    fine = np.linspace(-1.5 * w, 1.5 * w, 151)
    affine = _layer_funcs(net)
    if len(affine) == len(net.layers) and len(indep) <= 2:
        for root, _ in affine:
            if len(indep) == 1:
                extra.append((float(root()) + fine)[:, None])
            else:
                r = np.broadcast_to(root(axes[1]), axes[1].shape)
                col = (r[:, None] + fine[None, :]).ravel()
                extra.append(np.column_stack([col, np.repeat(axes[1], fine.size)]))
    else:
        for L in net.layers:
            if len(indep) == 1:
                for r in _layer_roots(L, indep, 0, {}, *K[indep[0]]):
                    extra.append((r + fine)[:, None])
            elif len(indep) == 2:
                for t in axes[1]:
                    for r in _layer_roots(L, indep, 0, {indep[1]: t}, *K[indep[0]]):
                        col = r + fine
                        extra.append(np.column_stack([col, np.full(col.size, t)]))
    if extra:
        pts = np.vstack([pts] + extra)
    for v_i, v in enumerate(indep):
        pts[:, v_i] = np.clip(pts[:, v_i], K[v][0], K[v][1])
    vals = np.abs(ev(*pts.T, np.full(pts.shape[0], eps)))
    best = pts[int(np.argmax(vals))]
    # zoom twice around the maximum
    h = np.array([(K[v][1] - K[v][0]) / (per_dim - 1) for v in indep])
    for _ in range(2):
        loc = [np.linspace(best[k] - h[k], best[k] + h[k], 41) for k in range(len(indep))]
        lp = np.stack([g.ravel() for g in np.meshgrid(*loc, indexing="ij")], axis=1)
        for v_i, v in enumerate(indep):
            lp[:, v_i] = np.clip(lp[:, v_i], K[v][0], K[v][1])
        lv = np.abs(ev(*lp.T, np.full(lp.shape[0], eps)))
        if lv.max() > vals.max():
            best = lp[int(np.argmax(lv))]
        vals = np.concatenate([vals, lv])
        h = h / 20
    return float(vals.max())


@dataclass
class GrowthFit:
    p: float
    stderr: float
    verdict: str
    epsilons: np.ndarray
    sups: np.ndarray
    fit: PowerLawFit


def growth_exponent(
    net: GNet, alpha: Sequence[int], K: dict, grid=None, component: int = 0, bounded_tol: float = 0.05, decay_cap: float = 4.0
) -> GrowthFit:
    """Fit sup_K |d^alpha u_eps| ~ C eps^-p.

    Verdicts: ``bounded`` (|p| <= bounded_tol), ``negligible-candidate``
    (sups vanish or decay at least like eps^decay_cap), otherwise ``moderate``.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 8:
        raise ValueError("growth fits need at least 8 grid points")
    e = net.derivative(alpha, component)
    sups = np.array([sup_on_box(e, net, K, float(eps)) for eps in grid])
    inv = 1.0 / grid
    if np.all(sups == 0):
        return GrowthFit(-math.inf, 0.0, "negligible-candidate", grid, sups, PowerLawFit(math.nan, math.nan, math.nan, defined=False))
    fit = fit_power_law(inv, sups)
    n = grid.size
    stderr = fit.residual / math.sqrt(max(n - 2, 1)) / math.sqrt(np.sum((np.log(inv) - np.log(inv).mean()) ** 2))
    if not fit.defined:
        verdict = "negligible-candidate"
    elif abs(fit.slope) <= bounded_tol:
        verdict = "bounded"
    elif fit.slope <= -decay_cap:
        verdict = "negligible-candidate"
    else:
        verdict = "moderate"
    return GrowthFit(fit.slope, stderr, verdict, grid, sups, fit)


# ---------------------------------------------------------------------------
# test functions and probe families


_BUMP = _CompactExp("bump", mul(-1, power(sub(ONE, Sym("y")), -1)), lambda s: s < 1.0)


def bump_function() -> Function:
    """b(s) = exp(-1/(1 - s)) for s < 1, else 0; psi0(x) = b(|x|^2)."""
    return _BUMP.function(0)


@dataclass
class TestFunction:
    """Compactly supported phi: an Expr in the independent variables with its support disc."""

    __test__ = False

    expr: Expr
    indep: tuple
    center: tuple
    radius: float
    label: str = "phi"

    def support_box(self) -> dict:
        return {v: (c - self.radius, c + self.radius) for v, c in zip(self.indep, self.center)}


def probe(indep: Sequence[str], center: Sequence[float], scale: float = 1.0, k: int = 0, amplitude: float = 1.0) -> TestFunction:
    """amplitude * s^k psi0((x - a)/s)."""
    indep = tuple(indep)
    r2 = add(*(power(div(sub(Sym(v), Const(_num(c))), Const(_num(scale))), 2) for v, c in zip(indep, center)))
    e = mul(Const(_num(amplitude * scale**k)), call(bump_function(), [r2]))
    return TestFunction(e, indep, tuple(float(c) for c in center), float(scale), f"probe{tuple(center)}/{scale}")


def unit_mass_probe(indep: Sequence[str], center: Sequence[float], scale: float = 1.0) -> TestFunction:
    """Base bump normalized to integral 1."""
    base = probe(indep, center, scale)
    mass = integrate_test_function(base)
    return probe(indep, center, scale, amplitude=1.0 / mass)


def integrate_test_function(phi: TestFunction) -> float:
    return _integrate_over_support(lambda *a: evaluate_array(phi.expr, phi.indep, *a), phi, (), 0.0, QuadratureSpec(tol=1e-14, rtol=1e-13))


@dataclass
class ProbeFamily:
    """Members s^k psi0((x - a)/s) for a in centers, s in scales."""

    indep: tuple
    centers: tuple
    scales: tuple = (1.0, 0.5, 0.25)
    k: int = 1

    def members(self) -> list[TestFunction]:
        return [probe(self.indep, a, s, self.k) for a in self.centers for s in self.scales]

    def __len__(self):
        return len(self.centers) * len(self.scales)


# ---------------------------------------------------------------------------
# residual curves


@dataclass
class ResidualCurve:
    epsilons: np.ndarray
    residuals: np.ndarray  # (equations, epsilons)
    slopes: list
    verdicts: list
    limits: list
    converged: bool = True
    per_probe: np.ndarray | None = None  # (probes, equations, epsilons), signed
    labels: list | None = None

    @property
    def verdict(self) -> str:
        order = [INCONCLUSIVE, DIVERGES, CONVERGES_TO_NONZERO, CONVERGES_TO_ZERO]
        if not self.converged:
            return INCONCLUSIVE
        return min(self.verdicts, key=order.index)

    @property
    def slope(self) -> float:
        vals = [s for s in self.slopes if s is not None and not math.isnan(s)]
        return min(vals) if vals else math.nan

    @property
    def limit_estimate(self):
        vals = [v for v in self.limits if v is not None]
        return vals[0] if len(vals) == 1 else (vals or None)

    def to_records(self) -> list[dict]:
        out = []
        for i in range(self.residuals.shape[0]):
            rec = {
                "equation_index": i,
                "epsilons": [float(e) for e in self.epsilons],
                "residuals": [float(r) for r in self.residuals[i]],
                "slope": _clean(self.slopes[i]),
                "verdict": self.verdicts[i],
            }
            if self.limits[i] is not None:
                rec["limit_estimate"] = float(self.limits[i])
            out.append(rec)
        return out


def _clean(v):
    if v is None or (isinstance(v, float) and (math.isnan(v) or math.isinf(v))):
        return None
    return float(v)


def classify_curve(eps, r, zero_atol: float = 1e-15) -> tuple[float | None, str, float | None]:
    """Verdict for a residual curve r(eps) on a decreasing grid.

    Rules: all |r| <= zero_atol -> exact zero. Slope of log|r| vs log eps
    is fitted on the last half of the grid; converges-to-zero iff slope >= 0.5
    and |r(eps_min)| <= 10 eps_min^0.5 max|r|; diverges iff slope <= -0.5;
    otherwise Richardson limits (first order in eps) from the two halves of
    the fit window must agree within 20%, else inconclusive.
    """
    eps = np.asarray(eps, dtype=float)
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    if np.all(a <= zero_atol):
        return None, CONVERGES_TO_ZERO, None
    h = eps.size // 2
    we, wr = eps[h:], r[h:]
    wa = np.abs(wr)
    slope = None
    if we.size >= 4 and np.all(wa > 0):
        slope = fit_power_law(we, wa).slope
    if slope is not None:
        if slope >= 0.5 and a[-1] <= 10 * eps[-1] ** 0.5 * a.max():
            return slope, CONVERGES_TO_ZERO, None
        if slope <= -0.5:
            return slope, DIVERGES, None
    lim = _richardson(we, wr)
    if lim is None:
        return slope, INCONCLUSIVE, None
    l1, l2 = lim
    if abs(l1 - l2) > 0.2 * max(abs(l2), 1e-300):
        return slope, INCONCLUSIVE, l2
    return slope, CONVERGES_TO_NONZERO, l2


def _richardson(eps, r):
    """First-order Richardson limits from the first and last pairs of the window."""
    if eps.size < 4:
        return None

    def pair(i):
        rho = eps[i] / eps[i + 1]
        return (rho * r[i + 1] - r[i]) / (rho - 1)

    n = eps.size
    first = np.mean([pair(i) for i in range(0, n // 2)])
    last = np.mean([pair(i) for i in range(n // 2, n - 1)])
    return float(first), float(last)


def residual_integrand(system, net: GNet):
    """Compiled Delta_i(x, pr u_eps(x)) as functions of (x..., eps)."""
    sp: JetSpec = system.spec
    if tuple(sp.indep) != tuple(net.indep):
        raise ExprError("system and net use different independent variables")
    jets = prolong_function(net.components, sp)
    out = []
    for e in system.equations:
        r = substitute(e, jets)
        out.append((r, lambdify(r, net.names())))
    return out


def _layer_funcs(net: GNet):
    """For each layer, x-position as a function of the remaining variables (affine shifts only)."""
    funcs = []
    x = net.indep[0]
    for L in net.layers:
        a = differentiate(L, x)
        if x in a.free_symbols or "eps" in a.free_symbols:
            continue
        a_val = normalize(a)
        if a_val == 0:
            continue
        root = div(mul(-1, substitute(L, {x: 0})), a_val)
        fn = lambdify(root, net.indep[1:])
        scale = abs(1.0 / float(a_val.value)) if isinstance(a_val, Const) else None
        funcs.append((fn, scale))
    return funcs


def _integrate_over_support(f, phi: TestFunction, layers, width: float, spec: QuadratureSpec) -> float:
    res = _integrate_support_result(f, phi, layers, width, spec)
    return res.value


def _integrate_support_result(f, phi: TestFunction, layers, width: float, spec: QuadratureSpec):
    c, rad = phi.center, phi.radius
    if len(phi.indep) == 1:
        hints = []
        for fn, _ in layers:
            x0 = float(fn())
            hints += [x0 - width, x0, x0 + width]
        return integrate(lambda x: f(x), (c[0] - rad, c[0] + rad), spec.with_(hints=tuple(hints)))
    if len(phi.indep) == 2:

        def xb(t):
            h = np.sqrt(np.maximum(rad**2 - (t - c[1]) ** 2, 0.0))
            return c[0] - h, c[0] + h

        lay = [(lambda t, fn=fn: fn(t) + 0.0 * t) for fn, _ in layers]
        return integrate(lambda x, t: f(x, t), (xb, (c[1] - rad, c[1] + rad)), spec.with_(layer_width=width), layers=lay)
    raise ExprError("integration over test functions supports p <= 2")


def _residual_values(compiled, phi_fn, phi: TestFunction, net: GNet, grid, spec: QuadratureSpec):
    layers = _layer_funcs(net)
    vals = np.zeros((len(compiled), len(grid)))
    ok = True
    for j, eps in enumerate(grid):
        width = net.layer_scale * float(eps) * max([s for _, s in layers if s] or [1.0])
        for i, (_, fn) in enumerate(compiled):

            def f(*xs, fn=fn, eps=eps):
                return fn(*xs, np.full(np.shape(xs[0]), eps)) * phi_fn(*xs)

            res = _integrate_support_result(f, phi, layers, width, spec)
            ok &= res.converged
            vals[i, j] = res.value
    return vals, ok


# absolute floor well below the exact-zero verdict threshold
RESIDUAL_QUADRATURE = QuadratureSpec(tol=1e-16, rtol=1e-9)


def weak_residual_curve(system, net: GNet, phi: TestFunction, grid=None, spec: QuadratureSpec = RESIDUAL_QUADRATURE) -> ResidualCurve:
    """r_i(eps) = integral of Delta_i(x, pr u_eps) phi dx, with a verdict per equation."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise ValueError("epsilon grid must be strictly decreasing")
    compiled = residual_integrand(system, net)
    phi_fn = lambdify(phi.expr, phi.indep)
    vals, ok = _residual_values(compiled, phi_fn, phi, net, grid, spec)
    return _curve(grid, vals, ok, signed=vals, per_probe=None)


def _curve(grid, vals, ok, signed, per_probe=None, labels=None) -> ResidualCurve:
    slopes, verdicts, limits = [], [], []
    for i in range(vals.shape[0]):
        s, v, lim = classify_curve(grid, signed[i])
        slopes.append(s)
        verdicts.append(v)
        limits.append(lim)
    return ResidualCurve(grid, vals, slopes, verdicts, limits, ok, per_probe, labels)


def strong_association_check(system, net: GNet, family: ProbeFamily, grid=None, spec: QuadratureSpec = RESIDUAL_QUADRATURE) -> ResidualCurve:
    """sup over a finite probe family of |r(eps)| per equation.

    A finite family only gives a necessary condition for k-strong association.
    Limits for non-vanishing curves come from the probe attaining the sup.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    compiled = residual_integrand(system, net)
    members = family.members()
    per = np.zeros((len(members), len(compiled), len(grid)))
    ok = True
    for m, phi in enumerate(members):
        phi_fn = lambdify(phi.expr, phi.indep)
        v, good = _residual_values(compiled, phi_fn, phi, net, grid, spec)
        per[m] = v
        ok &= good
    sup = np.abs(per).max(axis=0)
    slopes, verdicts, limits = [], [], []
    for i in range(len(compiled)):
        s, v, lim = classify_curve(grid, sup[i])
        if v in (CONVERGES_TO_NONZERO, INCONCLUSIVE):
            worst = int(np.argmax(np.abs(per[:, i, -1])))
            _, v2, lim = classify_curve(grid, per[worst, i])
            if v2 in (CONVERGES_TO_NONZERO, INCONCLUSIVE):
                v = v2
        slopes.append(s)
        verdicts.append(v)
        limits.append(lim)
    return ResidualCurve(grid, sup, slopes, verdicts, limits, ok, per, [phi.label for phi in members])


def pair_association_curve(net1: GNet, net2: GNet, phi: TestFunction, grid=None, spec: QuadratureSpec = RESIDUAL_QUADRATURE) -> ResidualCurve:
    """Association of two nets through the auxiliary system Delta = u1 - u2."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    diff = [sub(a, b) for a, b in zip(net1.components, net2.components)]
    f = [lambdify(d, net1.names()) for d in diff]
    phi_fn = lambdify(phi.expr, phi.indep)
    merged = GNet(tuple(diff), net1.indep, net1.box, False, net1.layers + net2.layers, max(net1.layer_scale, net2.layer_scale))
    vals, ok = _residual_values([(d, fn) for d, fn in zip(diff, f)], phi_fn, phi, merged, grid, spec)
    return _curve(grid, vals, ok, vals)


def riemann_limit_oracle(phi: TestFunction, ul: float, ur: float, c: float, flux=lambda u: 0.5 * u * u) -> float:
    """Line integral [flux(u_r) - flux(u_l) - c (u_r - u_l)] * integral phi(c t, t) dt.

    This is the eps -> 0 limit of the weak residual of u_t + flux(u)_x for
    the mollified shock; it vanishes exactly under the Rankine-Hugoniot
    condition.
    """
    fn = lambdify(phi.expr, phi.indep)
    cx, ct = phi.center
    rad = phi.radius
    # the support disc meets the line x = c t for t in an interval we bracket generously
    lo, hi = ct - 2 * rad - abs(cx - c * ct), ct + 2 * rad + abs(cx - c * ct)
    line = integrate(lambda t: fn(c * t, t), (lo, hi), QuadratureSpec(tol=1e-15, rtol=1e-14, max_panels=2**16))
    jump = (flux(ur) - flux(ul)) - c * (ur - ul)
    return jump * line.value


__all__ = [
    "CONVERGES_TO_NONZERO",
    "CONVERGES_TO_ZERO",
    "DIVERGES",
    "EPS",
    "GNet",
    "GrowthFit",
    "INCONCLUSIVE",
    "Mollifier",
    "ProbeFamily",
    "ResidualCurve",
    "TestFunction",
    "apply_group",
    "bump_function",
    "classify_curve",
    "default_grid",
    "embed_delta",
    "embed_heaviside",
    "growth_exponent",
    "integrate_test_function",
    "pair_association_curve",
    "probe",
    "riemann_limit_oracle",
    "shock_net",
    "strong_association_check",
    "sup_on_box",
    "unit_mass_probe",
    "weak_residual_curve",
]
