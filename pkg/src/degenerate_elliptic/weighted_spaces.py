"""Weighted Sobolev norms, the weighted bilinear form and related checks.

Integrals are computed with tensor-product composite Gauss rules. Along an
axis whose weight carries a power singularity ``(x - lo)^p`` at the lower end
the first panel is graded geometrically (ratio 1/2) and its bottom piece uses
Gauss-Jacobi nodes that absorb the power, so ``p > -1`` of either sign is
integrated without loss of accuracy.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import InputError, NumericError
from .operators import HestonParams, OperatorSpec, as_points, make_heston

# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightSpec:
    """Weight ``w`` and degeneracy coefficient ``theta`` with log-gradient.

    ``singular_power`` is the exponent of ``x_d`` in ``w`` at ``x_d = 0``
    (``None`` when ``w`` is smooth); ``kink_axes`` lists axes on which ``w``
    has a ``|x_k|`` kink at 0.
    """

    family: str
    dim: int
    w: Callable
    theta: Callable
    log_w_grad: Callable
    params: dict = field(default_factory=dict)
    singular_power: Optional[float] = None
    kink_axes: tuple = ()


def heston_weight(beta: float, gamma: float = 0.0, mu: float = 1.0, dim: int = 2) -> WeightSpec:
    """``w = y^(beta-1) exp(-gamma |x| - mu y)``, ``theta = y`` with ``y = x_d``.

    In one dimension the ``|x|`` factor is dropped.
    """
    if beta <= 0 or mu <= 0 or gamma < 0:
        raise InputError("heston weight needs beta > 0, mu > 0, gamma >= 0")
    if dim not in (1, 2):
        raise InputError("heston weight is defined for dim 1 or 2")

    def w(x):
        y = x[:, -1]
        out = y ** (beta - 1.0) * np.exp(-mu * y)
        if dim == 2:
            out = out * np.exp(-gamma * np.abs(x[:, 0]))
        return out

    def theta(x):
        return x[:, -1].copy()

    def lg(x):
        g = np.zeros_like(x, dtype=float)
        g[:, -1] = (beta - 1.0) / x[:, -1] - mu
        if dim == 2:
            g[:, 0] = -gamma * np.sign(x[:, 0])
        return g

    kinks = (0,) if (dim == 2 and gamma > 0) else ()
    return WeightSpec("heston", dim, w, theta, lg, {"beta": beta, "gamma": gamma, "mu": mu},
                      beta - 1.0, kinks)


def power_weight(s: float, xi: float = 1.0, dim: int = 2) -> WeightSpec:
    """``w = x_d^s``, ``theta = x_d``; ``xi`` is carried for the Sobolev probe."""
    if s <= -1:
        raise InputError("power weight needs s > -1 to be locally integrable")

    def w(x):
        return x[:, -1] ** s

    def theta(x):
        return x[:, -1].copy()

    def lg(x):
        g = np.zeros_like(x, dtype=float)
        g[:, -1] = s / x[:, -1]
        return g

    return WeightSpec("power", dim, w, theta, lg, {"s": s, "xi": xi}, float(s) if s != 0 else None)


def unit_weight(dim: int = 2) -> WeightSpec:
    one = lambda x: np.ones(x.shape[0])
    return WeightSpec("unit", dim, one, one, lambda x: np.zeros_like(x, dtype=float), {})


def heston_normalized(p: HestonParams) -> HestonParams:
    """Shift ``q`` so that ``r - q - rho kappa theta / sigma = 0``."""
    q = p.r - p.rho * p.kappa * p.theta / p.sigma
    return replace(p, q=q)


def heston_bilinear_setup(p: HestonParams, gamma: float = 0.0):
    """Normalized Heston operator with its natural weight.

    Returns ``(op, ws, raw, normalized)``; both parameter sets are kept in
    ``op.metadata``.
    """
    pn = heston_normalized(p)
    op = make_heston(pn)
    op.metadata["raw_params"] = p
    op.metadata["normalized_params"] = pn
    return op, heston_weight(p.beta, gamma, p.mu, 2), p, pn


# ---------------------------------------------------------------------------
# quadrature


def _gl_panel(a, b, order):
    t, wt = roots_legendre(order)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * wt


def _jacobi_panel(a, b, order, power):
    # int_a^b (y-a)^p g(y) dy = ((b-a)/2)^(p+1) int_{-1}^{1} (1+t)^p g dt
    t, wt = roots_jacobi(order, 0.0, power)
    y = 0.5 * (b - a) * (1.0 + t) + a
    h = 0.5 * (b - a)
    # rule for the full integrand F = (y-a)^p g: divide the absorbed power back out
    return y, wt * h ** (power + 1.0) / (y - a) ** power


def axis_rule(lo: float, hi: float, panels: int = 8, order: int = 12, singular_power: Optional[float] = None,
              breaks: Sequence[float] = (), levels: int = 20):
    """Composite Gauss rule on ``[lo, hi]`` as ``(nodes, weights)``.

    With ``singular_power`` the first of ``panels`` uniform panels is split
    geometrically toward ``lo`` over ``levels`` levels with a Gauss-Jacobi
    bottom piece.
    """
    if not hi > lo:
        raise InputError("axis rule needs hi > lo")
    edges = list(np.linspace(lo, hi, panels + 1))
    for b in breaks:
        if lo < b < hi and not np.any(np.isclose(edges, b, rtol=0, atol=1e-14 * (hi - lo))):
            edges.append(b)
    edges = np.sort(np.asarray(edges))
    nodes, weights = [], []
    for k in range(edges.size - 1):
        a, b = edges[k], edges[k + 1]
        if k == 0 and singular_power is not None:
            hgt = b - a
            g = [a + hgt * 0.5 ** j for j in range(levels + 1)]
            y, wt = _jacobi_panel(a, g[-1], order, singular_power)
            nodes.append(y)
            weights.append(wt)
            for j in range(levels):
                y, wt = _gl_panel(g[j + 1], g[j], order)
                nodes.append(y)
                weights.append(wt)
        else:
            y, wt = _gl_panel(a, b, order)
            nodes.append(y)
            weights.append(wt)
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    idx = np.argsort(x, kind="stable")
    return x[idx], w[idx]


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    bounds: tuple
    panels: tuple
    order: int
    singular_power: Optional[float] = None
    breaks: tuple = ()
    levels: int = 20

    @classmethod
    def build(cls, bounds, panels=8, order=12, singular_power=None, breaks=(), levels=20):
        """Tensor rule on the box ``bounds``; the singular end is ``x_d = bounds[-1][0]``.

        ``breaks`` is a per-axis tuple of interior break points.
        """
        bounds = tuple((float(a), float(b)) for a, b in bounds)
        d = len(bounds)
        if isinstance(panels, int):
            panels = (panels,) * d
        breaks = tuple(breaks) if breaks else ((),) * d
        rules = []
        for k, (a, b) in enumerate(bounds):
            sp = singular_power if k == d - 1 else None
            rules.append(axis_rule(a, b, panels[k], order, sp, breaks[k], levels))
        grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        return cls(nodes, weights, bounds, tuple(panels), order, singular_power, breaks, levels)

    @classmethod
    def for_weight(cls, bounds, ws: WeightSpec, panels=8, order=12, extra_power: float = 0.0, levels=20):
        """Rule adapted to ``ws`` (singular end, kinks) on a box with ``x_d >= 0``."""
        d = len(bounds)
        sp = None
        if ws.singular_power is not None and abs(bounds[-1][0]) < 1e-300:
            sp = ws.singular_power + extra_power
        brk = [() for _ in range(d)]
        for ax in ws.kink_axes:
            brk[ax] = (0.0,)
        return cls.build(bounds, panels, order, sp, tuple(brk), levels)

    def refined(self) -> "QuadratureRule":
        return QuadratureRule.build(self.bounds, tuple(2 * p for p in self.panels), self.order,
                                    self.singular_power, self.breaks, self.levels)

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise NumericError("non-finite integrand samples")
        return float(np.dot(self.weights, values))


# ---------------------------------------------------------------------------
# smooth test functions


@dataclass(frozen=True)
class SmoothField:
    """Scalar field with analytic gradient and Hessian on ``(n, d)`` points."""

    value: Callable
    grad: Callable
    hess: Callable
    support: Optional[tuple] = None

    def scaled(self, c: float) -> "SmoothField":
        return SmoothField(lambda x: c * self.value(x), lambda x: c * self.grad(x),
                           lambda x: c * self.hess(x), self.support)

    def __add__(self, other: "SmoothField") -> "SmoothField":
        sup = None
        if self.support is not None and other.support is not None:
            sup = tuple((min(a[0], b[0]), max(a[1], b[1])) for a, b in zip(self.support, other.support))
        return SmoothField(lambda x: self.value(x) + other.value(x), lambda x: self.grad(x) + other.grad(x),
                           lambda x: self.hess(x) + other.hess(x), sup)


def bump(center, radius: float, amplitude: float = 1.0) -> SmoothField:
    """``amplitude * exp(-1 / (1 - |x - c|^2 / rho^2))`` inside the ball, 0 outside."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def parts(x):
        z = x - c[None, :]
        s = np.sum(z * z, axis=1) / r2
        inside = s < 1.0
        om = np.where(inside, 1.0 - s, 1.0)
        phi = np.where(inside, amplitude * np.exp(-1.0 / om), 0.0)
        d1 = -phi / om ** 2
        d2 = phi / om ** 4 - 2.0 * phi / om ** 3
        return z, phi, d1, d2

    def value(x):
        return parts(x)[1]

    def grad(x):
        z, _, d1, _ = parts(x)
        return (d1 * 2.0 / r2)[:, None] * z

    def hess(x):
        z, _, d1, d2 = parts(x)
        ds = 2.0 * z / r2
        eye = np.eye(x.shape[1])[None, :, :]
        return d2[:, None, None] * ds[:, :, None] * ds[:, None, :] + (d1 * 2.0 / r2)[:, None, None] * eye

    sup = tuple((ci - radius, ci + radius) for ci in c)
    return SmoothField(value, grad, hess, sup)


def trig_field(k, phase, amplitude: float = 1.0, offset: float = 0.0) -> SmoothField:
    """``offset + amplitude * cos(<k, x> + phase)``; smooth on the whole box."""
    k = np.asarray(k, dtype=float)

    def value(x):
        return offset + amplitude * np.cos(x @ k + phase)

    def grad(x):
        return (-amplitude * np.sin(x @ k + phase))[:, None] * k[None, :]

    def hess(x):
        return (-amplitude * np.cos(x @ k + phase))[:, None, None] * np.outer(k, k)[None, :, :]

    return SmoothField(value, grad, hess)


def random_bump(rng: np.random.Generator, box, radius_range=(0.2, 0.5), touch_axis: Optional[int] = None) -> SmoothField:
    """Random bump inside ``box``; with ``touch_axis`` the center may sit below the lower end.

    The support then crosses the face ``x_axis = box[axis][0]`` (a degenerate
    face), while staying away from every other face.
    """
    d = len(box)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    rho = rng.uniform(*radius_range) * float(np.min(hi - lo)) / 2.0
    c = np.empty(d)
    for k in range(d):
        if touch_axis is not None and k == touch_axis:
            c[k] = lo[k] + rng.uniform(-0.5, 1.5) * rho
        else:
            c[k] = rng.uniform(lo[k] + rho * 1.05, hi[k] - rho * 1.05)
    return bump(c, rho, rng.uniform(0.5, 2.0))


def _support_box(fld: SmoothField, bounds):
    if fld.support is None:
        return tuple(bounds)
    return tuple((max(a, s0), min(b, s1)) for (a, b), (s0, s1) in zip(bounds, fld.support))


# ---------------------------------------------------------------------------
# norms


def _maybe_two_level(fn, quad, estimate_error):
    val = fn(quad)
    if not estimate_error:
        return val
    fine = fn(quad.refined())
    return fine, abs(fine - val)


def norm_L2w(u, ws: WeightSpec, quad: QuadratureRule, estimate_error: bool = False):
    """``(int |u|^2 w)^(1/2)``; with ``estimate_error`` returns ``(value, |coarse - fine|)``."""

    def fn(q):
        x = q.nodes
        return math.sqrt(max(q.integrate(np.abs(u(x)) ** 2 * ws.w(x)), 0.0))

    return _maybe_two_level(fn, quad, estimate_error)


def norm_H1w(u, du, ws: WeightSpec, quad: QuadratureRule, estimate_error: bool = False):
    """``(int (theta |Du|^2 + (1 + theta) |u|^2) w)^(1/2)``."""

    def fn(q):
        x = q.nodes
        th = ws.theta(x)
        g = du(x)
        val = (th * np.sum(g * g, axis=1) + (1.0 + th) * np.abs(u(x)) ** 2) * ws.w(x)
        return math.sqrt(max(q.integrate(val), 0.0))

    return _maybe_two_level(fn, quad, estimate_error)


def norm_H2w(u, du, d2u, ws: WeightSpec, quad: QuadratureRule, estimate_error: bool = False):
    """``(int (theta^2 |D^2u|^2 + (1 + theta^2)(|Du|^2 + |u|^2)) w)^(1/2)``."""

    def fn(q):
        x = q.nodes
        th = ws.theta(x)
        g = du(x)
        hs = d2u(x)
        val = (th ** 2 * np.sum(hs * hs, axis=(1, 2))
               + (1.0 + th ** 2) * (np.sum(g * g, axis=1) + np.abs(u(x)) ** 2)) * ws.w(x)
        return math.sqrt(max(q.integrate(val), 0.0))

    return _maybe_two_level(fn, quad, estimate_error)


# ---------------------------------------------------------------------------
# divergence form


@dataclass(frozen=True)
class DivergenceCoefficients:
    """Bilinear-map coefficients ``(b, c, d)`` and their non-divergence images."""

    b: Callable
    c: Callable
    d: Callable
    b_tilde: Callable
    c_tilde: Callable
    approximate: bool = False


def nondivergence_from_bilinear(a, da, b, c, d, dd, ws: WeightSpec):
    """Map bilinear coefficients to the drift/zeroth order of the equivalent operator.

    ``b_tilde = b + div_row(a) + d + a grad(log w)`` and
    ``c_tilde = c - div(d) - <grad(log w), d>``. The ``d`` term in
    ``b_tilde`` comes from integrating ``d^j u v_j`` by parts.
    """

    def b_tilde(x):
        return b(x) + da(x) + d(x) + np.einsum("nij,nj->ni", a(x), ws.log_w_grad(x))

    def c_tilde(x):
        return c(x) - dd(x) - np.einsum("nj,nj->n", ws.log_w_grad(x), d(x))

    return b_tilde, c_tilde


def divergence_coefficients(op: OperatorSpec, ws: WeightSpec) -> DivergenceCoefficients:
    """Coefficients of the weighted bilinear map whose operator is ``op``.

    ``op`` carries the non-divergence drift ``b_tilde`` and zeroth order
    ``c_tilde``; the returned ``b``/``c`` invert the map of
    :func:`nondivergence_from_bilinear`.
    """
    if ws.dim != op.dim:
        raise InputError("weight and operator dimensions differ")

    def b(x):
        return op.eval_b(x) - op.eval_da(x) - op.eval_d(x) - np.einsum("nij,nj->ni", op.eval_a(x), ws.log_w_grad(x))

    def c(x):
        return op.eval_c(x) + op.eval_dd(x) + np.einsum("nj,nj->n", ws.log_w_grad(x), op.eval_d(x))

    bt, ct = nondivergence_from_bilinear(op.eval_a, op.eval_da, b, c, op.eval_d, op.eval_dd, ws)
    return DivergenceCoefficients(b, c, op.eval_d, bt, ct, bool(op.metadata.get("da_approximate", False)))


def bilinear_form(op: OperatorSpec, ws: WeightSpec, u: SmoothField, v: SmoothField, quad: QuadratureRule,
                  coeffs: Optional[DivergenceCoefficients] = None) -> float:
    """``int (a^{ij} u_i v_j + d^j u v_j - b^i u_i v + c u v) w dx``."""
    coeffs = coeffs or divergence_coefficients(op, ws)
    x = quad.nodes
    uu, vv = u.value(x), v.value(x)
    du, dv = u.grad(x), v.grad(x)
    a = op.eval_a(x)
    val = (np.einsum("ni,nij,nj->n", du, a, dv) + np.einsum("nj,nj->n", coeffs.d(x), dv) * uu
           - np.einsum("ni,ni->n", coeffs.b(x), du) * vv + coeffs.c(x) * uu * vv) * ws.w(x)
    return quad.integrate(val)


def operator_inner(op: OperatorSpec, ws: WeightSpec, u: SmoothField, v: SmoothField, quad: QuadratureRule) -> float:
    """``(Au, v)`` in ``L^2(w)``."""
    x = quad.nodes
    au = op.apply(x, u.value(x), u.grad(x), u.hess(x))
    return quad.integrate(au * v.value(x) * ws.w(x))


def ibp_discrepancy(op, ws, u, v, quad) -> float:
    lhs = bilinear_form(op, ws, u, v, quad)
    rhs = operator_inner(op, ws, u, v, quad)
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)


@dataclass
class EnsembleReport:
    name: str
    rows: list
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.rows:
            keys = list(self.rows[0].keys())
            w.writerow(keys)
            for r in self.rows:
                w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
        return buf.getvalue()


def verify_ibp(op: OperatorSpec, ws: WeightSpec, bounds, trials: int = 20, seed: int = 0, panels: int = 8,
               order: int = 16, degenerate_axis: Optional[int] = None) -> EnsembleReport:
    """Max relative discrepancy of ``a(u, v) = (Au, v)_w`` over random pairs.

    ``u`` is a smooth trigonometric field on the whole box; ``v`` is a bump
    vanishing near every face except, when ``degenerate_axis`` is given, the
    lower face of that axis. Integration runs over the support of ``v``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    span = np.array([b - a for a, b in bounds])
    for t in range(trials):
        k = rng.normal(size=len(bounds)) * (2.0 / span)
        u = trig_field(k, rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 1.5), rng.uniform(-1, 1))
        v = random_bump(rng, bounds, touch_axis=degenerate_axis)
        box = _support_box(v, bounds)
        quad = QuadratureRule.for_weight(box, ws, panels, order)
        lhs = bilinear_form(op, ws, u, v, quad)
        rhs = operator_inner(op, ws, u, v, quad)
        rel = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)
        rows.append({"trial": t, "bilinear": lhs, "inner": rhs, "discrepancy": rel})
    worst = max(r["discrepancy"] for r in rows) if rows else 0.0
    return EnsembleReport("ibp", rows, {"max_discrepancy": worst, "trials": trials, "seed": seed})


# ---------------------------------------------------------------------------
# exponents and the power-weighted Sobolev probe


def _exact(*vals):
    if all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in vals):
        return [Fraction(v) for v in vals], True
    return [float(v) for v in vals], False


def sobolev_exponent(p, xi, d):
    """``q`` with ``1/p = 1/q + (1 - xi)/d``; exact for int/Fraction input."""
    (p, xi, d), exact = _exact(p, xi, d)
    if p < 1 or d < 1:
        raise InputError("need p >= 1 and d >= 1")
    if not (1 - d / p < xi <= 1):
        raise InputError(f"xi must satisfy 1 - d/p < xi <= 1, got xi={xi}")
    inv_q = 1 / p - (1 - xi) / d
    return 1 / inv_q


def lambda_exponent(r, q):
    """``lambda`` with ``1/r = lambda/2 + (1 - lambda)/q`` for ``2 <= r <= q``."""
    (r, q), exact = _exact(r, q)
    if not (2 <= r <= q):
        raise InputError("need 2 <= r <= q")
    if q == 2:
        return Fraction(1) if exact else 1.0
    half = Fraction(1, 2) if exact else 0.5
    return (1 / r - 1 / q) / (half - 1 / q)


def sobolev_ratio(u: SmoothField, s: float, xi: float, p: float, q: float, bounds, panels=6, order=12) -> float:
    """``||x_d^s u||_{L^q} / ||x_d^(s+xi) Du||_{L^p}`` over the support of ``u``."""
    box = _support_box(u, bounds)
    sing = abs(box[-1][0]) < 1e-300
    ql = QuadratureRule.build(box, panels, order, s * q if (sing and s * q != 0) else None)
    qr = QuadratureRule.build(box, panels, order, (s + xi) * p if sing else None)
    y = ql.nodes[:, -1]
    lhs = ql.integrate(np.abs(y ** s * u.value(ql.nodes)) ** q) ** (1.0 / q)
    g = u.grad(qr.nodes)
    y = qr.nodes[:, -1]
    rhs = qr.integrate((y ** (s + xi) * np.sqrt(np.sum(g * g, axis=1))) ** p) ** (1.0 / p)
    if rhs == 0.0:
        return float("nan")
    return lhs / rhs


def probe_sobolev_inequality(s: float, xi: float, p: float, q: Optional[float] = None, bounds=((-2.0, 2.0), (0.0, 2.0)),
                             trials: int = 200, seed: int = 0, panels: int = 6, order: int = 12) -> EnsembleReport:
    """Empirical constant of ``||x_d^s u||_q <= C ||x_d^(s+xi) Du||_p`` over random bumps.

    Bumps may cross ``x_d = 0``. Each ratio is computed on two quadrature
    levels; the report carries the max ratio per level and the relative drift.
    """
    d = len(bounds)
    if s <= -1.0 / p:
        raise InputError("need s > -1/p")
    q_req = float(sobolev_exponent(p, xi, d)) if q is None else q
    if q is not None and abs(float(sobolev_exponent(p, xi, d)) - q) > 1e-12 * q:
        raise InputError("q does not match the exponent relation")
    rng = np.random.default_rng(seed)
    rows = []
    skipped = 0
    for t in range(trials):
        u = random_bump(rng, bounds, touch_axis=d - 1)
        r1 = sobolev_ratio(u, s, xi, p, q_req, bounds, panels, order)
        r2 = sobolev_ratio(u, s, xi, p, q_req, bounds, 2 * panels, order)
        if not np.isfinite(r1):
            skipped += 1
            continue
        rows.append({"trial": t, "ratio": r1, "ratio_refined": r2})
    c1 = max(r["ratio"] for r in rows)
    c2 = max(r["ratio_refined"] for r in rows)
    drift = abs(c2 - c1) / c2
    return EnsembleReport("sobolev", rows, {"C_emp": c2, "C_emp_coarse": c1, "drift": drift, "q": q_req,
                                            "skipped": skipped, "finite": bool(np.isfinite(c2))})


# ---------------------------------------------------------------------------
# coefficient bounds, continuity and Garding ensembles


def degeneracy_constant(op: OperatorSpec, ws: WeightSpec, points: np.ndarray, rng=None, n_eta: int = 64):
    """Largest ``c`` with ``<a eta, eta> >= c theta |eta|^2`` at the sample points.

    Returns ``(c_eig, c_rayleigh)``: the exact minimum of
    ``lambda_min(a) / theta`` and the smallest sampled Rayleigh quotient
    (always ``>= c_eig``).
    """
    pts, _ = as_points(points, op.dim)
    a = op.eval_a(pts)
    th = ws.theta(pts)
    lam = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))[:, 0]
    c_eig = float(np.min(lam / th))
    rng = rng or np.random.default_rng(0)
    eta = rng.normal(size=(pts.shape[0], n_eta, op.dim))
    quad = np.einsum("nke,nef,nkf->nk", eta, a, eta) / (th[:, None] * np.sum(eta * eta, axis=2))
    return c_eig, float(np.min(quad))


def coefficient_bounds(op: OperatorSpec, ws: WeightSpec, points: np.ndarray) -> dict:
    """Sampled constants ``K`` of the bilinear coefficient bounds (a, d, b, c separately)."""
    pts, _ = as_points(points, op.dim)
    co = divergence_coefficients(op, ws)
    th = ws.theta(pts)
    a = op.eval_a(pts)
    lam_max = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))[:, -1]
    kb = np.linalg.norm(co.b(pts), axis=1) / th
    kd = np.linalg.norm(co.d(pts), axis=1) / th
    kc = np.abs(co.c(pts)) / (1.0 + th)
    c_min = float(np.min(co.c(pts)))
    return {"K_a": float(np.max(lam_max / th)), "K_b": float(np.max(kb)), "K_d": float(np.max(kd)),
            "K_c": float(np.max(kc)), "c_min": c_min}


def continuity_garding_ensemble(op: OperatorSpec, ws: WeightSpec, bounds, trials: int = 200, seed: int = 0,
                                panels: int = 6, order: int = 12, degenerate_axis: Optional[int] = None) -> EnsembleReport:
    """Continuity ratio ``a(u,v) / (||u|| ||v||)`` and Garding feasibility over random bumps.

    ``C1 = K_a + K_b + K_d + K_c`` bounds the continuity ratio. For the lower
    bound the constants ``C2 = c_deg / 2`` and
    ``C3 = C2 + (K_b + K_d)^2 / (2 c_deg) + max(0, -c_min)`` make
    ``a(u,u) >= C2 ||u||_H1^2 - C3 ||(1+theta)^(1/2) u||^2`` by Cauchy-Schwarz
    and Young; each trial checks it and records the smallest ``C3`` that
    would work for this ``u``.
    """
    rng = np.random.default_rng(seed)
    qfull = QuadratureRule.for_weight(bounds, ws, panels, order)
    kb = coefficient_bounds(op, ws, qfull.nodes)
    c_deg, _ = degeneracy_constant(op, ws, qfull.nodes)
    c1 = kb["K_a"] + kb["K_b"] + kb["K_d"] + kb["K_c"]
    c2 = 0.5 * c_deg
    c3 = c2 + (kb["K_b"] + kb["K_d"]) ** 2 / (2.0 * c_deg) + max(0.0, -kb["c_min"])
    rows = []
    for t in range(trials):
        u = random_bump(rng, bounds, touch_axis=degenerate_axis)
        v = random_bump(rng, bounds, touch_axis=degenerate_axis)
        quad = QuadratureRule.for_weight(bounds, ws, panels, order)
        auv = bilinear_form(op, ws, u, v, quad)
        auu = bilinear_form(op, ws, u, u, quad)
        nu = norm_H1w(u.value, u.grad, ws, quad)
        nv = norm_H1w(v.value, v.grad, ws, quad)
        l2 = norm_L2w(lambda x: np.sqrt(1.0 + ws.theta(x)) * u.value(x), ws, quad)
        ratio = abs(auv) / (nu * nv)
        need = (c2 * nu ** 2 - auu) / l2 ** 2
        rows.append({"trial": t, "continuity_ratio": ratio, "a_uu": auu, "h1_sq": nu ** 2, "l2_sq": l2 ** 2,
                     "garding_C3_needed": need, "garding_ok": bool(auu >= c2 * nu ** 2 - c3 * l2 ** 2)})
    worst = max(r["continuity_ratio"] for r in rows)
    summary = {"C1": c1, "max_continuity_ratio": worst, "continuity_ok": bool(worst <= c1), "C2": c2, "C3": c3,
               "C3_needed": max(r["garding_C3_needed"] for r in rows),
               "garding_ok": all(r["garding_ok"] for r in rows), "degeneracy_constant": c_deg, **kb}
    return EnsembleReport("continuity_garding", rows, summary)
