"""Discrete maximum-principle checks run as seeded batch experiments.

Every check returns a :class:`PropertyReport`. Random data are smooth
Fourier/bump mixtures of amplitude 1, shifted into the required sign; each
trial draws from its own child of ``SeedSequence(seed)`` so reports are
reproducible and trials independent. Tolerances scale with
``scale = ||f|| v ||g|| v 1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .boundary import BoundaryPlan, DomainGrid
from .errors import InputError, ScenarioError, SolverError
from .fdsolver import DiscreteProblem, assemble, field_values, solve
from .operators import (HestonParams, OperatorSpec, check_heston_ln_condition, conjugate_exponential_affine,
                        exponential_affine_weight, make_heston, quadratic_growth_constant)


@dataclass
class PropertyReport:
    property_id: str
    trials: int
    failures: int
    tolerance: float
    witness: Optional[dict] = None
    skipped: bool = False
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and not self.skipped

    def record(self, violation: float, witness: dict):
        """Count a failure and keep the worst witness."""
        self.failures += 1
        if self.witness is None or violation > self.witness.get("violation", -np.inf):
            self.witness = dict(witness, violation=float(violation))

    def row(self) -> dict:
        w = self.witness or {}
        return {"property": self.property_id, "trials": self.trials, "failures": self.failures,
                "passed": int(self.passed), "skipped": int(self.skipped), "tolerance": self.tolerance,
                "worst_violation": w.get("violation", 0.0), "witness_trial": w.get("trial", ""),
                "witness_node": w.get("node", ""), "notes": "; ".join(self.notes)}


def reports_csv(reports: Sequence[PropertyReport]) -> str:
    buf = io.StringIO()
    rows = [r.row() for r in reports]
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0].keys()) if rows else []
    w.writerow(keys)
    for r in rows:
        w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# random data


def trial_rngs(seed: int, trials: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def random_smooth_field(rng: np.random.Generator, dom: DomainGrid, sign: Optional[int] = None,
                        n_modes: int = 4, n_bumps: int = 2) -> np.ndarray:
    """Node values of a smooth random field with ``max |f| = 1``.

    ``sign=-1`` shifts the field into ``[-1, 0]``, ``sign=+1`` into ``[0, 1]``.
    """
    pts = dom.points
    lo = np.array([c[0] for c in dom.coords])
    hi = np.array([c[-1] for c in dom.coords])
    z = (pts - lo) / (hi - lo)
    d = dom.dim
    m = np.zeros(pts.shape[0])
    for _ in range(n_modes):
        k = rng.integers(0, 3, size=d)
        m += rng.normal() * np.cos(2 * np.pi * (z @ k) / 2 + rng.uniform(0, 2 * np.pi)) / (1.0 + k @ k)
    for _ in range(n_bumps):
        c = rng.uniform(0, 1, size=d)
        wdt = rng.uniform(0.1, 0.3)
        m += rng.normal() * np.exp(-np.sum((z - c) ** 2, axis=1) / (2 * wdt ** 2))
    if sign is None:
        return m / max(np.max(np.abs(m)), 1e-300)
    span = np.max(m) - np.min(m)
    if span <= 0:
        return np.full_like(m, -1.0 if sign < 0 else 1.0)
    if sign < 0:
        return -(m - np.min(m)) / span
    return (m - np.min(m)) / span


def _scale(f, g) -> float:
    return max(float(np.max(np.abs(f))) if np.size(f) else 0.0, float(np.max(np.abs(g))) if np.size(g) else 0.0, 1.0)


def _rhs(prob: DiscreteProblem, f: np.ndarray, g: np.ndarray, h: Optional[np.ndarray] = None) -> np.ndarray:
    rhs = np.where(prob.dirichlet_mask, g, f)
    if h is not None:
        rhs = np.where(prob.row_tags == "neumann", -h, rhs)
    else:
        rhs = np.where(prob.row_tags == "neumann", 0.0, rhs)
    return rhs


def _eq_rows(prob: DiscreteProblem) -> np.ndarray:
    return np.isin(prob.row_tags, ("interior", "degenerate_boundary"))


# ---------------------------------------------------------------------------
# maximum principle, comparison, a-priori bound


def check_weak_mp(op: OperatorSpec, dom: DomainGrid, plan, trials: int = 50, seed: int = 0,
                  tol: float = 1e-10, eq_tol: float = 1e-8, require_monotone: bool = True,
                  prob: Optional[DiscreteProblem] = None) -> PropertyReport:
    """Random ``f <= 0``, ``g <= 0``: ``max u <= tol * scale``.

    When ``c == 0`` on all equation rows and Dirichlet nodes exist, also
    ``max u == max_{Dirichlet} g`` within ``eq_tol * scale``.
    """
    prob = prob or assemble(op, dom, plan)
    rep = PropertyReport("weak_mp", trials, 0, tol)
    if require_monotone and not prob.monotone:
        rep.skipped = True
        rep.notes.append("assembly not monotone; check skipped")
        return rep
    eq = _eq_rows(prob)
    c_vals = op.eval_c(dom.points[eq]) if np.any(eq) else np.zeros(0)
    c_zero = bool(np.all(c_vals == 0.0)) and np.any(prob.dirichlet_mask)
    if c_zero:
        rep.notes.append("c == 0: equality form checked")
    worst = -np.inf
    for t, rng in enumerate(trial_rngs(seed, trials)):
        f = random_smooth_field(rng, dom, -1)
        g = random_smooth_field(rng, dom, -1)
        sol = solve(prob.with_rhs(_rhs(prob, f, g)))
        u = sol.values
        scale = _scale(f[eq], g[prob.dirichlet_mask])
        top = float(np.max(u))
        worst = max(worst, top / scale)
        if top > tol * scale:
            rep.record(top / scale, {"trial": t, "seed": seed, "node": int(np.argmax(u)), "max_u": top})
            continue
        if c_zero:
            gap = abs(top - float(np.max(g[prob.dirichlet_mask])))
            if gap > eq_tol * scale:
                rep.record(gap / scale, {"trial": t, "seed": seed, "node": int(np.argmax(u)), "equality_gap": gap})
    rep.details["worst_scaled_max"] = worst
    return rep


def check_comparison(op, dom, plan, trials: int = 50, seed: int = 0, tol: float = 1e-10) -> PropertyReport:
    """``f1 <= f2``, ``g1 <= g2`` implies ``u1 <= u2``."""
    prob = assemble(op, dom, plan)
    rep = PropertyReport("comparison", trials, 0, tol)
    if not prob.monotone:
        rep.skipped = True
        rep.notes.append("assembly not monotone; check skipped")
        return rep
    for t, rng in enumerate(trial_rngs(seed, trials)):
        f2 = random_smooth_field(rng, dom)
        g2 = random_smooth_field(rng, dom)
        f1 = f2 + random_smooth_field(rng, dom, -1)
        g1 = g2 + random_smooth_field(rng, dom, -1)
        u1 = solve(prob.with_rhs(_rhs(prob, f1, g1))).values
        u2 = solve(prob.with_rhs(_rhs(prob, f2, g2))).values
        scale = _scale(np.concatenate([f1, f2]), np.concatenate([g1, g2]))
        v = float(np.max(u1 - u2))
        if v > tol * scale:
            rep.record(v / scale, {"trial": t, "seed": seed, "node": int(np.argmax(u1 - u2))})
    return rep


def check_apriori_bound(op, dom, plan, c0: float, trials: int = 50, seed: int = 0, tol: float = 1e-8) -> PropertyReport:
    """Random-sign data: ``||u|| <= (1/c0)||f|| v ||g|| + tol * scale``."""
    if c0 <= 0:
        raise InputError("c0 must be positive")
    prob = assemble(op, dom, plan)
    eq = _eq_rows(prob)
    c_min = float(np.min(op.eval_c(dom.points[eq])))
    rep = PropertyReport("apriori_bound", trials, 0, tol)
    if c_min < c0 * (1 - 1e-12):
        raise InputError(f"c >= c0 fails on the grid (min c = {c_min})")
    worst = 0.0
    for t, rng in enumerate(trial_rngs(seed, trials)):
        f = random_smooth_field(rng, dom)
        g = random_smooth_field(rng, dom)
        u = solve(prob.with_rhs(_rhs(prob, f, g))).values
        nf = float(np.max(np.abs(f[eq])))
        ng = float(np.max(np.abs(g[prob.dirichlet_mask]))) if np.any(prob.dirichlet_mask) else 0.0
        bound = max(nf / c0, ng)
        nu = float(np.max(np.abs(u)))
        worst = max(worst, nu / bound if bound > 0 else 0.0)
        scale = _scale(f[eq], g[prob.dirichlet_mask])
        if nu > bound + tol * scale:
            rep.record(nu - bound, {"trial": t, "seed": seed, "node": int(np.argmax(np.abs(u))),
                                    "norm_u": nu, "bound": bound})
    rep.details["max_ratio_to_bound"] = worst
    return rep


# ---------------------------------------------------------------------------
# Hopf lemma and strong maximum principle


def _inward_quotient(dom: DomainGrid, u: np.ndarray, node: int, axis: int) -> float:
    mi = dom.multi_index()[node].copy()
    side_lo = mi[axis] == 0
    if not side_lo and mi[axis] != dom.shape[axis] - 1:
        raise ScenarioError("Hopf point must lie on the boundary")
    nb = mi.copy()
    nb[axis] += 1 if side_lo else -1
    j = int(dom.flat_index(nb)[0])
    dx = abs(dom.coords[axis][nb[axis]] - dom.coords[axis][mi[axis]])
    return (u[j] - u[node]) / dx


def check_hopf(op: OperatorSpec, dom: DomainGrid, plan, x0, axis: int, f=None, g=None,
               stability: float = 0.2, exact: Optional[float] = None) -> PropertyReport:
    """Inward difference quotient at a strict boundary maximum ``x0``.

    Solves on ``dom`` and on its 2x refinement; passes when both quotients are
    negative and differ by less than ``stability`` relative. ``exact`` (the
    analytic inward derivative, if known) is compared for sign only.
    """
    rep = PropertyReport("hopf", 2, 0, stability)
    vals = []
    for grid in (dom, dom.refined(2)):
        prob = assemble(op, grid, plan, f, g)
        u = solve(prob).values
        node = int(np.argmin(np.sum((grid.points - np.asarray(x0, dtype=float)) ** 2, axis=1)))
        others = np.delete(u, node)
        scale = max(float(np.max(np.abs(u))), 1.0)
        if not u[node] > np.max(others) - 1e-14 * scale or np.ptp(u) <= 1e-12 * scale:
            raise ScenarioError("scenario does not produce a strict boundary maximum at x0")
        vals.append(_inward_quotient(grid, u, node, axis))
    d0, d1 = vals
    rep.details.update({"quotient_coarse": d0, "quotient_fine": d1, "delta": -max(d0, d1)})
    if exact is not None:
        rep.details["exact"] = exact
        if np.sign(exact) != np.sign(d1):
            rep.record(abs(d1 - exact), {"trial": 1, "node": "x0", "exact": exact})
    if not (d0 < 0 and d1 < 0):
        rep.record(max(d0, d1), {"trial": 0, "node": "x0", "quotients": vals})
    change = abs(d1 - d0) / abs(d1) if d1 != 0 else np.inf
    rep.details["relative_change"] = change
    if change >= stability:
        rep.record(change, {"trial": 1, "node": "x0", "quotients": vals})
    return rep


def check_strong_mp(op: OperatorSpec, dom: DomainGrid, plan, f=None, g=None, tol: float = 1e-10,
                    const_tol: float = 1e-12) -> PropertyReport:
    """No interior or degenerate-boundary node reaches the max, unless ``u`` is constant."""
    prob = assemble(op, dom, plan, f, g)
    rep = PropertyReport("strong_mp", 1, 0, tol)
    if not prob.monotone:
        rep.skipped = True
        rep.notes.append("assembly not monotone; check skipped")
        return rep
    fv = field_values(f, dom.points)
    gv = field_values(g, dom.points)
    u = solve(prob).values
    scale = _scale(fv[_eq_rows(prob)], gv[prob.dirichlet_mask])
    if np.ptp(u) <= const_tol * scale:
        rep.notes.append("u constant: exempt")
        rep.details["constant"] = True
        return rep
    inner = _eq_rows(prob)
    top = float(np.max(u))
    inner_top = float(np.max(u[inner]))
    rep.details.update({"max": top, "max_inner": inner_top, "gap": top - inner_top})
    if inner_top > top - tol * scale:
        idx = np.nonzero(inner)[0][int(np.argmax(u[inner]))]
        rep.record(inner_top - (top - tol * scale), {"trial": 0, "node": int(idx)})
    rep.notes.append("discrete contrapositive: separation threshold tol * scale is an artifact choice")
    return rep


# ---------------------------------------------------------------------------
# Neumann uniqueness


def neumann_plan(dom: DomainGrid, degenerate_labels: Sequence[str]) -> BoundaryPlan:
    return BoundaryPlan.from_mapping({s.label: ("oblique_degenerate" if s.label in degenerate_labels else "neumann")
                                      for s in dom.segments})


def check_neumann_uniqueness(op: OperatorSpec, dom: DomainGrid, degenerate_labels: Sequence[str],
                             tol: float = 1e-8) -> PropertyReport:
    """Homogeneous Neumann data on the non-degenerate segments: ``u == 0``.

    With ``c == 0`` everywhere constants are in the kernel; that case is
    reported as the expected one-dimensional nullspace and not as a failure.
    """
    plan = neumann_plan(dom, degenerate_labels)
    prob = assemble(op, dom, plan, 0.0, 0.0, 0.0)
    rep = PropertyReport("neumann_uniqueness", 1, 0, tol)
    ones = np.ones(dom.n_nodes)
    m1 = float(np.max(np.abs(prob.matrix @ ones)))
    mscale = float(abs(prob.matrix).max())
    if m1 <= 1e-12 * mscale:
        rep.details["nullspace"] = "constants"
        rep.notes.append("c == 0: constants span the kernel (expected)")
        try:
            solve(prob)
        except SolverError:
            rep.details["singular"] = True
        return rep
    # a nonzero right-hand side far from the kernel must still give u == 0 when removed
    sol = solve(prob)
    nu = float(np.max(np.abs(sol.values)))
    rep.details["norm_u"] = nu
    if nu > tol:
        rep.record(nu, {"trial": 0, "node": int(np.argmax(np.abs(sol.values)))})
    # smallest singular value estimate: u = M^{-1} e for a random e has bounded norm
    rng = np.random.default_rng(0)
    e = rng.normal(size=dom.n_nodes)
    try:
        v = solve(prob.with_rhs(e)).values
        rep.details["inverse_growth"] = float(np.max(np.abs(v)) / np.max(np.abs(e)))
    except SolverError as exc:
        rep.record(np.inf, {"trial": 0, "node": "", "error": str(exc)})
    return rep


# ---------------------------------------------------------------------------
# growth condition via exponential-affine conjugation


def conjugation_identity_error(op: OperatorSpec, h, points, rng=None) -> float:
    """Max relative error of ``A_hat(phi v) = phi A v`` for a smooth test ``v``."""
    h = np.asarray(h, dtype=float)
    ah = conjugate_exponential_affine(op, h)
    x = np.asarray(points, dtype=float)
    rng = rng or np.random.default_rng(0)
    k = rng.normal(size=op.dim)
    ph = rng.uniform(0, 2 * np.pi)
    v = np.cos(x @ k + ph)
    dv = -np.sin(x @ k + ph)[:, None] * k
    d2v = -np.cos(x @ k + ph)[:, None, None] * np.outer(k, k)
    phi = np.exp(-(x @ h))
    # derivatives of w = phi v with D phi = -h phi
    w = phi * v
    dw = phi[:, None] * (dv - h[None, :] * v[:, None])
    d2w = phi[:, None, None] * (d2v - h[None, :, None] * dv[:, None, :] - dv[:, :, None] * h[None, None, :]
                                + np.outer(h, h)[None] * v[:, None, None])
    lhs = ah.apply(x, w, dw, d2w)
    rhs = phi * op.apply(x, v, dv, d2v)
    return float(np.max(np.abs(lhs - rhs)) / max(float(np.max(np.abs(rhs))), 1e-300))


def check_growth_conjugation(op: OperatorSpec, h, dom: DomainGrid, plan, trials: int = 20, seed: int = 0,
                             tol: float = 1e-10, c0: float = 0.0) -> PropertyReport:
    """Weak MP for the conjugated operator, transported back by ``phi``.

    Precondition: ``c_hat >= c0`` and ``c_hat > 0`` on the grid; otherwise the
    report is marked skipped with a precondition note. For each trial
    ``u_hat`` solves ``A_hat u_hat = f_hat <= 0`` with ``g_hat <= 0``; the
    check requires ``u_hat <= 0`` and that ``u = u_hat / phi`` obeys
    ``u <= C (1 + 1/phi)`` with ``C = max(phi u)^+`` and ``u <= 0``.
    """
    h = np.asarray(h, dtype=float)
    ah = conjugate_exponential_affine(op, h)
    pts = dom.points
    c_hat = ah.eval_c(pts)
    rep = PropertyReport("growth_conjugation", trials, 0, tol)
    rep.details["c_hat_min"] = float(np.min(c_hat))
    if not (np.min(c_hat) > 0 and np.min(c_hat) >= c0):
        rep.skipped = True
        rep.notes.append(f"precondition: c_hat >= c0 > 0 fails (min c_hat = {np.min(c_hat):.4g})")
        return rep
    rep.details["identity_error"] = conjugation_identity_error(op, h, pts[:: max(1, pts.shape[0] // 200)])
    phi = exponential_affine_weight(h)(pts)
    prob = assemble(ah, dom, plan)
    if not prob.monotone:
        rep.skipped = True
        rep.notes.append("conjugated assembly not monotone; check skipped")
        return rep
    for t, rng in enumerate(trial_rngs(seed, trials)):
        f = random_smooth_field(rng, dom, -1)
        g = random_smooth_field(rng, dom, -1)
        uh = solve(prob.with_rhs(_rhs(prob, f, g))).values
        scale = _scale(f, g)
        u = uh / phi
        cst = max(float(np.max(phi * u)), 0.0)
        bound_ok = np.all(u <= cst * (1.0 + 1.0 / phi) + tol * scale / phi)
        top = float(np.max(uh))
        if top > tol * scale or not bound_ok:
            rep.record(top / scale, {"trial": t, "seed": seed, "node": int(np.argmax(uh))})
    return rep


def heston_growth_scenario(p: HestonParams, L: float, N: float):
    """``(ok, residuals, h)`` for the conjugation ``phi = exp(-L x - N y)``."""
    ok, r1, r2 = check_heston_ln_condition(p, L, N)
    return ok, (r1, r2), np.array([L, N], dtype=float)


# ---------------------------------------------------------------------------
# growth constant and truncated domains


def quadratic_growth_report(op: OperatorSpec, domains: Sequence[DomainGrid]) -> dict:
    """``K_min`` on nested truncations; finite and non-decreasing towards its sup."""
    ks = [float(quadratic_growth_constant(op, d.points)) for d in domains]
    finite = all(np.isfinite(k) for k in ks)
    rel = abs(ks[-1] - ks[-2]) / max(abs(ks[-1]), 1e-300) if len(ks) > 1 else 0.0
    return {"K": ks, "finite": finite, "relative_change_last": rel}


def truncated_domain_study(op: OperatorSpec, make_plan: Callable, f, g, spacing: float, x_half: Sequence[float],
                           y_top: Sequence[float], core) -> dict:
    """Solve on ``[-X, X] x (0, Y)`` at fixed ``spacing`` and compare on ``core``.

    ``core`` is ``((x0, x1), (y0, y1))``; its nodes are shared by all grids
    because every grid is anchored at ``x = 0`` and ``y = 0`` with the same
    spacing. Returns the sup-norm relative change between successive domains.
    """
    sols = []
    for X, Y in zip(x_half, y_top):
        nx = int(round(2 * X / spacing)) + 1
        ny = int(round(Y / spacing)) + 1
        grid = DomainGrid.uniform([(-X, X), (0.0, Y)], [nx, ny])
        prob = assemble(op, grid, make_plan(grid), f, g)
        u = solve(prob).values
        pts = grid.points
        sel = ((pts[:, 0] >= core[0][0] - 1e-12) & (pts[:, 0] <= core[0][1] + 1e-12)
               & (pts[:, 1] >= core[1][0] - 1e-12) & (pts[:, 1] <= core[1][1] + 1e-12))
        key = np.round(pts[sel] / spacing).astype(np.int64)
        order = np.lexsort((key[:, 0], key[:, 1]))
        sols.append((key[order], u[sel][order], prob.monotone))
    changes = []
    for (k0, u0, _), (k1, u1, _) in zip(sols[:-1], sols[1:]):
        if k0.shape != k1.shape or np.any(k0 != k1):
            raise InputError("core nodes differ between truncations")
        changes.append(float(np.max(np.abs(u1 - u0)) / max(float(np.max(np.abs(u1))), 1e-300)))
    return {"relative_changes": changes, "core_max": float(np.max(np.abs(sols[-1][1]))),
            "monotone": all(s[2] for s in sols)}
