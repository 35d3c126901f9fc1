"""Monotone finite-difference discretization of ``Au = f`` with partial boundary data.

Row types
---------
interior
    central second differences, sign-adapted 7-point cross stencil and
    first-order upwind drift.
degenerate_boundary
    the oblique condition ``-<b, Du> + c u = f``: one-sided differences into
    the domain along boundary normals, upwind along the boundary. Used for
    both the ``oblique_degenerate`` and ``none`` plan tags.
dirichlet
    identity row, right-hand side ``g``.
neumann
    one-sided ``(u_b - u_in) / dx = -h``, i.e. inward derivative ``h``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import BoundaryPlan, DomainGrid
from .errors import InputError, SolverError
from .operators import OperatorSpec

log = logging.getLogger(__name__)

ROW_TAGS = ("interior", "degenerate_boundary", "dirichlet", "neumann")
_TAG_PRIORITY = {"dirichlet": 3, "neumann": 2, "oblique_degenerate": 1, "none": 0}

FieldLike = Union[None, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def field_values(fld: FieldLike, pts: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field given as callable, node array or constant."""
    n = pts.shape[0]
    if fld is None:
        return np.zeros(n)
    if callable(fld):
        vals = np.asarray(fld(pts), dtype=float)
    else:
        vals = np.asarray(fld, dtype=float)
    vals = np.broadcast_to(vals, (n,)).astype(float, copy=True)
    return vals


@dataclass
class DiscreteProblem:
    grid: DomainGrid
    matrix: sp.csr_matrix
    rhs: np.ndarray
    row_tags: np.ndarray
    monotone: bool
    diagnostics: List[str] = field(default_factory=list)
    label: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.row_tags == "dirichlet"

    def digest(self) -> str:
        m = self.matrix.tocsr()
        m.sort_indices()
        hsh = hashlib.sha256()
        for arr in (m.indptr, m.indices, m.data, self.rhs):
            hsh.update(np.ascontiguousarray(arr).tobytes())
        hsh.update("|".join(self.row_tags.tolist()).encode())
        return hsh.hexdigest()

    def with_rhs(self, rhs) -> "DiscreteProblem":
        return DiscreteProblem(self.grid, self.matrix, np.asarray(rhs, dtype=float).copy(), self.row_tags,
                               self.monotone, list(self.diagnostics), self.label, dict(self.metadata))

    def coo_text(self) -> str:
        """Matrix as ``row col value`` lines."""
        m = self.matrix.tocoo()
        order = np.lexsort((m.col, m.row))
        lines = [f"{m.row[k]} {m.col[k]} {m.data[k]!r}" for k in order]
        return "\n".join(lines) + "\n"


@dataclass
class DiscreteSolution:
    values: np.ndarray
    residual_inf: float
    iterations: int
    problem_hash: str
    metadata: dict = field(default_factory=dict)

    def to_csv(self, prob: DiscreteProblem) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pts = prob.grid.points
        w.writerow([f"x{k + 1}" for k in range(pts.shape[1])] + ["value", "row_tag"])
        for p, v, t in zip(pts, self.values, prob.row_tags):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v)), t])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# node classification


def node_tags(dom: DomainGrid, plan) -> tuple:
    """Return ``(tags, plan_tags, normal_axis)`` per node.

    ``plan_tags`` keeps the boundary plan entry (``oblique_degenerate`` or
    ``none``) that produced each degenerate row; ``normal_axis`` is the axis of
    the segment whose condition won (``-1`` for interior nodes).
    """
    plan = BoundaryPlan.coerce(plan)
    labels = {s.label for s in dom.segments}
    missing = labels - plan.labels()
    if missing:
        raise InputError(f"boundary plan lacks segments {sorted(missing)}")
    unknown = plan.labels() - labels
    if unknown:
        raise InputError(f"boundary plan names unknown segments {sorted(unknown)}")
    n = dom.n_nodes
    pts = dom.points
    tags = np.full(n, "interior", dtype="<U20")
    plan_tags = np.full(n, "", dtype="<U20")
    normal_axis = np.full(n, -1, dtype=int)
    best = np.full(n, -1, dtype=int)
    for seg in dom.segments:
        for node in dom.segment_nodes(seg):
            t = 0.0 if dom.dim == 1 else pts[node, seg.tangent_axis]
            tag = plan.tag_at(seg.label, t)
            pr = _TAG_PRIORITY[tag]
            if pr > best[node]:
                best[node] = pr
                plan_tags[node] = tag
                normal_axis[node] = seg.axis
    for node in np.nonzero(best >= 0)[0]:
        tag = plan_tags[node]
        if tag in ("oblique_degenerate", "none"):
            tags[node] = "degenerate_boundary"
        else:
            tags[node] = tag
    return tags, plan_tags, normal_axis


# ---------------------------------------------------------------------------
# assembly


class _Coo:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows)
        if rows.size == 0:
            return
        self.rows.append(rows)
        self.cols.append(np.broadcast_to(cols, rows.shape))
        self.vals.append(np.broadcast_to(vals, rows.shape).astype(float))

    def tocsr(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        m = sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return m


def _axis_steps(dom: DomainGrid, mi: np.ndarray, axis: int):
    """Backward and forward spacings at the given nodes (``nan`` at ends)."""
    c = dom.coords[axis]
    i = mi[:, axis]
    n = c.size
    hm = np.full(i.shape, np.nan)
    hp = np.full(i.shape, np.nan)
    ok = i > 0
    hm[ok] = c[i[ok]] - c[i[ok] - 1]
    ok = i < n - 1
    hp[ok] = c[i[ok] + 1] - c[i[ok]]
    return hm, hp


def _neighbor(dom: DomainGrid, mi: np.ndarray, offsets) -> np.ndarray:
    shifted = mi + np.asarray(offsets)[None, :]
    return dom.flat_index(shifted)


def _first_derivative(coo, dom, rows, mi, axis, coef, mode, at_lo, at_hi, normal_order):
    """Add ``-coef * D_axis u`` for the nodes ``rows``.

    ``mode`` is ``upwind`` or ``central`` for nodes with neighbours on both
    sides; nodes on the low (high) end of the axis use one-sided forward
    (backward) differences.
    """
    d = dom.dim
    e = np.zeros(d, dtype=int)
    e[axis] = 1
    hm, hp = _axis_steps(dom, mi, axis)
    both = ~(at_lo | at_hi)

    # one-sided at the low end: forward difference into the domain
    for mask, sgn in ((at_lo, 1), (at_hi, -1)):
        if not np.any(mask):
            continue
        r = rows[mask]
        m = mi[mask]
        k = coef[mask]
        h1 = hp[mask] if sgn > 0 else hm[mask]
        if normal_order == 1:
            # D u ~ sgn * (u_1 - u_0) / h1
            coo.add(r, r, k * sgn / h1)
            coo.add(r, _neighbor(dom, m, sgn * e), -k * sgn / h1)
        else:
            m2 = m + sgn * e[None, :]
            h2 = (_axis_steps(dom, m2, axis)[1] if sgn > 0 else _axis_steps(dom, m2, axis)[0])
            w0 = -(2 * h1 + h2) / (h1 * (h1 + h2))
            w1 = (h1 + h2) / (h1 * h2)
            w2 = -h1 / (h2 * (h1 + h2))
            coo.add(r, r, -k * sgn * w0)
            coo.add(r, _neighbor(dom, m, sgn * e), -k * sgn * w1)
            coo.add(r, _neighbor(dom, m, 2 * sgn * e), -k * sgn * w2)

    if not np.any(both):
        return
    r = rows[both]
    m = mi[both]
    k = coef[both]
    h_m = hm[both]
    h_p = hp[both]
    if mode == "central":
        wm = -h_p / (h_m * (h_m + h_p))
        w0 = (h_p - h_m) / (h_m * h_p)
        wp = h_m / (h_p * (h_m + h_p))
        coo.add(r, _neighbor(dom, m, -e), -k * wm)
        coo.add(r, r, -k * w0)
        coo.add(r, _neighbor(dom, m, e), -k * wp)
        return
    pos = k > 0
    if np.any(pos):
        coo.add(r[pos], r[pos], k[pos] / h_p[pos])
        coo.add(r[pos], _neighbor(dom, m[pos], e), -k[pos] / h_p[pos])
    neg = k < 0
    if np.any(neg):
        coo.add(r[neg], r[neg], -k[neg] / h_m[neg])
        coo.add(r[neg], _neighbor(dom, m[neg], -e), k[neg] / h_m[neg])


def assemble(op: OperatorSpec, dom: DomainGrid, plan, f: FieldLike = None, g: FieldLike = None,
             h: FieldLike = None, drift: str = "upwind", normal_order: int = 1) -> DiscreteProblem:
    """Assemble the discrete boundary value problem.

    Parameters
    ----------
    plan
        :class:`BoundaryPlan` or mapping ``segment label -> tag`` with tags
        ``dirichlet``, ``oblique_degenerate``, ``none`` or ``neumann``.
    f, g, h
        Source, Dirichlet data and Neumann data (inward normal derivative).
        Each may be a callable on ``(n, d)`` points, an array of node values,
        a constant, or ``None`` for zero.
    drift
        ``"upwind"`` (monotone) or ``"central"``.
    normal_order
        1 for two-point one-sided normal differences on degenerate rows, 2 for
        three-point (not monotone in general).
    """
    if op.dim != dom.dim:
        raise InputError("operator and grid dimensions differ")
    if drift not in ("upwind", "central"):
        raise InputError(f"drift must be 'upwind' or 'central', got {drift!r}")
    if normal_order not in (1, 2):
        raise InputError("normal_order must be 1 or 2")
    n = dom.n_nodes
    pts = dom.points
    mi = dom.multi_index()
    tags, plan_tags, normal_axis = node_tags(dom, plan)
    diagnostics = []
    coo = _Coo(n)
    rhs = np.zeros(n)

    fv = field_values(f, pts)
    gv = field_values(g, pts)
    hv = field_values(h, pts)

    # --- interior rows -------------------------------------------------
    rows = np.nonzero(tags == "interior")[0]
    if rows.size:
        x = pts[rows]
        m = mi[rows]
        a = op.eval_a(x)
        b = op.eval_b(x)
        c = op.eval_c(x)
        coo.add(rows, rows, c)
        no_end = np.zeros(rows.size, dtype=bool)
        for k in range(dom.dim):
            e = np.zeros(dom.dim, dtype=int)
            e[k] = 1
            hm, hp = _axis_steps(dom, m, k)
            akk = a[:, k, k]
            s = 2.0 / (hm + hp)
            coo.add(rows, _neighbor(dom, m, e), -akk * s / hp)
            coo.add(rows, _neighbor(dom, m, -e), -akk * s / hm)
            coo.add(rows, rows, akk * s * (1.0 / hp + 1.0 / hm))
            _first_derivative(coo, dom, rows, m, k, b[:, k], drift, no_end, no_end, 1)
        if dom.dim == 2:
            a12 = 0.5 * (a[:, 0, 1] + a[:, 1, 0])
            hxm, hxp = _axis_steps(dom, m, 0)
            hym, hyp = _axis_steps(dom, m, 1)
            amag = np.abs(a12)
            for sx, sy in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
                sel = (a12 > 0) if sx == sy else (a12 < 0)
                if not np.any(sel):
                    continue
                hx = (hxp if sx > 0 else hxm)[sel]
                hy = (hyp if sy > 0 else hym)[sel]
                w = amag[sel] / (hx * hy)
                r = rows[sel]
                mm = m[sel]
                coo.add(r, _neighbor(dom, mm, (sx, sy)), -w)
                coo.add(r, _neighbor(dom, mm, (sx, 0)), w)
                coo.add(r, _neighbor(dom, mm, (0, sy)), w)
                coo.add(r, r, -w)
            bad = amag > np.minimum(a[:, 0, 0], a[:, 1, 1]) * (1 + 1e-12)
            if np.any(bad):
                diagnostics.append(f"cross coefficient exceeds min(a11, a22) at {int(bad.sum())} interior nodes")
        rhs[rows] = fv[rows]

    # --- degenerate boundary rows --------------------------------------
    rows = np.nonzero(tags == "degenerate_boundary")[0]
    if rows.size:
        x = pts[rows]
        m = mi[rows]
        b = op.eval_b(x)
        c = op.eval_c(x)
        coo.add(rows, rows, c)
        for k in range(dom.dim):
            at_lo = m[:, k] == 0
            at_hi = m[:, k] == dom.shape[k] - 1
            _first_derivative(coo, dom, rows, m, k, b[:, k], drift, at_lo, at_hi, normal_order)
            # inward normal component b_perp must be >= 0 for a well-posed oblique row
            inward = np.where(at_lo, b[:, k], np.where(at_hi, -b[:, k], 0.0))
            if np.any(inward < 0):
                msg = (f"b_perp < 0 on {int(np.sum(inward < 0))} degenerate-boundary nodes (axis {k}); "
                       "oblique condition may be ill-posed")
                diagnostics.append(msg)
                log.warning(msg)
        rhs[rows] = fv[rows]

    # --- Neumann rows ----------------------------------------------------
    rows = np.nonzero(tags == "neumann")[0]
    for node in rows:
        k = normal_axis[node]
        m = mi[node].copy()
        side_lo = m[k] == 0
        nb = m.copy()
        nb[k] += 1 if side_lo else -1
        dx = abs(dom.coords[k][nb[k]] - dom.coords[k][m[k]])
        nbi = int(dom.flat_index(nb)[0])
        coo.add(np.array([node]), np.array([node]), 1.0 / dx)
        coo.add(np.array([node]), np.array([nbi]), -1.0 / dx)
        rhs[node] = -hv[node]

    # --- Dirichlet rows --------------------------------------------------
    rows = np.nonzero(tags == "dirichlet")[0]
    coo.add(rows, rows, 1.0)
    rhs[rows] = gv[rows]

    matrix = coo.tocsr()
    monotone = _is_monotone(matrix, tags)
    if not monotone:
        msg = "assembled matrix violates the M-matrix sign pattern; maximum-principle checks are not guaranteed"
        diagnostics.append(msg)
        log.warning(msg)
    if normal_order == 2:
        diagnostics.append("three-point normal differences on degenerate rows break the M-matrix sign pattern")
    meta = {"drift": drift, "normal_order": normal_order, "plan_tags": plan_tags,
            "operator_metadata": {k: v for k, v in op.metadata.items() if isinstance(v, (int, float, str, bool))}}
    return DiscreteProblem(dom, matrix, rhs, tags, monotone, diagnostics, op.label, meta)


def _is_monotone(matrix: sp.csr_matrix, tags: np.ndarray) -> bool:
    m = matrix.tocsr()
    diag = m.diagonal()
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    off = rows != m.indices
    active = tags[rows] != "dirichlet"
    scale = np.abs(diag[rows])
    bad_off = off & active & (m.data > 1e-13 * np.maximum(scale, 1.0))
    bad_diag = (tags != "dirichlet") & ~(diag > 0)
    return not (np.any(bad_off) or np.any(bad_diag))


# ---------------------------------------------------------------------------
# solve


def residual_floor(matrix, u) -> float:
    """Rounding floor of ``||M u - rhs||_inf`` evaluated in double precision."""
    absm = abs(matrix)
    nnz_row = np.max(np.diff(matrix.tocsr().indptr)) if matrix.shape[0] else 1
    return float(4.0 * nnz_row * np.finfo(float).eps * np.max(absm @ np.abs(u)))


def solve(prob: DiscreteProblem, tol: float = 1e-10, method: str = "direct", maxiter: int = 10000) -> DiscreteSolution:
    """Solve the assembled system and check ``||M u - rhs||_inf <= tol (||rhs||_inf + 1)``.

    The check also accepts residuals at the rounding floor of the residual
    evaluation itself (see :func:`residual_floor`); the floor used is
    recorded in ``metadata``.
    """
    m = prob.matrix.tocsc()
    rhs = prob.rhs
    history = []
    if m.shape[0] != m.shape[1] or m.shape[0] != rhs.size:
        raise InputError("matrix must be square and match the right-hand side")
    iterations = 1
    if method == "direct":
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                u = spla.spsolve(m, rhs)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SolverError(f"direct solve failed: {exc}") from exc
    elif method == "iterative":
        try:
            ilu = spla.spilu(m, drop_tol=1e-6, fill_factor=20)
        except RuntimeError as exc:
            raise SolverError(f"ILU preconditioner failed: {exc}") from exc
        pre = spla.LinearOperator(m.shape, ilu.solve)
        counter = {"n": 0}

        def cb(xk):
            counter["n"] += 1
            history.append(float(np.max(np.abs(m @ xk - rhs))))

        u, info = spla.bicgstab(m, rhs, rtol=min(tol, 1e-12), atol=0.0, M=pre, maxiter=maxiter, callback=cb)
        iterations = counter["n"]
        if info != 0:
            raise SolverError(f"BiCGSTAB did not converge (info={info})", history)
    else:
        raise InputError(f"unknown method {method!r}")
    if not np.all(np.isfinite(u)):
        raise SolverError("solution contains non-finite values (singular system?)", history)
    res = float(np.max(np.abs(prob.matrix @ u - rhs))) if rhs.size else 0.0
    target = tol * (float(np.max(np.abs(rhs))) + 1.0)
    floor = residual_floor(prob.matrix, u)
    if res > max(target, floor):
        raise SolverError(f"residual {res:.3e} exceeds tolerance {target:.3e}", history + [res])
    return DiscreteSolution(np.asarray(u, dtype=float), res, iterations, prob.digest(),
                            {"tol": tol, "target": target, "floor": floor, "method": method, "history": history})


def solve_bvp(op, dom, plan, f=None, g=None, h=None, tol=1e-10, method="direct", **kw):
    prob = assemble(op, dom, plan, f, g, h, **kw)
    return prob, solve(prob, tol=tol, method=method)


# ---------------------------------------------------------------------------
# refinement


@dataclass
class RefinementStudy:
    h: np.ndarray
    errors: np.ndarray
    orders: np.ndarray
    n_nodes: List[int]

    def rows(self):
        out = []
        for k in range(len(self.h)):
            order = self.orders[k - 1] if k > 0 else float("nan")
            out.append((float(self.h[k]), float(self.errors[k]), float(order)))
        return out


def refine_study(op, dom: DomainGrid, plan, f=None, g=None, levels: int = 4, oracle=None, **kw) -> RefinementStudy:
    """Successive 2x refinements of ``dom`` with sup-norm errors.

    With ``oracle`` (callable on points) errors are measured at all nodes of
    each level. Without it, each level is compared to the finest solution at
    the shared nodes and the finest level is dropped from the table.
    Observed order between neighbouring levels is ``log2(err_k / err_{k+1})``.
    """
    if levels < 2:
        raise InputError("levels must be >= 2")
    grids = [dom]
    for _ in range(levels - 1):
        grids.append(grids[-1].refined(2))
    sols = []
    for grid in grids:
        _, sol = solve_bvp(op, grid, plan, f, g, **kw)
        sols.append(sol.values)
    hs, errs, counts = [], [], []
    if oracle is not None:
        for grid, u in zip(grids, sols):
            exact = field_values(oracle, grid.points)
            hs.append(max(np.max(s) for s in grid.spacing))
            errs.append(float(np.max(np.abs(u - exact))))
            counts.append(grid.n_nodes)
    else:
        fine = grids[-1]
        for lev, (grid, u) in enumerate(zip(grids[:-1], sols[:-1])):
            stride = 2 ** (levels - 1 - lev)
            idx = fine.multi_index()
            keep = np.all(idx % stride == 0, axis=1)
            ref = sols[-1][keep]
            hs.append(max(np.max(s) for s in grid.spacing))
            errs.append(float(np.max(np.abs(u - ref))))
            counts.append(grid.n_nodes)
    errs = np.asarray(errs)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(errs[:-1] / errs[1:])
    return RefinementStudy(np.asarray(hs), errs, orders, counts)
