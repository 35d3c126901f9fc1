"""Discrete obstacle problem ``min{M u - rhs, u - psi} = 0`` by projected SOR.

Dirichlet rows stay pinned to their data. Nodes are swept in lexicographic
(flat index) order, which makes every solve deterministic.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._accel import njit
from .errors import ConvergenceError, InputError
from .fdsolver import DiscreteProblem, FieldLike, field_values

DEFAULT_OMEGA = 1.5
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 200_000


@njit
def _lcp_residual(indptr, indices, data, rhs, psi, fixed, u):
    n = rhs.shape[0]
    worst = 0.0
    for i in range(n):
        if fixed[i]:
            continue
        r = -rhs[i]
        for p in range(indptr[i], indptr[i + 1]):
            r += data[p] * u[indices[p]]
        m = min(r, u[i] - psi[i])
        if abs(m) > worst:
            worst = abs(m)
    return worst


@njit
def psor_kernel(indptr, indices, data, rhs, psi, fixed, u, omega, tol, res_tol, max_iters, history):
    """In-place PSOR sweeps; returns ``(iterations, status)``.

    Stops once the sup-norm update is below ``tol`` and the complementarity
    residual is below ``res_tol`` (status 0); status 1 means the sweep cap was
    hit, status 2 that the iterates blew up. ``history[k]`` is the update of
    sweep ``k``.
    """
    n = rhs.shape[0]
    first = -1.0
    for it in range(max_iters):
        delta = 0.0
        for i in range(n):
            if fixed[i]:
                continue
            diag = 0.0
            s = rhs[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    diag += data[p]
                else:
                    s -= data[p] * u[j]
            gs = s / diag
            new = u[i] + omega * (gs - u[i])
            if new < psi[i]:
                new = psi[i]
            d = abs(new - u[i])
            if d > delta:
                delta = d
            u[i] = new
        history[it] = delta
        if first < 0.0:
            first = delta
        if not delta < 1e12 * (first + 1.0):
            return it + 1, 2
        if delta < tol:
            if _lcp_residual(indptr, indices, data, rhs, psi, fixed, u) <= res_tol:
                return it + 1, 0
    return max_iters, 1


@dataclass
class ObstacleSpec:
    psi: FieldLike
    f: FieldLike = None
    g: FieldLike = None
    compat_checked: bool = False


@dataclass
class ObstacleSolution:
    values: np.ndarray
    active_set: np.ndarray
    complementarity_residual: float
    iterations: int
    psi: np.ndarray
    residual_history: List[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def active_csv(self, prob: DiscreteProblem) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pts = prob.grid.points
        w.writerow([f"x{k + 1}" for k in range(pts.shape[1])] + ["active"])
        for p, a in zip(pts, self.active_set):
            w.writerow([repr(float(c)) for c in p] + [int(a)])
        return buf.getvalue()


def _scale(*arrays) -> float:
    m = 1.0
    for a in arrays:
        a = np.asarray(a, dtype=float)
        finite = a[np.isfinite(a)]
        if finite.size:
            m = max(m, float(np.max(np.abs(finite))))
    return m


def obstacle_rhs(prob: DiscreteProblem, spec: ObstacleSpec) -> tuple:
    """Right-hand side and obstacle values on the grid; checks ``psi <= g`` on Dirichlet nodes."""
    pts = prob.grid.points
    psi = field_values(spec.psi, pts)
    if not np.all(np.isfinite(psi)):
        raise InputError("obstacle must be finite on the grid")
    rhs = prob.rhs.copy()
    dmask = prob.dirichlet_mask
    if spec.f is not None:
        fv = field_values(spec.f, pts)
        rhs[~dmask] = np.where(prob.row_tags[~dmask] == "neumann", rhs[~dmask], fv[~dmask])
    if spec.g is not None:
        rhs[dmask] = field_values(spec.g, pts)[dmask]
    gv = rhs[dmask]
    tol = 1e-12 * _scale(gv, psi)
    bad = np.nonzero(psi[dmask] > gv + tol)[0]
    if bad.size:
        node = int(np.nonzero(dmask)[0][bad[0]])
        raise InputError(f"obstacle exceeds boundary data at Dirichlet node {node}: "
                         f"psi={psi[node]!r} > g={rhs[node]!r}")
    spec.compat_checked = True
    return rhs, psi


def complementarity_residual(matrix, rhs, u, psi, fixed) -> float:
    r = matrix @ u - rhs
    m = np.minimum(r, u - psi)
    free = ~fixed
    return float(np.max(np.abs(m[free]))) if np.any(free) else 0.0


def solve_obstacle(prob: DiscreteProblem, spec: ObstacleSpec, omega: float = DEFAULT_OMEGA,
                   tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                   u0: Optional[np.ndarray] = None, require_monotone: bool = True) -> ObstacleSolution:
    """Projected SOR on the assembled system of ``prob``.

    ``spec.f`` / ``spec.g`` override the source / Dirichlet values stored in
    ``prob.rhs`` when given.
    """
    if not 0.0 < omega < 2.0:
        raise InputError(f"omega must lie in (0, 2), got {omega}")
    if require_monotone and not prob.monotone:
        raise InputError("PSOR needs an assembly with the M-matrix sign pattern (monotone=True)")
    rhs, psi = obstacle_rhs(prob, spec)
    fixed = prob.dirichlet_mask.copy()
    m = prob.matrix.tocsr()
    m.sort_indices()
    u = np.maximum(psi, 0.0) if u0 is None else np.asarray(u0, dtype=float).copy()
    u[fixed] = rhs[fixed]
    u[~fixed] = np.maximum(u[~fixed], psi[~fixed])
    history = np.zeros(max_iters)
    iters, status = psor_kernel(m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data, rhs, psi,
                                fixed, u, float(omega), float(tol), float(10 * tol), int(max_iters), history)
    hist = history[:iters].tolist()
    if status == 2:
        raise ConvergenceError(f"PSOR diverged after {iters} sweeps (omega={omega})", hist)
    if status == 1:
        raise ConvergenceError(f"PSOR did not converge in {max_iters} sweeps (last update {hist[-1]:.3e})", hist)
    res = complementarity_residual(m, rhs, u, psi, fixed)
    active = (~fixed) & (u - psi < 10 * tol)
    return ObstacleSolution(u, active, res, iters, psi, hist,
                            {"omega": omega, "tol": tol, "rhs": rhs, "fixed": fixed})


# ---------------------------------------------------------------------------
# brute-force oracle


def _solve_with_active(m, rhs, psi, fixed, active):
    """Solve rows of inactive nodes as equations with active nodes clamped to psi."""
    u = np.zeros(rhs.size)
    clamp = active & ~fixed
    u[clamp] = psi[clamp]
    free = ~clamp
    b = rhs[free] - m[np.ix_(free, clamp)] @ u[clamp]
    u[free] = np.linalg.solve(m[np.ix_(free, free)], b)
    return u


def _feasible(m, rhs, u, psi, fixed, active, tol):
    free = ~fixed
    r = m @ u - rhs
    if np.any(u[free] < psi[free] - tol):
        return False
    if np.any(r[free & active] < -tol):
        return False
    return bool(np.all(np.abs(r[free & ~active]) <= tol))


def brute_force_obstacle(prob: DiscreteProblem, spec: ObstacleSpec, intervals_only: bool = False,
                         tol: float = 1e-9) -> tuple:
    """Exhaustive search over active sets on a small 1-d grid.

    Returns ``(u, active)`` for the unique candidate satisfying
    ``u >= psi``, ``M u - rhs >= 0`` on active nodes and ``= 0`` on inactive
    ones. Without ``intervals_only`` all ``2^n`` subsets of free nodes are
    tried (``n <= 16``); with it only contiguous runs (``n <= 25``).
    """
    rhs, psi = obstacle_rhs(prob, spec)
    fixed = prob.dirichlet_mask
    m = prob.matrix.toarray()
    free_idx = np.nonzero(~fixed)[0]
    n = free_idx.size
    if intervals_only:
        if n > 25:
            raise InputError("interval search limited to 25 free nodes")
        cands = [()]
        cands += [tuple(free_idx[i:j]) for i in range(n) for j in range(i + 1, n + 1)]
    else:
        if n > 16:
            raise InputError("full active-set enumeration limited to 16 free nodes")
        cands = (tuple(free_idx[list(c)]) for k in range(n + 1) for c in itertools.combinations(range(n), k))
    hits = []
    for cand in cands:
        active = np.zeros(rhs.size, dtype=bool)
        active[list(cand)] = True
        u = _solve_with_active(m, rhs, psi, fixed, active)
        if _feasible(m, rhs, u, psi, fixed, active, tol * _scale(rhs, psi, u)):
            hits.append((u, active))
    if not hits:
        raise InputError("no feasible active set found")
    u0 = hits[0][0]
    for u, _ in hits[1:]:
        if np.max(np.abs(u - u0)) > 1e-8 * _scale(u0):
            raise InputError("several distinct feasible active sets found")
    return hits[0]


# ---------------------------------------------------------------------------
# comparison and stability


@dataclass
class ObstacleCheck:
    name: str
    passed: bool
    max_violation: float
    bound: float = float("nan")
    detail: str = ""


def _order_violation(lo, hi, what):
    bad = np.nonzero(lo > hi + 1e-14 * _scale(lo, hi))[0]
    if bad.size:
        raise InputError(f"{what} ordering fails at node {int(bad[0])}")


def obstacle_comparison(sol1: ObstacleSolution, sol2: ObstacleSolution) -> ObstacleCheck:
    """Check ``u1 >= u2`` when data of problem 1 dominates that of problem 2."""
    r1, r2 = sol1.metadata["rhs"], sol2.metadata["rhs"]
    _order_violation(r2, r1, "source/boundary data")
    _order_violation(sol2.psi, sol1.psi, "obstacle")
    scale = _scale(r1, r2, sol1.psi, sol2.psi)
    viol = float(max(0.0, np.max(sol2.values - sol1.values)))
    return ObstacleCheck("obstacle_comparison", viol <= 1e-8 * scale, viol, 1e-8 * scale)


def obstacle_stability(sol1: ObstacleSolution, sol2: ObstacleSolution, c0: float) -> ObstacleCheck:
    """``||u1 - u2|| <= (1/c0)||f1 - f2|| v ||g1 - g2|| v ||psi1 - psi2||``."""
    if c0 <= 0:
        raise InputError("c0 must be positive")
    fixed = sol1.metadata["fixed"]
    r1, r2 = sol1.metadata["rhs"], sol2.metadata["rhs"]
    df = float(np.max(np.abs(r1 - r2)[~fixed])) if np.any(~fixed) else 0.0
    dg = float(np.max(np.abs(r1 - r2)[fixed])) if np.any(fixed) else 0.0
    dpsi = float(np.max(np.abs(sol1.psi - sol2.psi)))
    scale = _scale(r1, r2, sol1.psi, sol2.psi)
    bound = max(df / c0, dg, dpsi)
    diff = float(np.max(np.abs(sol1.values - sol2.values)))
    return ObstacleCheck("obstacle_stability", diff <= bound + 1e-8 * scale, diff, bound)


def free_boundary_crossings(prob: DiscreteProblem, sol: ObstacleSolution) -> np.ndarray:
    """Points where the active indicator flips between grid neighbours (2-d).

    Each crossing is placed by linear interpolation of ``u - psi`` between the
    two nodes, clipped to the segment.
    """
    grid = prob.grid
    if grid.dim != 2:
        raise InputError("free boundary extraction is for 2-d grids")
    gap = (sol.values - sol.psi).reshape(grid.shape[::-1]).T
    act = sol.active_set.reshape(grid.shape[::-1]).T
    xs, ys = grid.coords
    out = []
    for axis in (0, 1):
        a0 = act[:-1, :] if axis == 0 else act[:, :-1]
        a1 = act[1:, :] if axis == 0 else act[:, 1:]
        g0 = gap[:-1, :] if axis == 0 else gap[:, :-1]
        g1 = gap[1:, :] if axis == 0 else gap[:, 1:]
        for i, j in zip(*np.nonzero(a0 != a1)):
            den = g1[i, j] - g0[i, j]
            t = 0.5 if den == 0 else float(np.clip(-g0[i, j] / den, 0.0, 1.0))
            if axis == 0:
                out.append((xs[i] + t * (xs[i + 1] - xs[i]), ys[j]))
            else:
                out.append((xs[i], ys[j] + t * (ys[j + 1] - ys[j])))
    out.sort()
    return np.asarray(out, dtype=float).reshape(-1, 2)


def crossings_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2"])
    for p in points:
        w.writerow([repr(float(p[0])), repr(float(p[1]))])
    return buf.getvalue()
