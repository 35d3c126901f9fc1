"""Coefficient data for boundary-degenerate elliptic operators.

An operator acts as ``Au = -tr(a D^2 u) - <b, Du> + c u``. Coefficient
closures take an ``(n, d)`` array of points and return batched values:
``a -> (n, d, d)``, ``b -> (n, d)``, ``c -> (n,)``. ``da`` returns the row
divergence ``sum_j d a^{ij} / d x_j`` with shape ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GeometryError, InputError, NumericError, ParameterDomainError

Field = Callable[[np.ndarray], np.ndarray]

FD_STEP = np.cbrt(np.finfo(float).eps)


def as_points(x, dim: int):
    """Return ``(pts, single)`` with ``pts`` of shape ``(n, dim)``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and x.ndim == 1 and x.shape[0] != 1:
        # a flat array of 1-d points
        return x.reshape(-1, 1), False
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise GeometryError(f"point has {x.shape[0]} coordinates, operator dimension is {dim}")
        return x.reshape(1, dim), True
    if x.shape[-1] != dim:
        raise GeometryError(f"points have {x.shape[-1]} coordinates, operator dimension is {dim}")
    return x.reshape(-1, dim), False


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients ``(a, b, c)`` plus optional divergence-form ``d`` and ``da``.

    When ``da`` is missing, central differences are used and
    ``metadata["da_approximate"]`` is set.
    """

    dim: int
    a: Field
    b: Field
    c: Field
    div_d: Optional[Field] = None
    da: Optional[Field] = None
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("operator dimension must be >= 1")
        meta = dict(self.metadata)
        meta["da_approximate"] = self.da is None
        object.__setattr__(self, "metadata", meta)

    def _call(self, fn, x, tail):
        pts, single = as_points(x, self.dim)
        out = np.asarray(fn(pts), dtype=float)
        out = np.broadcast_to(out, (pts.shape[0],) + tail).copy()
        return out[0] if single else out

    def eval_a(self, x):
        return self._call(self.a, x, (self.dim, self.dim))

    def eval_b(self, x):
        return self._call(self.b, x, (self.dim,))

    def eval_c(self, x):
        return self._call(self.c, x, ())

    def eval_d(self, x):
        if self.div_d is None:
            pts, single = as_points(x, self.dim)
            z = np.zeros((pts.shape[0], self.dim))
            return z[0] if single else z
        return self._call(self.div_d, x, (self.dim,))

    def eval_da(self, x):
        """Row divergence of ``a``; analytic if supplied, else central differences."""
        if self.da is not None:
            return self._call(self.da, x, (self.dim,))
        pts, single = as_points(x, self.dim)
        out = np.zeros((pts.shape[0], self.dim))
        for j in range(self.dim):
            h = FD_STEP * (1.0 + np.abs(pts[:, j]))
            xp = pts.copy()
            xm = pts.copy()
            xp[:, j] += h
            xm[:, j] -= h
            ap = np.asarray(self.a(xp), dtype=float)
            am = np.asarray(self.a(xm), dtype=float)
            deriv = (ap[:, :, j] - am[:, :, j]) / (2.0 * h)[:, None]
            out += deriv
        if not np.all(np.isfinite(out)):
            raise NumericError(f"finite-difference derivative of a is not finite for operator {self.label!r}")
        return out[0] if single else out

    def eval_dd(self, x):
        """Divergence ``sum_j d d^j / d x_j`` of the divergence-form coefficient (central differences)."""
        pts, single = as_points(x, self.dim)
        out = np.zeros(pts.shape[0])
        if self.div_d is not None:
            for j in range(self.dim):
                h = FD_STEP * (1.0 + np.abs(pts[:, j]))
                xp = pts.copy()
                xm = pts.copy()
                xp[:, j] += h
                xm[:, j] -= h
                out += (np.asarray(self.div_d(xp))[:, j] - np.asarray(self.div_d(xm))[:, j]) / (2.0 * h)
        return out[0] if single else out

    def apply(self, x, u, du, d2u):
        """Evaluate ``Au`` pointwise from supplied derivatives.

        ``u`` has shape ``(n,)``, ``du`` ``(n, d)``, ``d2u`` ``(n, d, d)``.
        """
        pts, _ = as_points(x, self.dim)
        a = self.eval_a(pts)
        b = self.eval_b(pts)
        c = self.eval_c(pts)
        return -np.einsum("nij,nij->n", a, d2u) - np.einsum("ni,ni->n", b, du) + c * u


def min_eigenvalues(op: OperatorSpec, x) -> np.ndarray:
    """Smallest eigenvalue of the symmetric part of ``a`` at each point."""
    pts, _ = as_points(x, op.dim)
    a = op.eval_a(pts)
    return np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))[:, 0]


# ---------------------------------------------------------------------------
# built-in operators


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    sigma: float
    rho: float
    r: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterDomainError(f"kappa must be > 0, got {self.kappa}")
        if not self.theta > 0:
            raise ParameterDomainError(f"theta must be > 0, got {self.theta}")
        if self.sigma == 0 or not np.isfinite(self.sigma):
            raise ParameterDomainError(f"sigma must be nonzero, got {self.sigma}")
        if not -1.0 < self.rho < 1.0:
            raise ParameterDomainError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.r >= 0:
            raise ParameterDomainError(f"r must be >= 0, got {self.r}")
        if not np.isfinite(self.q):
            raise ParameterDomainError("q must be finite")

    @property
    def beta(self) -> float:
        return 2.0 * self.kappa * self.theta / self.sigma**2

    @property
    def mu(self) -> float:
        return 2.0 * self.kappa / self.sigma**2

    @classmethod
    def from_beta(cls, beta, kappa=1.0, sigma=0.5, rho=0.0, r=0.05, q=0.0):
        """Parameters with a prescribed ``beta = 2 kappa theta / sigma^2``."""
        if not beta > 0:
            raise ParameterDomainError(f"beta must be > 0, got {beta}")
        return cls(kappa=kappa, theta=beta * sigma**2 / (2.0 * kappa), sigma=sigma, rho=rho, r=r, q=q)


def make_heston(p: HestonParams) -> OperatorSpec:
    """Elliptic Heston operator in log-price ``x1`` and variance ``x2``."""
    a1 = 0.5 * np.array([[1.0, p.rho * p.sigma], [p.rho * p.sigma, p.sigma**2]])
    da_const = np.array([0.5 * p.rho * p.sigma, 0.5 * p.sigma**2])

    def a(x):
        return x[:, 1, None, None] * a1

    def b(x):
        y = x[:, 1]
        return np.stack([p.r - p.q - 0.5 * y, p.kappa * (p.theta - y)], axis=1)

    def c(x):
        return np.full(x.shape[0], float(p.r))

    def da(x):
        return np.broadcast_to(da_const, x.shape).copy()

    meta = {"name": "heston", "params": p, "degenerate_axis": 1, "degenerate_value": 0.0, "a1": a1}
    return OperatorSpec(2, a, b, c, da=da, label="heston", metadata=meta)


def make_kummer(alpha: float, beta: float) -> OperatorSpec:
    """``-x v'' - (beta - x) v' + alpha v`` on the half-line."""
    if not beta > 0:
        raise ParameterDomainError(f"Kummer beta must be > 0, got {beta}")
    if not alpha >= 0:
        raise ParameterDomainError(f"Kummer alpha must be >= 0, got {alpha}")

    def a(x):
        return x[:, :, None].copy()

    def b(x):
        return beta - x

    def c(x):
        return np.full(x.shape[0], float(alpha))

    def da(x):
        return np.ones_like(x)

    meta = {"name": "kummer", "alpha": alpha, "beta": beta, "degenerate_axis": 0, "degenerate_value": 0.0}
    return OperatorSpec(1, a, b, c, da=da, label="kummer", metadata=meta)


def make_dh_model(beta: float, dim: int = 2) -> OperatorSpec:
    """Model degenerate operator ``-x_d Laplace u - beta u_{x_d}``."""
    if not beta > 0:
        raise ParameterDomainError(f"beta must be > 0, got {beta}")
    if dim < 1:
        raise ParameterDomainError("dim must be >= 1")
    eye = np.eye(dim)
    e_d = eye[-1]

    def a(x):
        return x[:, -1, None, None] * eye

    def b(x):
        return np.broadcast_to(beta * e_d, x.shape).copy()

    def c(x):
        return np.zeros(x.shape[0])

    def da(x):
        return np.broadcast_to(e_d, x.shape).copy()

    meta = {"name": "dh", "beta": beta, "degenerate_axis": dim - 1, "degenerate_value": 0.0}
    return OperatorSpec(dim, a, b, c, da=da, label="dh", metadata=meta)


def make_affine(a1, b0, b1=None, c0=0.0, c1=None, a0=None) -> OperatorSpec:
    """Affine-coefficient operator ``a = a0 + x_d a1``, ``b = b0 + b1 x``, ``c = c0 + <c1, x>``.

    With ``a0 = 0`` the operator degenerates on ``{x_d = 0}``; ``a0 = I, a1 = 0``
    gives a uniformly elliptic constant-coefficient operator.
    """
    a1 = np.atleast_2d(np.asarray(a1, dtype=float))
    dim = a1.shape[0]
    a0 = np.zeros((dim, dim)) if a0 is None else np.atleast_2d(np.asarray(a0, dtype=float))
    b0 = np.atleast_1d(np.asarray(b0, dtype=float))
    b1 = np.zeros((dim, dim)) if b1 is None else np.atleast_2d(np.asarray(b1, dtype=float))
    c1 = np.zeros(dim) if c1 is None else np.atleast_1d(np.asarray(c1, dtype=float))
    for name, arr, shape in (("a0", a0, (dim, dim)), ("b0", b0, (dim,)), ("b1", b1, (dim, dim)), ("c1", c1, (dim,))):
        if arr.shape != shape:
            raise ParameterDomainError(f"{name} has shape {arr.shape}, expected {shape}")
    if not (np.allclose(a1, a1.T) and np.allclose(a0, a0.T)):
        raise ParameterDomainError("a0 and a1 must be symmetric")
    # row divergence: d/dx_j (x_d a1_ij) = a1_id
    da_const = a1[:, -1].copy()

    def a(x):
        return a0 + x[:, -1, None, None] * a1

    def b(x):
        return b0 + x @ b1.T

    def c(x):
        return c0 + x @ c1

    def da(x):
        return np.broadcast_to(da_const, x.shape).copy()

    degenerate = not np.any(a0)
    meta = {"name": "affine", "a0": a0, "a1": a1, "b0": b0, "b1": b1, "c0": c0, "c1": c1}
    if degenerate:
        meta.update(degenerate_axis=dim - 1, degenerate_value=0.0)
    return OperatorSpec(dim, a, b, c, da=da, label="affine", metadata=meta)


def with_zeroth_order(op: OperatorSpec, c: Field, label: Optional[str] = None) -> OperatorSpec:
    """Copy of ``op`` with the zeroth-order coefficient replaced (callable or constant)."""
    if not callable(c):
        const = float(c)
        c = lambda x: np.full(x.shape[0], const)
    return OperatorSpec(op.dim, op.a, op.b, c, div_d=op.div_d, da=op.da,
                        label=label or op.label, metadata=dict(op.metadata))


# ---------------------------------------------------------------------------
# drift splitting and conjugation


@dataclass(frozen=True)
class DriftSplit:
    b_perp: np.ndarray
    b_par: np.ndarray
    normal: np.ndarray


def split_drift(op: OperatorSpec, boundary, x) -> DriftSplit:
    """Normal/tangential decomposition of ``b`` relative to a boundary segment.

    ``boundary`` is a :class:`~degenerate_elliptic.boundary.BoundarySegment`.
    The inward normal of a flat segment extends constantly, so any point of the
    domain counts as lying in the tubular neighbourhood; points outside the
    segment's domain raise :class:`GeometryError`.
    """
    pts, single = as_points(x, op.dim)
    if not boundary.in_neighborhood(pts):
        raise GeometryError(f"points lie outside the neighbourhood of segment {boundary.label!r}")
    n = boundary.normal
    b = op.eval_b(pts)
    b_perp = b @ n
    b_par = b - b_perp[:, None] * n
    if single:
        return DriftSplit(b_perp[0], b_par[0], n)
    return DriftSplit(b_perp, b_par, n)


def conjugate_exponential_affine(op: OperatorSpec, h) -> OperatorSpec:
    """Operator ``A_hat`` with ``A_hat(phi u) = phi A u`` for ``phi = exp(-<h, x>)``.

    Drift becomes ``b + 2 a h`` and the zeroth-order term ``c - <b, h> - <a h, h>``.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.shape != (op.dim,):
        raise InputError(f"h must have {op.dim} components")

    def b_hat(x):
        a = np.asarray(op.a(x))
        return np.asarray(op.b(x)) + np.einsum("nij,j->ni", a + np.swapaxes(a, 1, 2), h)

    def c_hat(x):
        a = np.asarray(op.a(x))
        return np.asarray(op.c(x)) - np.asarray(op.b(x)) @ h - np.einsum("nij,i,j->n", a, h, h)

    meta = dict(op.metadata)
    meta["conjugation_h"] = h.copy()
    meta["phi"] = "exp(-<h,x>)"
    meta["base_label"] = op.label
    return OperatorSpec(op.dim, op.a, b_hat, c_hat, div_d=op.div_d, da=op.da,
                        label=f"{op.label}^h", metadata=meta)


def exponential_affine_weight(h):
    """``phi(x) = exp(-<h, x>)`` evaluated on ``(n, d)`` points."""
    h = np.atleast_1d(np.asarray(h, dtype=float))

    def phi(x):
        x = np.asarray(x, dtype=float).reshape(-1, h.size)
        return np.exp(-(x @ h))

    return phi


def check_heston_ln_condition(p: HestonParams, L: float, N: float):
    """Admissibility of ``h = (L, N)`` for the conjugated Heston operator.

    Returns ``(ok, slope_residual, constant_residual)`` where ``c_hat`` equals
    ``(y/2) * slope_residual + constant_residual``.
    """
    if L < 0 or N < 0:
        raise InputError("L and N must be non-negative")
    slope = L + 2 * p.kappa * N - L**2 - 2 * p.rho * p.sigma * L * N - p.sigma**2 * N**2
    const = p.r - p.kappa * p.theta * N - (p.r - p.q) * L
    return bool(slope >= 0 and const > 0), float(slope), float(const)


def commutator_coefficients(op: OperatorSpec, log_phi_grad: Field, log_phi_hess_term: Field):
    """Coefficients ``(f, f0)`` of the first-order operator ``B`` built from a weight ``phi``.

    ``log_phi_grad(x)`` returns ``D log phi`` with shape ``(n, d)``;
    ``log_phi_hess_term(x)`` returns ``a^{ij} phi^{-1} phi_{x_i x_j}`` with shape ``(n,)``.
    Returns closures ``f(x) -> (n, d)`` and ``f0(x) -> (n,)``.
    """

    def f(x):
        a = np.asarray(op.a(x))
        g = np.asarray(log_phi_grad(x))
        return np.einsum("nij,nj->ni", a + np.swapaxes(a, 1, 2), g)

    def f0(x):
        a = np.asarray(op.a(x))
        g = np.asarray(log_phi_grad(x))
        sym = a + np.swapaxes(a, 1, 2)
        return (np.asarray(log_phi_hess_term(x)) + np.einsum("ni,ni->n", np.asarray(op.b(x)), g)
                - np.einsum("nij,nj,ni->n", sym, g, g))

    return f, f0


def conjugate_by_commutator(op: OperatorSpec, log_phi_grad: Field, log_phi_hess_term: Field) -> OperatorSpec:
    """``A + B`` assembled from :func:`commutator_coefficients`."""
    f, f0 = commutator_coefficients(op, log_phi_grad, log_phi_hess_term)

    def b_hat(x):
        return np.asarray(op.b(x)) - f(x)

    def c_hat(x):
        return np.asarray(op.c(x)) + f0(x)

    return OperatorSpec(op.dim, op.a, b_hat, c_hat, div_d=op.div_d, da=op.da,
                        label=f"{op.label}^B", metadata=dict(op.metadata))


def quadratic_growth_constant(op: OperatorSpec, points) -> float:
    """``sup (tr a + <b, x>) / (1 + |x|^2)`` over the given points."""
    pts, _ = as_points(points, op.dim)
    a = op.eval_a(pts)
    b = op.eval_b(pts)
    num = np.trace(a, axis1=1, axis2=2) + np.einsum("ni,ni->n", b, pts)
    return float(np.max(num / (1.0 + np.sum(pts**2, axis=1))))


BUILTIN_OPERATORS = {
    "heston": make_heston,
    "kummer": make_kummer,
    "dh": make_dh_model,
    "affine": make_affine,
}
