"""Kummer's confluent hypergeometric function M(alpha, beta; x) by power series.

M is the regular solution of ``x v'' + (beta - x) v' - alpha v = 0`` at the
origin, which is the Kummer operator ``-x v'' - (beta - x) v' + alpha v``
with the sign flipped. Only moderate non-negative arguments are supported
(``x <= 50``); there is no asymptotic expansion and no second solution U.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import InputError, ParameterDomainError, PrecisionError

X_MAX = 50.0
MAX_TERMS = 10000
REL_STOP = 1e-16


@njit
def _series_kernel(alpha, beta, x, max_terms, rel_stop):
    # Neumaier-compensated partial sums of sum_n (alpha)_n/(beta)_n x^n/n!
    s = 1.0
    comp = 0.0
    term = 1.0
    n = 0
    converged = False
    tail = 0.0
    while n < max_terms:
        ratio = (alpha + n) / (beta + n) * x / (n + 1.0)
        term = term * ratio
        n += 1
        t = s + term
        if abs(s) >= abs(term):
            comp += (s - t) + term
        else:
            comp += (term - t) + s
        s = t
        total = s + comp
        next_ratio = abs((alpha + n) / (beta + n) * x / (n + 1.0))
        if term == 0.0:
            converged = True
            tail = 0.0
            break
        if abs(term) < rel_stop * abs(total) and next_ratio < 1.0:
            converged = True
            # geometric bound on the remaining tail
            tail = abs(term) * next_ratio / (1.0 - next_ratio)
            break
    return s + comp, n + 1, tail, converged


@dataclass(frozen=True)
class KummerEval:
    value: float
    derivative: float
    second_derivative: float
    terms_used: int
    truncation_estimate: float
    converged: bool = True


def _check(alpha, beta, x, x_max):
    if not (np.isfinite(alpha) and np.isfinite(beta) and np.isfinite(x)):
        raise InputError("alpha, beta and x must be finite")
    if beta <= 0:
        raise ParameterDomainError(f"beta must be > 0, got {beta}")
    if x < 0 or x > x_max:
        raise InputError(f"x must lie in [0, {x_max}], got {x}")


def kummer_series(alpha: float, beta: float, x: float, x_max: float = X_MAX):
    """``(value, terms_used, tail_estimate)`` of the series for M(alpha, beta; x)."""
    _check(alpha, beta, x, x_max)
    val, terms, tail, ok = _series_kernel(float(alpha), float(beta), float(x), MAX_TERMS, REL_STOP)
    if not ok:
        raise PrecisionError(f"Kummer series did not converge in {MAX_TERMS} terms "
                             f"(alpha={alpha}, beta={beta}, x={x})")
    return val, terms, tail


def kummer_M(alpha: float, beta: float, x: float, x_max: float = X_MAX) -> KummerEval:
    """Evaluate M and its first two x-derivatives.

    Derivatives use ``M'(a, b; x) = (a / b) M(a + 1, b + 1; x)`` once and twice.
    """
    m0, n0, t0 = kummer_series(alpha, beta, x, x_max)
    m1, n1, t1 = kummer_series(alpha + 1, beta + 1, x, x_max)
    m2, n2, t2 = kummer_series(alpha + 2, beta + 2, x, x_max)
    c1 = alpha / beta
    c2 = alpha * (alpha + 1) / (beta * (beta + 1))
    return KummerEval(m0, c1 * m1, c2 * m2, max(n0, n1, n2), t0)


def kummer_table(alpha: float, beta: float, xs) -> np.ndarray:
    """Array with columns ``x, M, M', M''``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty((xs.size, 4))
    for k, x in enumerate(xs):
        ev = kummer_M(alpha, beta, x)
        out[k] = (x, ev.value, ev.derivative, ev.second_derivative)
    return out


def kummer_ode_residual(alpha: float, beta: float, x: float) -> float:
    """``|-x M'' - (beta - x) M' + alpha M|``."""
    ev = kummer_M(alpha, beta, x)
    return abs(-x * ev.second_derivative - (beta - x) * ev.derivative + alpha * ev.value)


def verify_kummer_ode(alpha: float, beta: float, x, rtol: float = 1e-10):
    """Return ``(max residual, ok)`` over the points ``x``; ``ok`` uses ``rtol (1 + |M|)``."""
    worst = 0.0
    ok = True
    for xv in np.atleast_1d(np.asarray(x, dtype=float)):
        ev = kummer_M(alpha, beta, xv)
        res = abs(-xv * ev.second_derivative - (beta - xv) * ev.derivative + alpha * ev.value)
        worst = max(worst, res)
        if res > rtol * (1.0 + abs(ev.value)):
            ok = False
    return worst, ok


def boundary_row_residual(alpha: float, beta: float, h: float) -> float:
    """Two-point degenerate row ``-beta (M(h) - M(0)) / h + alpha M(0)`` on exact samples.

    The exact value is zero (the ODE at x = 0); the discrete one is O(h).
    """
    m0 = kummer_M(alpha, beta, 0.0).value
    mh = kummer_M(alpha, beta, h).value
    return -beta * (mh - m0) / h + alpha * m0


def singular_proxy(beta: float, x):
    """``v = x^(1 - beta)`` with ``v'`` and ``x v''``.

    ``v`` solves ``x v'' + beta v' = 0`` like the leading behaviour of the
    second Kummer solution near 0 for beta < 1, but ``x v''`` does not vanish
    as ``x -> 0`` for beta not in {0, 1}, so ``v`` is not in the class of
    functions whose second-order term vanishes on the degenerate boundary.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InputError("singular_proxy needs x > 0")
    v = x ** (1.0 - beta)
    dv = (1.0 - beta) * x ** (-beta)
    x_d2v = -beta * (1.0 - beta) * x ** (-beta)
    return v, dv, x_d2v


def gamma_ratio(beta: float, mu: float) -> float:
    """``int_0^inf y^(beta-1) e^(-mu y) dy = Gamma(beta) / mu^beta``."""
    return math.gamma(beta) / mu ** beta
