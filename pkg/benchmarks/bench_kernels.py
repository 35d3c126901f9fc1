"""Time the jitted kernels against their interpreted ``py_func``.

    python3 benchmarks/bench_kernels.py [--repeat 3]

With ``DEGENERATE_ELLIPTIC_NO_NUMBA=1`` both columns run the Python path.
"""

import argparse
import time

import numpy as np

from degenerate_elliptic import ObstacleSpec, assemble, boundary_condition_plan, classify, make_heston
from degenerate_elliptic._accel import NUMBA_ENABLED
from degenerate_elliptic.boundary import DomainGrid
from degenerate_elliptic.obstacle import obstacle_rhs, psor_kernel
from degenerate_elliptic.operators import HestonParams
from degenerate_elliptic.special_functions import MAX_TERMS, REL_STOP, _series_kernel


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def psor_case(n):
    op = make_heston(HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=-0.5, r=0.05))
    dom = DomainGrid.uniform(((-1.0, 1.0), (0.0, 1.0)), (n, n))
    plan = boundary_condition_plan(classify(op, dom), "c2s")
    prob = assemble(op, dom, plan, f=0.0, g=0.0)
    spec = ObstacleSpec(psi=lambda x: np.maximum(0.0, 0.5 - np.abs(x[:, 0])) * (1.0 - x[:, 1]))
    rhs, psi = obstacle_rhs(prob, spec)
    m = prob.matrix.tocsr()
    m.sort_indices()
    fixed = prob.dirichlet_mask.copy()
    args = (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data, rhs, psi, fixed)

    def run(kernel):
        u = np.maximum(psi, 0.0)
        u[fixed] = rhs[fixed]
        hist = np.zeros(200_000)
        it, status = kernel(*args, u, 1.5, 1e-10, 1e-9, 200_000, hist)
        return u, it, status
    return run


def series_case(xs):
    def run(kernel):
        return np.array([kernel(1.0, 1.0, float(x), MAX_TERMS, REL_STOP)[0] for x in xs])
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"{'kernel':<24}{'jit [s]':>12}{'python [s]':>12}{'speedup':>10}{'max |diff|':>14}")

    cases = [
        ("psor 21x21", psor_case(21), psor_kernel, lambda r: r[0]),
        ("psor 31x31", psor_case(31), psor_kernel, lambda r: r[0]),
        ("kummer series x2000", series_case(np.linspace(0, 40, 2000)), _series_kernel, lambda r: r),
    ]
    for name, run, kernel, pick in cases:
        run(kernel)  # compile
        tj, rj = best_of(lambda: run(kernel), args.repeat)
        tp, rp = best_of(lambda: run(kernel.py_func), args.repeat)
        a, b = pick(rj), pick(rp)
        diff = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
        print(f"{name:<24}{tj:>12.4f}{tp:>12.4f}{tp / tj:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
