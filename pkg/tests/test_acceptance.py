"""The ten acceptance criteria at their stated tolerances.

Each test prints one ``[criterion N] PASS|FAIL ...`` line; run with ``-s`` to
see them (``pytest tests/test_acceptance.py -s``).
"""

import time

import numpy as np
import pytest

from degenerate_elliptic import (DomainGrid, HestonParams, ObstacleSpec, assemble, boundary_condition_plan,
                                 brute_force_obstacle, classify, kummer_M, make_heston, make_kummer, solve_obstacle)
from degenerate_elliptic.fdsolver import refine_study
from degenerate_elliptic.obstacle import obstacle_comparison, obstacle_stability
from degenerate_elliptic.operators import make_affine, with_zeroth_order
from degenerate_elliptic.verification import (check_apriori_bound, check_hopf, check_weak_mp, trial_rngs,
                                              truncated_domain_study)
from degenerate_elliptic.weighted_spaces import (heston_bilinear_setup, probe_sobolev_inequality, unit_weight,
                                                 verify_ibp)

HESTON = HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=-0.5, r=0.05)
HESTON_BOX = ((-1.0, 1.0), (0.0, 1.0))


def report(n, ok, msg):
    print(f"[criterion {n}] {'PASS' if ok else 'FAIL'} {msg}")
    assert ok, msg


def heston_problem(n=31, op=None):
    op = op or make_heston(HESTON)
    dom = DomainGrid.uniform(HESTON_BOX, (n, n))
    plan = boundary_condition_plan(classify(make_heston(HESTON), dom), "c2s")
    return op, dom, plan


def test_criterion_01_kummer_exactness():
    t0 = time.perf_counter()
    op = make_kummer(1.0, 1.0)
    dom = DomainGrid.uniform([(0.0, 1.0)], [129])
    plan = {"left": "oblique_degenerate", "right": "dirichlet"}
    st = refine_study(op, dom, plan, f=0.0, g=np.e, levels=4, oracle=lambda x: np.exp(x[:, 0]))
    dt = time.perf_counter() - t0
    err = st.errors[-1]
    order = float(np.min(st.orders))
    ok = err <= 5e-3 and order >= 0.9 and dt < 5.0 and st.n_nodes[-1] == 1025
    report(1, ok, f"sup-error {err:.3e} at 1024 intervals, min order {order:.3f}, {dt:.2f}s")


def test_criterion_02_fichera_classification():
    t0 = time.perf_counter()
    dom = DomainGrid.uniform(((-1.0, 1.0), (0.0, 1.0)), (11, 11))
    got, vals = [], []
    for beta in (0.5, 1.0, 1.5):
        p = HestonParams.from_beta(beta)
        cls = classify(make_heston(p), dom)
        (e,) = cls.for_label("bottom")
        got.append(e.sigma_class)
        expect = p.sigma ** 2 / 2 * (beta - 1)
        vals.append(abs(e.fichera_min - expect) + abs(e.fichera_max - expect))
    kum = []
    for beta in (0.5, 1.0, 1.5):
        (e,) = classify(make_kummer(1.0, beta), DomainGrid.uniform([(0.0, 1.0)], [11])).for_label("left")
        kum.append((e.sigma_class, np.sign(e.fichera_max) == np.sign(beta - 1)))
    dt = time.perf_counter() - t0
    ok = (got == ["Sigma2", "Sigma0", "Sigma1"] and max(vals) < 1e-12
          and [k[0] for k in kum] == ["Sigma2", "Sigma0", "Sigma1"] and all(k[1] for k in kum) and dt < 1.0)
    report(2, ok, f"Heston bottom {got}, Kummer left {[k[0] for k in kum]}, {dt:.2f}s")


def test_criterion_03_weak_maximum_principle():
    t0 = time.perf_counter()
    op, dom, plan = heston_problem()
    rep = check_weak_mp(op, dom, plan, trials=50, seed=0, tol=1e-10)
    neg = check_weak_mp(with_zeroth_order(op, -1.0), dom, plan, trials=50, seed=0, tol=1e-10)
    dt = time.perf_counter() - t0
    ok = rep.passed and not neg.skipped and neg.failures >= 1 and dt < 30.0
    report(3, ok, f"{rep.failures}/50 violations, control c=-1 {neg.failures}/50 violations, {dt:.2f}s")


def test_criterion_04_apriori_bound():
    op, dom, plan = heston_problem()
    rep = check_apriori_bound(op, dom, plan, c0=0.05, trials=50, seed=0, tol=1e-8)
    report(4, rep.passed, f"{rep.failures}/50 violations, max ratio to bound "
                          f"{rep.details['max_ratio_to_bound']:.3f}")


def _heston_obstacle_spec(amp=0.5, shift=0.0, f=None, g=None):
    return ObstacleSpec(psi=lambda x: amp * np.maximum(0.0, 0.5 - np.abs(x[:, 0] - shift)) * (1.0 - x[:, 1]),
                        f=f, g=g)


def test_criterion_05_obstacle():
    op, dom, plan = heston_problem()
    prob = assemble(op, dom, plan, f=0.0, g=0.0)
    sol = solve_obstacle(prob, _heston_obstacle_spec(), omega=1.5, tol=1e-10)
    res_ok = sol.complementarity_residual <= 1e-8

    kop = make_kummer(1.0, 1.0)
    kdom = DomainGrid.uniform([(0.0, 1.0)], [21])
    kprob = assemble(kop, kdom, {"left": "oblique_degenerate", "right": "dirichlet"}, f=0.0, g=np.e)
    diffs = []
    for level in (0.5, 2.0):
        spec = ObstacleSpec(psi=level)
        ks = solve_obstacle(kprob, spec, omega=1.2, tol=1e-12)
        ub, active = brute_force_obstacle(kprob, ObstacleSpec(psi=level), intervals_only=True)
        diffs.append(float(np.max(np.abs(ks.values - ub))))
    oracle_ok = max(diffs) <= 1e-8

    comp_fail = stab_fail = 0
    pts = dom.points
    for t, rng in enumerate(trial_rngs(5, 50)):
        a1, a2 = rng.uniform(0.2, 1.0, size=2)
        s = rng.uniform(-0.3, 0.3)
        f1 = -rng.uniform(0.0, 1.0) * np.exp(-np.sum((pts - rng.uniform([-1, 0], [1, 1])) ** 2, axis=1) / 0.1)
        df = rng.uniform(0.0, 0.5)
        hi = solve_obstacle(prob, _heston_obstacle_spec(max(a1, a2), s, f=f1 + df, g=0.0))
        lo = solve_obstacle(prob, _heston_obstacle_spec(min(a1, a2), s, f=f1, g=0.0))
        comp_fail += not obstacle_comparison(hi, lo).passed
        stab_fail += not obstacle_stability(hi, lo, c0=HESTON.r).passed
    ok = res_ok and oracle_ok and comp_fail == 0 and stab_fail == 0
    report(5, ok, f"PSOR residual {sol.complementarity_residual:.2e}, Kummer oracle diff {max(diffs):.2e}, "
                  f"comparison {comp_fail}/50, stability {stab_fail}/50 failures")


def test_criterion_06_integration_by_parts():
    identity = make_affine(np.zeros((2, 2)), np.zeros(2), c0=1.0, a0=np.eye(2))
    worst = {"a=I,w=1": verify_ibp(identity, unit_weight(2), ((-1.0, 1.0), (0.0, 2.0)), trials=20, seed=0)
             .summary["max_discrepancy"]}
    for beta in (0.6, 1.4):
        op, ws, _, _ = heston_bilinear_setup(HestonParams.from_beta(beta, kappa=1.0, sigma=0.5, rho=-0.5), gamma=0.5)
        rep = verify_ibp(op, ws, ((-1.0, 1.0), (0.0, 2.0)), trials=20, seed=0, degenerate_axis=1)
        worst[f"heston beta={beta}"] = rep.summary["max_discrepancy"]
    ok = max(worst.values()) <= 1e-6
    report(6, ok, ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()))


def test_criterion_07_kummer_series():
    xs = np.linspace(0.0, 20.0, 201)
    rel = max(abs(kummer_M(1.0, 1.0, x).value - np.exp(x)) / np.exp(x) for x in xs)
    bd = 0.0
    for a, b in ((1.0, 1.0), (0.5, 1.5), (2.0, 0.7), (0.0, 3.0)):
        ev = kummer_M(a, b, 0.0)
        bd = max(bd, abs(ev.value - 1), abs(ev.derivative - a / b),
                 abs(ev.second_derivative - a * (a + 1) / (b * (b + 1))))
    ok = rel <= 1e-12 and bd <= 1e-14
    report(7, ok, f"max rel error vs exp {rel:.2e}, boundary identities {bd:.1e}")


def test_criterion_08_hopf():
    k, alpha, beta = -1.0, 1.0, 1.0
    op = make_kummer(alpha, beta)
    dom = DomainGrid.uniform([(0.0, 1.0)], [65])
    plan = {"left": "oblique_degenerate", "right": "dirichlet"}
    exact = k * alpha / beta
    rep = check_hopf(op, dom, plan, x0=[0.0], axis=0, f=0.0, g=k * kummer_M(alpha, beta, 1.0).value,
                     stability=0.2, exact=exact)
    d = rep.details
    ok = rep.passed and d["quotient_fine"] < 0
    report(8, ok, f"inward quotients {d['quotient_coarse']:.4f} -> {d['quotient_fine']:.4f} (exact {exact}), "
                  f"change {d['relative_change']:.3f}")


def test_criterion_09_sobolev_probe():
    rep = probe_sobolev_inequality(s=0.0, xi=0.5, p=2.0, q=4.0, trials=200, seed=0)
    s = rep.summary
    ok = bool(s["finite"]) and s["drift"] < 0.1
    report(9, ok, f"C_emp {s['C_emp']:.4f}, drift {s['drift']:.2e}, q {s['q']}")


def test_criterion_10_truncated_domain():
    p = HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=0.0, r=0.05)
    op = make_heston(p)

    def plan(grid):
        return boundary_condition_plan(classify(op, grid), "c2s")

    f = lambda x: -np.exp(-(x[:, 0] ** 2 + (x[:, 1] - 0.3) ** 2) / 0.02)
    st = truncated_domain_study(op, plan, f, 0.0, spacing=0.05, x_half=(2, 4, 8), y_top=(2, 4, 8),
                                core=((-0.5, 0.5), (0.0, 0.5)))
    last = st["relative_changes"][-1]
    ok = last <= 1e-3 and st["monotone"]
    report(10, ok, "relative core changes " + ", ".join(f"{c:.2e}" for c in st["relative_changes"]))
