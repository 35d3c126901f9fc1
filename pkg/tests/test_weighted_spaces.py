import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammainc

from degenerate_elliptic import HestonParams, InputError, NumericError, make_affine, make_heston
from degenerate_elliptic.weighted_spaces import (QuadratureRule, axis_rule, bilinear_form, bump,
                                                 continuity_garding_ensemble, degeneracy_constant,
                                                 divergence_coefficients, heston_bilinear_setup, heston_normalized,
                                                 heston_weight, ibp_discrepancy, lambda_exponent, norm_H1w,
                                                 norm_H2w, norm_L2w, operator_inner, power_weight,
                                                 probe_sobolev_inequality, sobolev_exponent, trig_field, unit_weight,
                                                 verify_ibp)


@pytest.mark.parametrize("beta", [0.3, 0.6, 1.0, 1.4, 2.5])
def test_singular_gamma_integral(beta):
    ws = heston_weight(beta, 0.0, 1.0, dim=1)
    q = QuadratureRule.for_weight([(0.0, 2.0)], ws, panels=4, order=12)
    got = q.integrate(ws.w(q.nodes))
    # [DERIVED] int_0^2 y^(beta-1) e^-y dy = Gamma(beta) P(beta, 2)
    assert got == pytest.approx(math.gamma(beta) * gammainc(beta, 2.0), rel=1e-12)


def test_kink_integral_with_break():
    ws = heston_weight(1.0, gamma=0.7, mu=1.0, dim=2)
    q = QuadratureRule.for_weight(((-1.0, 1.0), (0.0, 1.0)), ws, panels=2, order=10)
    got = q.integrate(ws.w(q.nodes))
    # [DERIVED] (2(1 - e^-0.7)/0.7) (1 - e^-1)
    assert got == pytest.approx(2 * (1 - math.exp(-0.7)) / 0.7 * (1 - math.exp(-1.0)), rel=1e-13)


@given(st.floats(-3.0, 3.0), st.floats(0.1, 5.0), st.integers(1, 6), st.integers(2, 14))
def test_axis_rule_polynomial_exactness(lo, length, panels, order):
    x, w = axis_rule(lo, lo + length, panels, order)
    assert np.all(np.diff(x) > 0) and np.all(w > 0)
    assert w.sum() == pytest.approx(length, rel=1e-12)
    k = min(2 * order - 1, 5)
    exact = ((lo + length) ** (k + 1) - lo ** (k + 1)) / (k + 1)
    assert np.dot(w, x ** k) == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_integrate_rejects_nonfinite():
    q = QuadratureRule.build([(0.0, 1.0)], 2, 4)
    with pytest.raises(NumericError):
        q.integrate(np.full(q.nodes.shape[0], np.nan))


def test_norms_of_linear_function():
    ws = unit_weight(2)
    q = QuadratureRule.build(((0.0, 1.0), (0.0, 1.0)), 2, 6)
    u = lambda x: x[:, 0]
    du = lambda x: np.tile([1.0, 0.0], (x.shape[0], 1))
    d2u = lambda x: np.zeros((x.shape[0], 2, 2))
    assert norm_L2w(u, ws, q) == pytest.approx(math.sqrt(1 / 3), rel=1e-14)
    # [DERIVED] theta = 1: int (|Du|^2 + 2 u^2) = 1 + 2/3
    assert norm_H1w(u, du, ws, q) == pytest.approx(math.sqrt(5 / 3), rel=1e-14)
    # [DERIVED] (1 + theta^2)(|Du|^2 + u^2) = 2(1 + x^2): 8/3
    assert norm_H2w(u, du, d2u, ws, q) == pytest.approx(math.sqrt(8 / 3), rel=1e-14)
    val, err = norm_L2w(u, ws, q, estimate_error=True)
    assert err < 1e-14


def test_exponents_exact():
    assert sobolev_exponent(2, Fraction(1, 2), 2) == Fraction(4)
    assert sobolev_exponent(2, 1, 2) == Fraction(2)
    assert lambda_exponent(3, 4) == Fraction(1, 3)
    assert lambda_exponent(2, 2) == 1
    assert sobolev_exponent(2.0, 0.5, 2) == pytest.approx(4.0)
    with pytest.raises(InputError):
        sobolev_exponent(2, -1, 2)
    with pytest.raises(InputError):
        lambda_exponent(5, 4)


def test_weight_validation():
    with pytest.raises(InputError):
        heston_weight(0.0)
    with pytest.raises(InputError):
        power_weight(-1.5)


def test_heston_normalization(heston_params):
    pn = heston_normalized(heston_params)
    assert pn.r - pn.q - pn.rho * pn.kappa * pn.theta / pn.sigma == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("beta,gamma,rho", [(0.6, 0.5, -0.5), (1.4, 0.0, 0.3), (2.0, 1.0, 0.0)])
def test_heston_bilinear_drift_closed_form(beta, gamma, rho):
    p = HestonParams.from_beta(beta, kappa=1.0, sigma=0.5, rho=rho)
    op, ws, _, _ = heston_bilinear_setup(p, gamma)
    co = divergence_coefficients(op, ws)
    pts = np.array([[0.4, 0.3], [-0.7, 1.2]])
    y, sx = pts[:, 1], np.sign(pts[:, 0])
    k, s = p.kappa, p.sigma
    # [DERIVED] b1 = y(gamma/2 sign x + rho kappa/sigma - 1/2), b2 = (gamma/2) y sign(x) rho sigma
    np.testing.assert_allclose(co.b(pts)[:, 0], y * (gamma / 2 * sx + rho * k / s - 0.5), atol=1e-13)
    np.testing.assert_allclose(co.b(pts)[:, 1], gamma / 2 * y * sx * rho * s, atol=1e-13)
    np.testing.assert_allclose(co.b_tilde(pts), op.eval_b(pts), atol=1e-13)
    np.testing.assert_allclose(co.c_tilde(pts), op.eval_c(pts), atol=1e-13)


def test_ibp_identity_pair():
    op = make_affine(np.zeros((2, 2)), np.array([0.3, -0.2]), c0=1.0, a0=np.eye(2))
    ws = unit_weight(2)
    u = bump([0.1, 0.5], 0.4)
    v = bump([0.2, 0.6], 0.3)
    q = QuadratureRule.build(v.support, 8, 16)
    assert ibp_discrepancy(op, ws, u, v, q) < 1e-8
    assert bilinear_form(op, ws, u, v, q) == pytest.approx(operator_inner(op, ws, u, v, q), rel=1e-7)


@given(st.integers(0, 10_000))
def test_ibp_random_seeds_heston(seed):
    op, ws, _, _ = heston_bilinear_setup(HestonParams.from_beta(0.8, kappa=1.0, sigma=0.5, rho=-0.3), 0.5)
    rep = verify_ibp(op, ws, ((-1.0, 1.0), (0.0, 2.0)), trials=2, seed=seed, degenerate_axis=1)
    assert rep.summary["max_discrepancy"] < 1e-6


def test_trig_field_derivatives():
    f = trig_field([1.0, 2.0], 0.3)
    x = np.array([[0.2, 0.1]])
    h = 1e-5
    num = (f.value(x + [h, 0]) - f.value(x - [h, 0])) / (2 * h)
    assert num[0] == pytest.approx(f.grad(x)[0, 0], rel=1e-8)


def test_continuity_and_garding():
    op, ws, p, _ = heston_bilinear_setup(HestonParams.from_beta(1.2, kappa=1.0, sigma=0.5, rho=-0.5), 0.5)
    rep = continuity_garding_ensemble(op, ws, ((-1.0, 1.0), (0.0, 2.0)), trials=15, seed=1, degenerate_axis=1)
    s = rep.summary
    assert s["continuity_ok"] and s["garding_ok"]
    a1 = 0.5 * np.array([[1.0, p.rho * p.sigma], [p.rho * p.sigma, p.sigma ** 2]])
    assert s["degeneracy_constant"] == pytest.approx(np.linalg.eigvalsh(a1)[0], rel=1e-12)
    assert s["C3_needed"] <= s["C3"]
    assert rep.to_csv().startswith("trial,continuity_ratio")


def test_degeneracy_rayleigh_above_eig(heston_params):
    op = make_heston(heston_params)
    pts = np.random.default_rng(0).uniform([-1, 0.01], [1, 1], size=(20, 2))
    c_eig, c_ray = degeneracy_constant(op, heston_weight(1.0), pts)
    assert c_ray >= c_eig - 1e-14


def test_sobolev_probe_small():
    rep = probe_sobolev_inequality(0.0, 0.5, 2.0, trials=20, seed=3)
    s = rep.summary
    assert s["finite"] and s["q"] == 4.0 and s["drift"] < 0.1
    with pytest.raises(InputError):
        probe_sobolev_inequality(0.0, 0.5, 2.0, q=3.0, trials=2)


def test_ibp_with_divergence_coefficient_d():
    from degenerate_elliptic.operators import OperatorSpec
    from degenerate_elliptic.weighted_spaces import DivergenceCoefficients
    op, ws, _, _ = heston_bilinear_setup(HestonParams.from_beta(0.8, kappa=1.0, sigma=0.5, rho=-0.3), 0.5)
    d = lambda x: np.stack([0.3 * x[:, 1] * np.cos(x[:, 0]), 0.2 * x[:, 1] ** 2], axis=1)
    op_d = OperatorSpec(2, op.a, op.b, op.c, div_d=d, da=op.da)
    rep = verify_ibp(op_d, ws, ((-1.0, 1.0), (0.0, 2.0)), trials=5, seed=0, degenerate_axis=1)
    assert rep.summary["max_discrepancy"] < 1e-9
    # dropping d from the drift map breaks the identity
    co = divergence_coefficients(op_d, ws)
    wrong = DivergenceCoefficients(lambda x: co.b(x) + co.d(x), co.c, co.d, co.b_tilde, co.c_tilde)
    u, v = bump([0.1, 0.3], 0.5), bump([0.0, 0.4], 0.45)
    q = QuadratureRule.for_weight(((-1.0, 1.0), (0.0, 2.0)), ws, 8, 16)
    lhs = bilinear_form(op_d, ws, u, v, q, coeffs=wrong)
    rhs = operator_inner(op_d, ws, u, v, q)
    assert abs(lhs - rhs) / (abs(lhs) + abs(rhs)) > 1e-3
