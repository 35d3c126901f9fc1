import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenerate_elliptic import (GeometryError, HestonParams, InputError, ParameterDomainError,
                                 check_heston_ln_condition, make_affine, make_dh_model, make_heston, make_kummer)
from degenerate_elliptic.boundary import DomainGrid
from degenerate_elliptic.operators import (OperatorSpec, commutator_coefficients, conjugate_by_commutator,
                                           conjugate_exponential_affine, min_eigenvalues, quadratic_growth_constant,
                                           split_drift, with_zeroth_order)
from degenerate_elliptic.verification import conjugation_identity_error


def test_heston_derived_constants(heston_params):
    # [DERIVED] beta = 2*1.5*0.04/0.09, mu = 2*1.5/0.09
    assert heston_params.beta == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert heston_params.mu == pytest.approx(100.0 / 3.0, rel=1e-14)


@pytest.mark.parametrize("kw", [dict(kappa=0), dict(theta=-1), dict(sigma=0), dict(rho=1.0), dict(r=-0.1)])
def test_heston_rejects_bad_parameters(kw):
    base = dict(kappa=1.0, theta=0.04, sigma=0.3, rho=0.0, r=0.05)
    base.update(kw)
    with pytest.raises(ParameterDomainError):
        HestonParams(**base)


@given(st.floats(0.05, 3.0), st.floats(0.1, 2.0), st.floats(0.1, 1.0))
def test_from_beta_roundtrip(beta, kappa, sigma):
    p = HestonParams.from_beta(beta, kappa=kappa, sigma=sigma)
    assert p.beta == pytest.approx(beta, rel=1e-12)


def test_heston_coefficients_at_point(heston_params):
    op = make_heston(heston_params)
    x = np.array([0.3, 0.2])
    # [DERIVED] a = (y/2)[[1, rho sigma], [rho sigma, sigma^2]]
    np.testing.assert_allclose(op.eval_a(x), 0.1 * np.array([[1.0, -0.15], [-0.15, 0.09]]), rtol=1e-14)
    # [DERIVED] b = (r - q - y/2, kappa(theta - y))
    np.testing.assert_allclose(op.eval_b(x), [0.05 - 0.1, 1.5 * (0.04 - 0.2)], rtol=1e-14)
    assert op.eval_c(x) == pytest.approx(0.05)
    np.testing.assert_allclose(op.eval_da(x), [-0.075, 0.045], rtol=1e-14)


def test_numeric_da_matches_analytic(heston_params):
    op = make_heston(heston_params)
    bare = OperatorSpec(2, op.a, op.b, op.c)
    pts = np.random.default_rng(0).uniform([-1, 0], [1, 1], size=(20, 2))
    np.testing.assert_allclose(bare.eval_da(pts), op.eval_da(pts), atol=1e-9)
    assert bare.metadata["da_approximate"] and not op.metadata["da_approximate"]


def test_kummer_annihilates_exponential():
    op = make_kummer(1.0, 1.0)
    x = np.linspace(0, 3, 7)
    e = np.exp(x)
    out = op.apply(x, e, e[:, None], e[:, None, None])
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_kummer_and_dh_parameter_domain():
    with pytest.raises(ParameterDomainError):
        make_kummer(1.0, 0.0)
    with pytest.raises(ParameterDomainError):
        make_dh_model(-1.0)


def test_dimension_mismatch_raises():
    op = make_dh_model(1.0, dim=2)
    with pytest.raises(GeometryError):
        op.eval_a(np.zeros(3))


def test_affine_operator_degenerate_flag():
    deg = make_affine(np.eye(2), np.zeros(2))
    ell = make_affine(np.zeros((2, 2)), np.zeros(2), a0=np.eye(2))
    assert deg.metadata["degenerate_axis"] == 1
    assert "degenerate_axis" not in ell.metadata
    np.testing.assert_allclose(ell.eval_a(np.array([[0.3, 0.0]])), [np.eye(2)])
    with pytest.raises(ParameterDomainError):
        make_affine(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))


def test_min_eigenvalue_of_heston(heston_params):
    op = make_heston(heston_params)
    lam = min_eigenvalues(op, np.array([[0.0, 1.0], [0.0, 0.0]]))
    a1 = 0.5 * np.array([[1.0, -0.15], [-0.15, 0.09]])
    assert lam[0] == pytest.approx(np.linalg.eigvalsh(a1)[0], rel=1e-12)
    assert lam[1] == pytest.approx(0.0, abs=1e-15)


def test_with_zeroth_order_constant(heston_params):
    op = with_zeroth_order(make_heston(heston_params), -1.0)
    np.testing.assert_allclose(op.eval_c(np.zeros((3, 2))), -1.0)


def test_split_drift_bottom_segment(heston_params):
    op = make_heston(heston_params)
    dom = DomainGrid.uniform(((-1, 1), (0, 1)), (5, 5))
    seg = dom.segment("bottom")
    sp = split_drift(op, seg, np.array([0.2, 0.0]))
    # [DERIVED] inward normal e_2, b_perp = kappa theta = 0.06
    assert sp.b_perp == pytest.approx(0.06)
    np.testing.assert_allclose(sp.b_par, [0.05, 0.0])
    with pytest.raises(GeometryError):
        split_drift(op, seg, np.array([0.2, -0.5]))


def test_ln_condition_values(heston_params):
    # [DERIVED] L = 0.5, N = 0: slope 0.5 - 0.25 = 0.25, const 0.05 - 0.05*0.5 = 0.025
    ok, slope, const = check_heston_ln_condition(heston_params, 0.5, 0.0)
    assert ok and slope == pytest.approx(0.25) and const == pytest.approx(0.025)
    with pytest.raises(InputError):
        check_heston_ln_condition(heston_params, -1.0, 0.0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_ln_condition_matches_conjugated_c(L, N):
    p = HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=-0.5, r=0.05)
    _, slope, const = check_heston_ln_condition(p, L, N)
    ah = conjugate_exponential_affine(make_heston(p), [L, N])
    y = np.array([[0.0, 0.0], [0.3, 0.7], [-1.0, 2.0]])
    np.testing.assert_allclose(ah.eval_c(y), 0.5 * y[:, 1] * slope + const, atol=1e-12)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_conjugation_identity(L, N):
    p = HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=-0.5, r=0.05)
    pts = np.random.default_rng(3).uniform([-1, 0], [1, 1], size=(30, 2))
    assert conjugation_identity_error(make_heston(p), [L, N], pts) < 1e-12


def test_commutator_matches_exponential_conjugation(heston_params):
    op = make_heston(heston_params)
    h = np.array([0.3, 0.4])
    # phi = exp(-<h,x>): D log phi = -h, a^{ij} phi_ij / phi = <a h, h>
    grad = lambda x: np.broadcast_to(-h, x.shape)
    hess = lambda x: np.einsum("nij,i,j->n", op.eval_a(x), h, h)
    ab = conjugate_by_commutator(op, grad, hess)
    ah = conjugate_exponential_affine(op, h)
    pts = np.random.default_rng(1).uniform([-1, 0], [1, 1], size=(10, 2))
    np.testing.assert_allclose(ab.eval_b(pts), ah.eval_b(pts), atol=1e-14)
    np.testing.assert_allclose(ab.eval_c(pts), ah.eval_c(pts), atol=1e-14)
    f, f0 = commutator_coefficients(op, grad, hess)
    assert f(pts).shape == (10, 2) and f0(pts).shape == (10,)


def test_quadratic_growth_constant_finite(heston_params):
    op = make_heston(heston_params)
    ks = [quadratic_growth_constant(op, DomainGrid.uniform(((-X, X), (0, X)), (20 * X + 1, 10 * X + 1)).points)
          for X in (1, 4, 16)]
    assert all(np.isfinite(ks))
    assert ks[0] <= ks[1] + 1e-12 <= ks[2] + 2e-12
