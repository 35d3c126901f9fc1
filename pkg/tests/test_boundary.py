import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenerate_elliptic import (BoundaryPlan, DomainGrid, HestonParams, InputError, boundary_condition_plan, classify,
                                 detect_degenerate_boundary, dirichlet_everywhere, fichera_function, make_affine,
                                 make_heston, make_kummer)


def test_grid_layout():
    dom = DomainGrid.uniform(((-1, 1), (0, 1)), (5, 3))
    assert dom.shape == (5, 3) and dom.n_nodes == 15
    # index = i + nx * j
    np.testing.assert_allclose(dom.points[7], [0.0, 0.5])
    assert int(dom.flat_index(np.array([2, 1]))[0]) == 7
    assert [s.label for s in dom.segments] == ["left", "right", "bottom", "top"]
    assert dom.refined(2).shape == (9, 5)
    assert dom.boundary_mask().sum() == 12


def test_grid_validation():
    with pytest.raises(InputError):
        DomainGrid.uniform([(0, 1)], [2])
    with pytest.raises(InputError):
        DomainGrid.uniform([(1, 0)], [5])
    with pytest.raises(InputError):
        DomainGrid([np.array([0.0, 0.5, 0.4])])


@pytest.mark.parametrize("beta,expected", [(0.5, "Sigma2"), (1.0, "Sigma0"), (1.5, "Sigma1")])
def test_heston_bottom_class(beta, expected):
    p = HestonParams.from_beta(beta)
    dom = DomainGrid.uniform(((-1, 1), (0, 1)), (9, 9))
    cls = classify(make_heston(p), dom)
    assert cls.sigma("bottom") == expected
    assert cls.degenerate_labels() == ["bottom"]
    for lab in ("left", "right", "top"):
        assert cls.sigma(lab) == "Sigma3"
    (e,) = cls.for_label("bottom")
    # [DERIVED] Fichera value (sigma^2/2)(beta - 1) with sigma = 0.5
    assert e.fichera_min == pytest.approx(0.125 * (beta - 1), abs=1e-14)


@given(st.floats(0.05, 3.0), st.floats(0.1, 0.9))
def test_heston_fichera_sign_matches_beta(beta, sigma):
    p = HestonParams.from_beta(beta, sigma=sigma)
    dom = DomainGrid.uniform(((-1, 1), (0, 1)), (5, 5))
    fv = fichera_function(make_heston(p), dom, "bottom", np.array([[0.3, 0.0]]))
    assert float(np.atleast_1d(fv)[0]) == pytest.approx(sigma ** 2 / 2 * (beta - 1), abs=1e-13)


def test_kummer_left_endpoint():
    dom = DomainGrid.uniform([(0, 1)], [11])
    assert detect_degenerate_boundary(make_kummer(1, 0.4), dom) == {"left": True, "right": False}
    assert classify(make_kummer(1, 0.4), dom).sigma("left") == "Sigma2"
    assert classify(make_kummer(1, 2.0), dom).sigma("left") == "Sigma1"


def test_segment_split_where_fichera_changes_sign():
    # a = y I, b = (0, x): Fichera on the bottom is x - 1
    op = make_affine(np.eye(2), np.zeros(2), b1=np.array([[0.0, 0.0], [1.0, 0.0]]))
    dom = DomainGrid.uniform(((0, 2), (0, 1)), (9, 9))
    cls = classify(op, dom, n_probe=17)
    parts = cls.for_label("bottom")
    assert [p.sigma_class for p in parts] == ["Sigma2", "Sigma0", "Sigma1"]
    assert parts[1].t_range[0] < 1.0 < parts[1].t_range[1]
    plan = boundary_condition_plan(cls, "fichera")
    assert plan.tag_at("bottom", 0.2) == "dirichlet" and plan.tag_at("bottom", 1.8) == "none"
    assert plan.as_dict()["bottom"] == "mixed"
    with pytest.raises(InputError):
        cls.sigma("bottom")


def test_conventions(heston_params):
    dom = DomainGrid.uniform(((-1, 1), (0, 1)), (9, 9))
    cls = classify(make_heston(HestonParams.from_beta(0.5)), dom)
    assert boundary_condition_plan(cls, "fichera").as_dict() == {
        "bottom": "dirichlet", "left": "dirichlet", "right": "dirichlet", "top": "dirichlet"}
    assert boundary_condition_plan(cls, "c2s").as_dict()["bottom"] == "oblique_degenerate"
    cls1 = classify(make_heston(HestonParams.from_beta(1.5)), dom)
    assert boundary_condition_plan(cls1, "fichera").as_dict()["bottom"] == "none"
    with pytest.raises(InputError):
        boundary_condition_plan(cls, "other")


def test_plan_validation_and_csv():
    with pytest.raises(InputError):
        BoundaryPlan.from_mapping({"left": "robin"})
    dom = DomainGrid.uniform([(0, 1)], [5])
    plan = dirichlet_everywhere(dom)
    assert plan.as_dict() == {"left": "dirichlet", "right": "dirichlet"}
    with pytest.raises(InputError):
        plan.tag_at("bottom")
    csv_text = classify(make_kummer(1, 1), dom).to_csv()
    assert csv_text.splitlines()[0].startswith("segment,t_lo,t_hi")
    assert "\r" not in csv_text
