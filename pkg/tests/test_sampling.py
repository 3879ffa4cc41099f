import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regulus.errors import BadSpec, EvalFailed, MissingJets
from regulus.poly import MultiPoly
from regulus.sampling import (fd_jet, fd_jets, make_region, multi_indices, poly_jets, seminorm_estimate,
                              seminorm_from_jets)


def box(lo, hi, h):
    return make_region({"kind": "box", "lo": lo, "hi": hi, "h": h})


# regions


def test_box_grid_points():
    L = box([0.0], [1.0], 0.5)
    assert np.allclose(L.points[:, 0], [0.0, 0.5, 1.0])


def test_ball_contains_center_and_stays_inside():
    B = make_region({"kind": "ball", "center": [0.0, 0.0], "radius": 1.0, "h": 1.0})
    assert any(np.allclose(p, [0, 0]) for p in B.points)
    assert np.all(np.linalg.norm(B.points, axis=1) <= 1.0 + 1e-12)


def test_explicit_points_distance():
    P = make_region({"kind": "points", "points": [[0.0, 0.0]]})
    assert len(P.points) == 1
    assert P.dist(np.array([[1.0, 0.0]]))[0] == 1.0


def test_product_of_boxes():
    R = make_region({"kind": "product", "factors": [
        {"kind": "box", "lo": [0.0], "hi": [1.0], "h": 0.5},
        {"kind": "box", "lo": [2.0], "hi": [3.0], "h": 0.25}]})
    assert R.dim == 2 and len(R.points) == 3 * 5
    assert np.all(R.membership(R.points))


@pytest.mark.parametrize("spec", [{}, {"kind": "torus"}, {"kind": "box", "lo": [0], "hi": [1], "h": 0},
                                  {"kind": "box", "lo": [0, 0], "hi": [1], "h": 0.1},
                                  {"kind": "points", "points": []}])
def test_bad_specs(spec):
    with pytest.raises(BadSpec):
        make_region(spec)


def test_default_resolution_has_33_samples_per_edge():
    L = make_region({"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 2.0]})
    assert min(len(a) for a in L.grid_axes) >= 33


def test_members_and_bbox():
    for L in [box([-1, 0], [1, 2], 0.1),
              make_region({"kind": "ball", "center": [1.0, -1.0, 0.5], "radius": 0.7, "h": 0.1})]:
        assert np.all(L.membership(L.points))
        assert np.all(L.points >= L.lo - 1e-12) and np.all(L.points <= L.hi + 1e-12)


def test_box_boundary_and_components():
    L = box([0.0, 0.0], [1.0, 1.0], 0.25)
    assert L.boundary_mask().sum() == 16
    two = L.subregion(np.abs(L.points[:, 0] - 0.5) > 0.3)
    assert two.component_labels().max() == 1


# finite differences


def test_fd_first_derivative_of_square():
    jet = fd_jet(lambda X: X[:, 0] ** 2, [1.0], 1, step=1e-4)
    assert abs(jet[(1,)][0] - 2.0) < 1e-6


def test_fd_constant_has_zero_derivatives():
    jet = fd_jet(lambda X: np.full(len(X), 5.0), [0.3, -0.2], 3)
    for alpha, v in jet.items():
        if sum(alpha) >= 1:
            assert np.all(np.abs(v) < 1e-8)


def test_fd_second_derivative_of_exp():
    # analytic oracle: every derivative of exp at 0 is 1
    jet = fd_jet(lambda X: np.exp(X[:, 0]), [0.0], 2)
    assert abs(jet[(2,)][0] - 1.0) < 1e-4


def test_fd_one_sided_matches_central_for_smooth_map():
    f = lambda X: np.sin(X[:, 0]) * np.cos(X[:, 1])
    X = np.array([[0.2, 0.4], [1.0, -0.3]])
    c = fd_jets(f, X, 2).values
    for side in (-1, 1):
        s = fd_jets(f, X, 2, sides=np.full(X.shape, side)).values
        assert np.max(np.abs(s - c)) < 1e-5


def test_fd_rejects_failing_evaluator():
    def bad(X):
        raise RuntimeError("no")
    with pytest.raises(EvalFailed):
        fd_jet(bad, [0.0], 1)
    with pytest.raises(EvalFailed):
        fd_jet(lambda X: np.full(len(X), np.nan), [0.0], 1)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.tuples(st.integers(0, 3), st.integers(0, 3)),
                          st.floats(-2, 2, allow_nan=False)), max_size=5),
       st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_fd_agrees_with_exact_partials(terms, x):
    p = MultiPoly(2, terms)
    X = np.array([x])
    exact = poly_jets([p], X, 2).values
    approx = fd_jets(p, X, 2, step=1e-4).values
    assert np.max(np.abs(exact - approx)) < 1e-5


def test_jet_index_order_is_graded():
    assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_jet_csv_dump():
    jt = fd_jets(lambda X: X[:, 0] ** 2, np.array([[1.0]]), 1)
    lines = jt.to_csv().strip().splitlines()
    assert lines[0] == "x1,alpha,component,value" and len(lines) == 3


# seminorm


def test_seminorm_of_zero():
    L = box([0.0, 0.0], [1.0, 1.0], 0.1)
    assert seminorm_estimate(lambda X: np.zeros(len(X)), L, 3).value == 0.0


def test_seminorm_of_identity():
    L = box([0.0], [1.0], 0.1)
    assert abs(seminorm_estimate(lambda X: X[:, 0], L, 1).value - 2.0) < 1e-8


def test_seminorm_of_sine():
    L = box([0.0], [np.pi], np.pi / 64)
    est = seminorm_estimate(lambda X: np.sin(X[:, 0]), L, 0)
    assert abs(est.value - 1.0) < 1e-12 and est.grid_h == L.h


def test_seminorm_needs_jets_of_enough_order():
    L = box([0.0], [1.0], 0.5)
    jt = fd_jets(lambda X: X[:, 0], L.points, 1)
    with pytest.raises(MissingJets):
        seminorm_from_jets(jt, 2)
    assert seminorm_estimate(jt, L, 1).value == pytest.approx(2.0)


def test_seminorm_monotone_in_order_and_grid():
    f = lambda X: np.sin(3 * X[:, 0]) + X[:, 1] ** 2
    coarse = box([0.0, 0.0], [1.0, 1.0], 0.25)
    fine = box([0.0, 0.0], [1.0, 1.0], 0.125)
    vals = [seminorm_estimate(f, coarse, l).value for l in range(4)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    # the fine grid contains the coarse one
    for l in range(3):
        assert seminorm_estimate(f, coarse, l).value <= seminorm_estimate(f, fine, l).value + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2))
def test_seminorm_triangle_inequality(a, b, l):
    L = box([0.0], [1.0], 0.1)
    f = lambda X: a * np.sin(2 * X[:, 0])
    g = lambda X: b * X[:, 0] ** 3
    lhs = seminorm_estimate(lambda X: f(X) + g(X), L, l).value
    rhs = seminorm_estimate(f, L, l).value + seminorm_estimate(g, L, l).value
    assert lhs <= rhs + 1e-9 * max(1.0, rhs)
