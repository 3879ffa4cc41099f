import numpy as np
import pytest

from regulus.bump import make_bump
from regulus.catalog import box_pair, circle_map
from regulus.certify import (arc_probe, certificate_equivalence, check_containment, check_smoothness, circle_arc,
                             line_arc, rational_fit, seam_points, winding_number)
from regulus.errors import NoInteriorWindow, SamplingTooCoarse, UnmatchedSample
from regulus.gluing import approximate
from regulus.pieces import Piece, PieceList, Poly, Sign
from regulus.poly import MultiPoly
from regulus.sampling import make_region
from regulus.varieties import sphere_atlas

x = MultiPoly.variable(1, 0)
LINE = make_region({"kind": "box", "lo": [-1.0], "hi": [1.0], "h": 0.01})
S1 = sphere_atlas(1)


class Piecewise:
    """Evaluator backed by a hand-written piece list."""

    def __init__(self, pieces, L):
        self._pieces, self.L = pieces, L

    def __call__(self, X):
        return self._pieces(X)

    def pieces(self):
        return self._pieces

    def domain_region(self):
        return self.L


def abs_map():
    return Piecewise(PieceList([Piece([Sign(Poly(x), "<", "x<0")], Poly(-1.0 * x), "left"),
                                Piece([Sign(Poly(x), ">=", "x>=0")], Poly(x), "right")]), LINE)


@pytest.fixture(scope="module")
def bump1():
    job = box_pair(1)
    K, U = make_region(job["K"]), make_region(job["U"])
    beta, cert, pair = make_bump(K, U, 1, seed=0)
    return U, beta, cert, pair


# smoothness


def test_bump_is_smooth_across_seams(bump1):
    U, beta, cert, _ = bump1
    rep = check_smoothness(beta, 1, 1e-3, L=U, pieces=cert.pieces)
    assert rep["seams"] > 0 and rep["pass"]


def test_single_piece_map_has_no_seams():
    g = Piecewise(PieceList([Piece([], Poly(x * x), "all")]), LINE)
    rep = check_smoothness(g, 2)
    assert rep["seams"] == 0 and rep["pass"]


def test_kink_fails():
    rep = check_smoothness(abs_map(), 1, 1e-3)
    assert not rep["pass"]
    assert rep["max_discrepancy"] == pytest.approx(2.0, rel=1e-6)
    assert abs(rep["worst"]["point"][0]) < 1e-9


def test_seam_located_by_bisection():
    X, pa, pb, axis = seam_points(abs_map().pieces(), LINE)
    assert np.allclose(X, 0.0, atol=1e-12) and set(pa) | set(pb) == {0, 1}


def test_smoothness_never_raises():
    g = Piecewise(PieceList([Piece([Sign(Poly(x), "<", "")], Poly(x), "only left")]), LINE)
    rep = check_smoothness(g, 1)
    assert not rep["pass"] and "error" in rep


# containment


def test_containment_of_scaled_map():
    L = make_region({"kind": "box", "lo": [0.0], "hi": [2 * np.pi], "h": 0.05})
    g = lambda X: 1.01 * np.stack([np.cos(X[:, 0]), np.sin(X[:, 0])], axis=1)
    rep = check_containment(g, L, S1)
    assert not rep["pass"] and rep["max_residual"] == pytest.approx(0.0201, abs=1e-12)


def test_containment_of_constant_map():
    g = lambda X: np.tile([0.0, 1.0], (len(X), 1))
    rep = check_containment(g, LINE, S1)
    assert rep["pass"] and rep["max_residual"] == 0.0


def test_containment_of_approximation():
    f, atlas = circle_map(2)
    g, _ = approximate(f, atlas, 2, 0.1)
    assert check_containment(g, f.L, atlas, 1e-9)["pass"]


# certificate


def test_bump_certificate_matches(bump1):
    U, beta, cert, _ = bump1
    assert certificate_equivalence(beta, U, cert.pieces)["pass"]


def test_circle_certificate_matches():
    f, atlas = circle_map(1)
    g, _ = approximate(f, atlas, 2, 0.1)
    rep = certificate_equivalence(g, f.L)
    assert rep["pass"] and rep["pieces_hit"] > 1


def test_deleted_piece_is_detected(bump1):
    U, beta, cert, _ = bump1
    pl = PieceList([p for p in cert.pieces.pieces if p.name != "plateau"], cert.pieces.ctx)
    with pytest.raises(UnmatchedSample):
        certificate_equivalence(beta, U, pl)


# arcs


def test_rational_fit_reproduces_rational_function():
    t = np.linspace(0, 1, 201)
    res, _ = rational_fit(t, 1 / (1 + 4 * t ** 2), 2, 2)
    assert res < 1e-12


def test_polynomial_along_line():
    g = lambda X: (X[:, 0] ** 3 - 2 * X[:, 1] * X[:, 0] + 1.0)[:, None]
    rep = arc_probe(g, line_arc([-1.0, 0.5], [1.0, -0.3]))
    assert rep["residual"] < 1e-12 and rep["pass"]


def test_bump_along_line_through_band(bump1):
    _, beta, cert, pair = bump1
    # the window runs across the collar band N2 minus the closure of N1
    w = (float(pair.boundary1[:, 0].max()), float(pair.boundary2[:, 0].max()))
    rep = arc_probe(beta, line_arc([0.0], [1.0]), window=w, pieces=cert.pieces)
    assert rep["pass"] and rep["piece"].startswith("band")


def test_exp_is_not_rational_of_low_degree():
    rep = arc_probe(lambda X: np.exp(X[:, 0]), line_arc([0.0], [20.0]))
    assert not rep["pass"]


def test_circle_arc_on_sphere_map():
    g = lambda X: np.stack([np.cos(X[:, 0]) * np.cos(X[:, 1]), np.sin(X[:, 0]), X[:, 1] ** 2], axis=1)
    c = circle_arc([0.0, 0.0], 0.5)
    assert np.allclose(np.linalg.norm(c(np.linspace(0, 1, 9)), axis=1), 0.5)
    # trigonometric along a circle: fits, but only to the rational-approximation level
    assert arc_probe(g, c, window=(0.0, 0.25))["residual"] < 1e-3


def test_no_interior_window():
    pl = PieceList([Piece([Sign(Poly(x), "<", "")], Poly(x), "a"), Piece([Sign(Poly(x), ">=", "")], Poly(x), "b")])
    # each half of the window is too short once trimmed away from the seam
    g = Piecewise(pl, LINE)
    with pytest.raises(NoInteriorWindow):
        arc_probe(g, line_arc([-1e-3], [1e-3]), samples=60)


# winding


def test_winding_numbers():
    assert winding_number(lambda T: np.stack([np.cos(T[:, 0]), np.sin(T[:, 0])], axis=1)) == 1
    assert winding_number(lambda T: np.stack([np.cos(3 * T[:, 0]), np.sin(3 * T[:, 0])], axis=1)) == 3
    assert winding_number(lambda T: np.tile([1.0, 0.0], (len(T), 1))) == 0
    assert winding_number(lambda T: np.stack([np.cos(T[:, 0]), -np.sin(T[:, 0])], axis=1)) == -1


def test_winding_needs_fine_sampling():
    with pytest.raises(SamplingTooCoarse):
        winding_number(lambda T: np.stack([np.cos(50 * T[:, 0]), np.sin(50 * T[:, 0])], axis=1), nsamples=100)


def test_winding_stable_under_small_perturbation():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b = rng.uniform(-0.4, 0.4, size=2) / np.sqrt(2)
        g = lambda T: np.stack([np.cos(2 * T[:, 0]) + a * np.sin(5 * T[:, 0]),
                                np.sin(2 * T[:, 0]) + b * np.cos(7 * T[:, 0])], axis=1)
        assert winding_number(g) == 2
