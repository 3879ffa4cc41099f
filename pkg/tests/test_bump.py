import json

import numpy as np
import pytest

from regulus.bump import (Bump, boundary_derivatives, build_collar, build_plateau, check_regular_value,
                          exponent_candidates, level_points, make_bump, pick_gamma, pick_levels, plateau,
                          sign_components, smooth_clamp_iterate, _gradient)
from regulus.catalog import box_pair
from regulus.certify import certificate_equivalence
from regulus.errors import AmbiguousComponent, ExhaustedRetries, InclusionViolated, NoConvergence
from regulus.poly import MultiPoly
from regulus.sampling import make_region

x = MultiPoly.variable(1, 0)
SQ = x * x
U1 = make_region({"kind": "box", "lo": [-1.0], "hi": [1.0], "h": 1 / 400})
ORIGIN = make_region({"kind": "points", "points": [[0.0]]})


def nearest(U, p):
    return int(np.argmin(np.linalg.norm(U.points - np.asarray(p), axis=1)))


# levels


def test_square_levels_are_regular():
    # gradient oracle: |P'| = 2|x| = 0.4 on the eps1-level and 0.8 on the eps2-level
    vals = SQ(U1.points)
    gn = np.linalg.norm(_gradient(SQ, U1.points), axis=1)
    for level in (0.04, 0.16):
        assert check_regular_value(vals, gn, level, U1.h)
        near = np.abs(vals - level) < 2 * U1.h * gn
        assert np.min(gn[near]) > 0.39


def test_critical_level_is_rejected():
    vals = SQ(U1.points)
    gn = np.linalg.norm(_gradient(SQ, U1.points), axis=1)
    assert not check_regular_value(vals, gn, 1e-6, U1.h)


def test_pick_levels_in_admissible_interval():
    e1, e2 = pick_levels(SQ, ORIGIN, U1, 0)
    assert 0 < e1 < e2 < 1


def test_pick_levels_empty_interval():
    K = make_region({"kind": "points", "points": [[1.0]]})
    with pytest.raises(ExhaustedRetries):
        pick_levels(SQ, K, U1, 0)


# collars


def test_square_collar_intervals():
    pair = build_collar(SQ, 0.04, 0.16, U1, ORIGIN)
    assert np.allclose(np.sort(pair.boundary1[:, 0]), [-0.2, 0.2], atol=1e-12)
    assert np.allclose(np.sort(pair.boundary2[:, 0]), [-0.4, 0.4], atol=1e-12)
    assert np.all(pair.n2_mask[pair.n1_mask])


def test_tiny_levels_give_nested_intervals():
    pair = build_collar(SQ, 1e-4, 4e-4, U1, ORIGIN)
    assert np.allclose(np.sort(pair.boundary1[:, 0]), [-0.01, 0.01], atol=1e-12)
    assert np.allclose(np.sort(pair.boundary2[:, 0]), [-0.02, 0.02], atol=1e-12)


def test_collar_missing_K_sample():
    K = make_region({"kind": "points", "points": [[0.5]]})
    with pytest.raises(InclusionViolated):
        build_collar(SQ, 0.04, 0.16, U1, K)


# gamma


def test_alpha_min_at_middle_level():
    # direct evaluation: F(0.3) = ((0.09 - 0.04)(0.09 - 0.16))**2
    gamma, alpha = pick_gamma(SQ, 0.04, 0.16, 0.09, U1, 0)
    assert alpha == pytest.approx(1.225e-5, rel=1e-9)
    assert 0 < gamma < alpha


def test_half_alpha_is_admissible():
    _, alpha = pick_gamma(SQ, 0.04, 0.16, 0.09, U1, 0)
    assert 0 < alpha / 2 < alpha


# signs


def test_square_component_signs():
    gamma, _ = pick_gamma(SQ, 0.04, 0.16, 0.09, U1, 0)
    labels, sigma, ids = sign_components(SQ, 0.04, 0.16, 0.09, gamma, U1)
    assert sigma[nearest(U1, [0.0])] == 1
    assert sigma[nearest(U1, [0.4])] == -1 and sigma[nearest(U1, [-0.4])] == -1
    assert set(labels.values()) <= {-1, 1}


def test_coarse_grid_merges_components():
    coarse = make_region({"kind": "box", "lo": [-1.0], "hi": [1.0], "h": 0.5})
    with pytest.raises(AmbiguousComponent):
        sign_components(SQ, 0.04, 0.16, 0.09, 1e-5, coarse)


# clamp and plateau


def test_clamp_fixed_points():
    g, it = smooth_clamp_iterate(np.zeros(3), 1.0)
    assert np.all(g == 0) and it == 1
    g, _ = smooth_clamp_iterate(np.full(3, 2.5), 2.5)
    assert np.all(g == 2.5)


def test_clamp_hand_iterate():
    # G+ = -|2c - c| + c = 0, then G- = |0 + c| - c = 0
    c = 0.3
    g, it = smooth_clamp_iterate(np.array([2 * c]), c)
    assert it == 1 and g[0] == 0.0


def test_clamp_bounds_and_boundary_values():
    rng = np.random.default_rng(0)
    g0 = rng.uniform(-1, 20, size=1000)
    g, _ = smooth_clamp_iterate(np.concatenate([g0, [1.0, -1.0]]), 1.0)
    assert np.all(np.abs(g) <= 1.0 + 1e-12)
    assert g[-2] == 1.0 and g[-1] == -1.0


def test_clamp_gives_up():
    with pytest.raises(NoConvergence):
        smooth_clamp_iterate(np.array([1e6]), 1.0, max_iter=4)


def test_plateau_values():
    c = 0.7 ** 4
    assert build_plateau(np.array([c]), 0.7, 2, 3, 2)[0] == 1.0
    assert build_plateau(np.array([-c]), 0.7, 2, 3, 2)[0] == 0.0
    for l, r in [(1, 1), (3, 4), (5, 8)]:
        assert plateau(np.array([0.0]), 1.0, l, r)[0] == pytest.approx((1 - 2.0 ** -l) ** r, rel=1e-14)


def test_plateau_requires_odd_l():
    with pytest.raises(ValueError):
        build_plateau(np.zeros(1), 0.5, 1, 2, 1)


def test_plateau_in_unit_interval():
    g = np.linspace(-1, 1, 1001)
    H = plateau(g, 1.0, 5, 4)
    assert np.all((H >= 0) & (H <= 1))


def test_exponent_search_order():
    ms, ls, rs = exponent_candidates(2)
    assert ms[0] == 2 and ls[0] == 3 and rs[0] == 1
    assert all(l % 2 == 1 for l in ls) and max(ms) <= 32 and max(ls) <= 33 and max(rs) <= 32


# full pipeline


@pytest.fixture(scope="module")
def interval_bump():
    job = box_pair(1)
    K, U = make_region(job["K"]), make_region(job["U"])
    beta, cert, pair = make_bump(K, U, 1, seed=0)
    return K, U, beta, cert, pair


def test_bump_plateau_and_support(interval_bump):
    K, U, beta, cert, pair = interval_bump
    v = beta(U.points)
    assert np.all(v[pair.n1_mask] == 1.0)
    assert np.all(v[~pair.n2_mask] == 0.0)
    assert np.all(beta(K.points) == 1.0)


def test_bump_flat_at_collar_boundaries(interval_bump):
    _, _, beta, _, pair = interval_bump
    pts = np.concatenate([pair.boundary1, pair.boundary2])
    assert np.max(boundary_derivatives(beta, pts, 1)) < 1e-4


def test_bump_certificate_fields(interval_bump):
    _, U, beta, cert, _ = interval_bump
    assert cert.eps1 < cert.delta < cert.eps2 and 0 < cert.gamma < cert.alpha_min and cert.l % 2 == 1
    assert cert.grid_h == U.h
    assert json.loads(json.dumps(cert.to_json()))["m"] == cert.m


def test_bump_certificate_reproduces_beta(interval_bump):
    _, U, beta, cert, _ = interval_bump
    rep = certificate_equivalence(beta, U, cert.pieces)
    assert rep["max_gap"] < 1e-9 and rep["samples"] == len(U.points)


def test_bump_outside_U_is_zero(interval_bump):
    _, _, beta, _, _ = interval_bump
    assert np.all(beta(np.array([[-3.0], [1.5], [7.0]])) == 0.0)


def test_bump_json_roundtrip(interval_bump):
    _, U, beta, _, _ = interval_bump
    back = Bump.from_json(json.loads(json.dumps(beta.to_json())))
    assert np.array_equal(back(U.points), beta(U.points))


def test_doubling_r_does_not_roughen(interval_bump):
    _, _, beta, _, pair = interval_bump
    prev = None
    for r in (1, 2, 4, 8, 16):
        b = Bump(beta.P, beta.eps1, beta.eps2, beta.delta, beta.gamma, beta.m, beta.l, r, beta.U_descriptor)
        d = float(np.max(boundary_derivatives(b, pair.boundary2, 1)))
        if prev is not None:
            assert d <= prev + 1e-12
        prev = d


INSTANCES = [
    (1, [-0.3], [0.1], 1, 11),
    (1, [0.2], [0.5], 2, 12),
    (2, [-0.2, -0.1], [0.2, 0.3], 1, 13),
    (2, [0.1, -0.3], [0.4, 0.0], 2, 14),
    (1, [-0.1], [0.05], 1, 15),
]


@pytest.mark.parametrize("n,klo,khi,k,seed", INSTANCES)
def test_bump_range_on_random_points(n, klo, khi, k, seed):
    h = 1 / 200 if n == 1 else 1 / 50
    K = make_region({"kind": "box", "lo": klo, "hi": khi, "h": h})
    U = make_region({"kind": "box", "lo": [-1.0] * n, "hi": [1.0] * n, "h": h})
    beta, cert, pair = make_bump(K, U, k, seed=seed)
    X = np.random.default_rng(seed).uniform(-1, 1, size=(10 ** 5, n))
    v = beta(X)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(beta(K.points) == 1.0)
