import json

import numpy as np
import pytest

from regulus.errors import BadDims, BadSpec, NoChartCovers
from regulus.sampling import fd_jets
from regulus.varieties import (atlas_from_json, chart_select, custom_atlas, grassmann_atlas, sphere_atlas,
                               variety_contains)

S2 = sphere_atlas(2)


# spheres


def test_north_projection_of_south_pole():
    assert np.allclose(S2.charts[0].phi_inv([0.0, 0.0, -1.0]), [0.0, 0.0])


def test_north_inverse_at_origin():
    assert np.allclose(S2.charts[0].phi([0.0, 0.0]), [0.0, 0.0, -1.0])


def test_sphere_roundtrip_at_axis_point():
    c = S2.charts[0]
    assert np.allclose(c.phi(c.phi_inv([1.0, 0.0, 0.0])), [1.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sphere_charts_land_on_sphere(n):
    A = sphere_atlas(n)
    Y = np.random.default_rng(n).normal(scale=3.0, size=(1000, n))
    for c in A.charts:
        assert np.max(np.abs(np.linalg.norm(c.phi(Y), axis=1) - 1)) < 1e-12


def test_sphere_needs_positive_dimension():
    with pytest.raises(BadDims):
        sphere_atlas(0)


# Grassmannians


def test_grassmann_axis():
    P = grassmann_atlas(2, 1).charts[0].phi([0.0]).reshape(2, 2)
    assert np.allclose(P, np.diag([1.0, 0.0]))


def test_grassmann_diagonal_line():
    P = grassmann_atlas(2, 1).charts[0].phi([1.0]).reshape(2, 2)
    assert np.allclose(P, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (4, 2)])
def test_grassmann_chart_samples(n, k):
    A = grassmann_atlas(n, k)
    rng = np.random.default_rng(10 * n + k)
    for c in A.charts:
        M = rng.normal(size=(1000, c.param_dim))
        P = c.phi(M).reshape(-1, n, n)
        assert np.max(np.abs(P @ P - P)) < 1e-10
        assert np.max(np.abs(P - P.transpose(0, 2, 1))) < 1e-10
        assert np.max(np.abs(np.trace(P, axis1=1, axis2=2) - k)) < 1e-10
        assert np.max(np.abs(c.phi_inv(P.reshape(len(M), -1)) - M)) < 1e-9


def test_grassmann_bad_dims():
    with pytest.raises(BadDims):
        grassmann_atlas(2, 2)


def test_chart_transitions_are_consistent():
    A = grassmann_atlas(3, 1)
    rng = np.random.default_rng(0)
    ci, cj = A.charts[0], A.charts[1]
    M = rng.normal(size=(400, ci.param_dim))
    Y = ci.phi(M)
    safe = cj.safety(Y) > A.margin
    Ys = Y[safe]
    back = cj.phi(cj.phi_inv(Ys))
    assert np.max(np.abs(back - Ys)) < 1e-9
    # transition maps have finite jets
    jets = fd_jets(lambda Z: cj.phi_inv(ci.phi(Z)), M[safe][:20], 2)
    assert np.all(np.isfinite(jets.values))


# membership and chart choice


def test_contains_axis_point():
    ok, r = variety_contains(S2, [1.0, 0.0, 0.0])
    assert ok and r == 0.0


def test_rejects_point_off_sphere():
    ok, r = variety_contains(S2, [2.0, 0.0, 0.0])
    assert not ok and r == 3.0


def test_grassmann_chart_point_is_member():
    A = grassmann_atlas(4, 2)
    y = A.charts[3].phi([0.3, -1.2, 0.5, 2.0])
    assert variety_contains(A, y, 1e-10)[0]


def test_south_pole_uses_north_chart():
    assert chart_select(S2, [0.0, 0.0, -1.0]) == 0


def test_equator_tie_goes_to_first_chart():
    assert chart_select(S2, [1.0, 0.0, 0.0]) == 0


def test_grassmann_axis_chart():
    assert chart_select(grassmann_atlas(2, 1), np.diag([1.0, 0.0]).ravel()) == 0


def test_no_chart_covers():
    A = sphere_atlas(1, margin=3.0)
    with pytest.raises(NoChartCovers):
        chart_select(A, [1.0, 0.0])


def test_random_points_are_covered():
    A = sphere_atlas(2)
    Y = np.random.default_rng(1).normal(size=(1000, 3))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    assert np.all(A.safety(Y).max(axis=1) >= A.margin)


# serialisation


@pytest.mark.parametrize("atlas", [sphere_atlas(2), grassmann_atlas(3, 1)])
def test_builtin_atlas_json(atlas):
    back = atlas_from_json(json.loads(json.dumps(atlas.to_json())))
    y = atlas.charts[0].phi(np.full((1, atlas.param_dim), 0.3))
    assert np.allclose(back.residual(y), atlas.residual(y))
    assert len(back.charts) == len(atlas.charts)


def test_custom_atlas_from_sphere_charts():
    base = sphere_atlas(1)
    data = {"variety": "custom", "ambient_dim": 2, "residual": ["x1^2 + x2^2 - 1"],
            "charts": [{"phi": c.phi.to_json(), "phi_inv": c.phi_inv.to_json(), "name": c.name} for c in base.charts]}
    A = custom_atlas(json.loads(json.dumps(data)))
    y = np.array([[0.6, -0.8]])
    assert np.allclose(A.charts[0].phi(A.charts[0].phi_inv(y)), y)
    back = atlas_from_json(A.to_json())
    assert len(back.charts) == 2


def test_unknown_variety():
    with pytest.raises(BadSpec):
        atlas_from_json({"variety": "torus"})
