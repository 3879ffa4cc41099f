"""Vector bundles presented by projection-valued fields, and their algebraization.

A rank r subbundle of the trivial bundle L x R^m is given by x -> P(x), the
orthogonal projection onto its fibre. Viewing P as a point of the Grassmannian
(projection-matrix model) gives the classifying map; approximating that map by
a piecewise-regular one and pulling back the tautological bundle gives a
piecewise-algebraic bundle isomorphic to the original.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpec, NotAProjection, NotInvertible, RankDrop
from .gluing import MapSpec, PiecewiseRegularMap, approximate
from .poly import parse_poly
from .sampling import SampledRegion, make_region
from .varieties import grassmann_atlas
from .weierstrass import weierstrass_fit

PROJ_TOL = 1e-8
TRACE_TOL = 1e-6
INVERTIBLE_TOL = 1e-3


@dataclass
class ProjectionField:
    L: SampledRegion
    m: int
    evaluator: object
    rank: int
    name: str = ""
    spec: dict = field(default_factory=dict)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.evaluator(X), dtype=float).reshape(len(X), self.m, self.m)

    def residuals(self, X=None) -> dict:
        P = self(self.L.points if X is None else X)
        return projection_residuals(P, self.rank)

    def check(self):
        r = self.residuals()
        if r["idempotent"] >= PROJ_TOL or r["symmetric"] >= PROJ_TOL or r["trace"] >= TRACE_TOL:
            raise NotAProjection(f"field residuals {r}")
        return r


def projection_residuals(P: np.ndarray, rank: int) -> dict:
    P = np.asarray(P, dtype=float)
    return {"idempotent": float(np.max(np.abs(P @ P - P))),
            "symmetric": float(np.max(np.abs(P - np.swapaxes(P, 1, 2)))),
            "trace": float(np.max(np.abs(np.trace(P, axis1=1, axis2=2) - rank)))}


# ---------------------------------------------------------------------------
# built-in fields

def trivial_field(L: SampledRegion, m: int = 2, rank: int = 1) -> ProjectionField:
    D = np.diag([1.0] * rank + [0.0] * (m - rank))

    def ev(X):
        return np.broadcast_to(D, (len(X), m, m)).copy()

    return ProjectionField(L, m, ev, rank, "trivial", {"kind": "trivial", "m": m, "rank": rank})


def moebius_field(L: SampledRegion | None = None) -> ProjectionField:
    """Line v v^T with v = (cos t/2, sin t/2) over t in [0, 2 pi]."""
    if L is None:
        L = make_region({"kind": "box", "lo": [0.0], "hi": [2 * np.pi], "h": 2 * np.pi / 256})

    def ev(X):
        t = X[:, 0] / 2
        v = np.stack([np.cos(t), np.sin(t)], axis=1)
        return v[:, :, None] * v[:, None, :]

    return ProjectionField(L, 2, ev, 1, "moebius", {"kind": "moebius"})


def sphere_band(X) -> np.ndarray:
    """Points of S^2 parametrised by (u, v) in [0,1]^2: polar angle pi(0.15 + 0.7u), azimuth 2 pi v."""
    a = np.pi * (0.15 + 0.7 * X[:, 0])
    b = 2 * np.pi * X[:, 1]
    return np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], axis=1)


def tangent_s2_field(L: SampledRegion | None = None) -> ProjectionField:
    """Tangent planes I - x x^T of S^2 along the parametrised band."""
    if L is None:
        L = make_region({"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0], "h": 1 / 32})

    def ev(X):
        x = sphere_band(X)
        return np.eye(3)[None] - x[:, :, None] * x[:, None, :]

    return ProjectionField(L, 3, ev, 2, "tangent_s2", {"kind": "tangent_s2"})


def rotated_trivial_field(L: SampledRegion, amplitude: float = 0.6) -> ProjectionField:
    """diag(1, 0) conjugated by the rotation through amplitude * sin(x_1)."""
    def ev(X):
        a = amplitude * np.sin(X[:, 0])
        v = np.stack([np.cos(a), np.sin(a)], axis=1)
        return v[:, :, None] * v[:, None, :]

    return ProjectionField(L, 2, ev, 1, "rotated_trivial", {"kind": "rotated_trivial", "amplitude": amplitude})


def field_from_json(d: dict, L: SampledRegion | None = None) -> ProjectionField:
    kind = d.get("kind")
    if L is None and "domain" in d:
        L = make_region(d["domain"])
    if kind == "trivial":
        L = L or make_region({"kind": "box", "lo": [0.0], "hi": [2 * np.pi], "h": 2 * np.pi / 256})
        return trivial_field(L, int(d.get("m", 2)), int(d.get("rank", 1)))
    if kind == "moebius":
        return moebius_field(L)
    if kind == "tangent_s2":
        return tangent_s2_field(L)
    if kind == "rotated_trivial":
        return rotated_trivial_field(L, float(d.get("amplitude", 0.6)))
    if kind == "custom":
        if L is None:
            raise BadSpec("custom fields need a 'domain'")
        m = int(d["m"])
        polys = [parse_poly(t, L.dim) for t in d["entries"]]
        if len(polys) != m * m:
            raise BadSpec(f"need {m * m} entries")

        def ev(X):
            return np.stack([p(X) for p in polys], axis=1).reshape(len(X), m, m)

        fld = ProjectionField(L, m, ev, int(d["rank"]), "custom", dict(d))
        fld.check()
        return fld
    raise BadSpec(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------------------

def classifying_map(xi: ProjectionField, l: int = 0) -> MapSpec:
    """x -> P(x) as a map into the projection-matrix model of G_r(R^m)."""
    xi.check()
    m = xi.m
    return MapSpec(lambda X: xi(X).reshape(len(X), m * m), xi.L, l, None, f"classifying map of {xi.name}")


def algebraize_bundle(xi: ProjectionField, l: int, k: int, eps: float, seed=0):
    """(g, pullback field, report) with g a piecewise-regular approximation of the classifying map."""
    f = classifying_map(xi, l)
    atlas = grassmann_atlas(xi.m, xi.rank)
    g, rep = approximate(f, atlas, k, eps, seed)
    m = xi.m
    pull = ProjectionField(xi.L, m, lambda X: g(X).reshape(len(X), m, m), xi.rank, f"pullback of {xi.name}")
    Pg = pull(xi.L.points)
    report = {"error": rep["error"], "residuals": projection_residuals(Pg, xi.rank),
              "sup_error": float(np.max(np.abs(Pg - xi(xi.L.points)))), "approximation": rep}
    if xi.rank == 1 and xi.L.dim == 1:
        report["w1_source"] = w1_holonomy(xi)
        report["w1_pullback"] = w1_holonomy(pull)
    return g, pull, report


def _fibre_basis(P: np.ndarray, rank: int) -> np.ndarray:
    """Orthonormal basis (columns) of the image of each symmetric projection."""
    w, V = np.linalg.eigh(P)
    return V[:, :, -rank:]


@dataclass
class BundleMorphismCert:
    matrices: np.ndarray
    min_singular_value: float
    source: str
    target: str
    eps: float
    fit_degree: int

    def to_json(self) -> dict:
        return {"min_singular_value": self.min_singular_value, "source": self.source, "target": self.target,
                "eps": self.eps, "fit_degree": self.fit_degree, "samples": len(self.matrices)}


def bundle_isomorphism(xi: ProjectionField, eta: ProjectionField, eps: float = 0.05, seed=0) -> BundleMorphismCert:
    """Morphism Q B from a polynomial B close to A = Q P + (I - Q)(I - P), with fibrewise singular values."""
    if xi.m != eta.m or xi.rank != eta.rank:
        raise BadSpec("fields must have the same ambient rank and fibre dimension")
    L = xi.L
    m, r = xi.m, xi.rank
    P = xi(L.points)
    Q = eta(L.points)
    I = np.eye(m)[None]

    def A(X):
        Pp, Qq = xi(X), eta(X)
        return (Qq @ Pp + (I - Qq) @ (I - Pp)).reshape(len(X), m * m)

    UP = _fibre_basis(P, r)
    UQ = _fibre_basis(Q, r)
    e = eps
    smin = 0.0
    for _ in range(3):
        B, rep = weierstrass_fit(A, L, 0, e)
        M = Q @ B(L.points).reshape(len(L.points), m, m)
        fib = np.swapaxes(UQ, 1, 2) @ M @ UP
        smin = float(np.min(np.linalg.svd(fib, compute_uv=False)))
        if smin >= INVERTIBLE_TOL:
            return BundleMorphismCert(M, smin, xi.name, eta.name, e, rep.degree)
        e /= 2
    raise NotInvertible(f"fibrewise minimum singular value {smin:.3g} < {INVERTIBLE_TOL}")


def w1_holonomy(xi: ProjectionField, loop_points=None) -> int:
    """Sign picked up by a unit fibre vector transported by successive projections around a loop."""
    if xi.rank != 1:
        raise BadSpec("holonomy sign is defined here for line bundles")
    X = xi.L.points[np.argsort(xi.L.points[:, 0])] if loop_points is None else np.atleast_2d(loop_points)
    P = xi(X)
    v0 = _fibre_basis(P[:1], 1)[0, :, 0]
    v = v0.copy()
    for Pi in P[1:]:
        v = Pi @ v
        n = np.linalg.norm(v)
        if n < 1e-6:
            raise RankDrop("transported vector collapsed; loop sampled too coarsely")
        v /= n
    v = P[0] @ v
    return 1 if float(v @ v0) > 0 else -1
