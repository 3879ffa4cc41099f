"""Uniformly rational target varieties as chart atlases.

Two built-in families: the unit sphere S^n with the two stereographic charts,
and the Grassmannian G_k(R^n) realised as symmetric idempotent n x n matrices
of trace k, with one rational chart per k-subset of coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import BadDims, BadSpec, NoChartCovers
from .poly import MultiPoly, RationalMap, parse_poly

CHART_MARGIN = 0.1


@dataclass
class Chart:
    """Birational pair phi: parameters -> ambient, phi_inv: ambient -> parameters.

    ``safety(Y)`` measures how far ambient points are from the excluded locus
    (the complement of the chart's open set); larger is safer.
    """

    param_dim: int
    phi: RationalMap
    phi_inv: RationalMap
    safety: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    level: Callable[[np.ndarray], np.ndarray] | None = None

    def smooth_level(self, Y) -> np.ndarray:
        """A smooth function increasing with ``safety`` (used to build collar polynomials)."""
        return (self.level or self.safety)(np.atleast_2d(Y))


@dataclass
class Atlas:
    ambient_dim: int
    residual_polys: list
    charts: list
    margin: float = CHART_MARGIN
    peel_margin: float = 0.5
    params: dict = field(default_factory=dict)

    @property
    def param_dim(self) -> int:
        return self.charts[0].param_dim

    def residual(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.ambient_dim:
            raise BadDims(f"ambient dimension is {self.ambient_dim}, got {Y.shape[1]}")
        return np.stack([p(Y) for p in self.residual_polys], axis=1)

    def residual_norm(self, Y) -> np.ndarray:
        return np.max(np.abs(self.residual(Y)), axis=1)

    def levels(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.stack([c.smooth_level(Y) for c in self.charts], axis=1)

    def safety(self, Y) -> np.ndarray:
        """Safety of every point (rows) in every chart (columns)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.stack([c.safety(Y) for c in self.charts], axis=1)

    def restricted(self, indices) -> "Atlas":
        return Atlas(self.ambient_dim, self.residual_polys, [self.charts[i] for i in indices],
                     self.margin, self.peel_margin, {**self.params, "subset": list(indices)})

    def to_json(self) -> dict:
        d = dict(self.params)
        d.setdefault("margin", self.margin)
        d.setdefault("peel_margin", self.peel_margin)
        if d.get("variety") == "custom":
            d["charts"] = [{"phi": c.phi.to_json(), "phi_inv": c.phi_inv.to_json()} for c in self.charts]
            d["residual"] = [str(p) for p in self.residual_polys]
            d["ambient_dim"] = self.ambient_dim
        return d


def atlas_from_json(data: dict) -> Atlas:
    kind = data.get("variety")
    margin = data.get("margin", CHART_MARGIN)
    if kind == "sphere":
        atlas = sphere_atlas(int(data["n"]), margin=margin, peel_margin=data.get("peel_margin", 0.5))
    elif kind == "grassmann":
        atlas = grassmann_atlas(int(data["n"]), int(data["k"]), margin=margin,
                                peel_margin=data.get("peel_margin", 0.2))
    elif kind == "custom":
        atlas = custom_atlas(data)
    else:
        raise BadSpec(f"unknown variety {kind!r}")
    if "subset" in data:
        atlas = atlas.restricted(data["subset"])
    return atlas


# ---------------------------------------------------------------------------
# spheres

def _stereo(n: int, sign: float) -> tuple[RationalMap, RationalMap]:
    """Stereographic projection from the pole sign * e_{n+1} and its inverse."""
    amb = n + 1
    x = [MultiPoly.variable(amb, i) for i in range(amb)]
    den = 1.0 - sign * x[n]
    proj = RationalMap([(x[i], den) for i in range(n)], guards=[den])
    y = [MultiPoly.variable(n, i) for i in range(n)]
    sq = sum((yi * yi for yi in y), MultiPoly(n))
    inv_den = sq + 1.0
    inv = RationalMap([(2.0 * yi, inv_den) for yi in y] + [(sign * (sq - 1.0), inv_den)])
    return inv, proj


def sphere_atlas(n: int, margin: float = CHART_MARGIN, peel_margin: float = 0.5) -> Atlas:
    """S^n in R^{n+1}; chart 0 omits the north pole, chart 1 the south pole."""
    if n < 1:
        raise BadDims("sphere dimension must be >= 1")
    amb = n + 1
    x = [MultiPoly.variable(amb, i) for i in range(amb)]
    residual = sum((xi * xi for xi in x), MultiPoly(amb)) - 1.0
    charts = []
    for sign, name in ((1.0, "north"), (-1.0, "south")):
        phi, phi_inv = _stereo(n, sign)
        pole = np.zeros(amb)
        pole[n] = sign

        def safety(Y, pole=pole):
            return np.linalg.norm(np.atleast_2d(Y) - pole, axis=1)

        def level(Y, pole=pole):
            return np.sum((np.atleast_2d(Y) - pole) ** 2, axis=1)

        charts.append(Chart(n, phi, phi_inv, safety, name, level))
    return Atlas(amb, [residual], charts, margin, peel_margin, {"variety": "sphere", "n": n})


# ---------------------------------------------------------------------------
# Grassmannians

def poly_det(M: list[list[MultiPoly]]) -> MultiPoly:
    """Determinant of a square matrix of polynomials by cofactor expansion."""
    k = len(M)
    if k == 1:
        return M[0][0]
    if k == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    out = MultiPoly(M[0][0].nvars)
    for j in range(k):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = M[0][j] * poly_det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def poly_adjugate(M: list[list[MultiPoly]]) -> list[list[MultiPoly]]:
    k = len(M)
    nv = M[0][0].nvars
    if k == 1:
        return [[MultiPoly.constant(nv, 1.0)]]
    adj = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            minor = [row[:j] + row[j + 1:] for r, row in enumerate(M) if r != i]
            c = poly_det(minor)
            adj[j][i] = c if (i + j) % 2 == 0 else -c
    return adj


def _grassmann_chart(n: int, k: int, I: tuple[int, ...]) -> Chart:
    J = [r for r in range(n) if r not in I]
    npar = (n - k) * k
    m = [MultiPoly.variable(npar, i) for i in range(npar)]
    one = MultiPoly.constant(npar, 1.0)
    zero = MultiPoly(npar)
    # B has the identity in rows I and the parameter block M in rows J
    B = [[zero] * k for _ in range(n)]
    for a, r in enumerate(I):
        B[r] = [one if b == a else zero for b in range(k)]
    for a, r in enumerate(J):
        B[r] = [m[a * k + b] for b in range(k)]
    G = [[sum((B[r][a] * B[r][b] for r in range(n)), MultiPoly(npar)) for b in range(k)] for a in range(k)]
    det = poly_det(G)
    adj = poly_adjugate(G)
    comps = []
    for i in range(n):
        for j in range(n):
            num = MultiPoly(npar)
            for a in range(k):
                for b in range(k):
                    num = num + B[i][a] * adj[a][b] * B[j][b]
            comps.append((num, det))
    phi = RationalMap(comps)

    amb = n * n
    P = [[MultiPoly.variable(amb, i * n + j) for j in range(n)] for i in range(n)]
    PII = [[P[r][c] for c in I] for r in I]
    dII = poly_det(PII)
    aII = poly_adjugate(PII)
    inv = []
    for r in J:
        for b in range(k):
            num = MultiPoly(amb)
            for a in range(k):
                num = num + P[r][I[a]] * aII[a][b]
            inv.append((num, dII))
    phi_inv = RationalMap(inv, guards=[dII])
    idx = np.array(I)

    def safety(Y):
        Y = np.atleast_2d(Y).reshape(-1, n, n)
        return np.linalg.det(Y[:, idx][:, :, idx])

    return Chart(npar, phi, phi_inv, safety, "I=" + ",".join(str(i + 1) for i in I))


def grassmann_atlas(n: int, k: int, margin: float = CHART_MARGIN, peel_margin: float = 0.2) -> Atlas:
    """G_k(R^n) as orthogonal projection matrices, flattened row-major into R^{n*n}."""
    if not 0 < k < n:
        raise BadDims(f"need 0 < k < n, got n={n}, k={k}")
    amb = n * n
    P = [[MultiPoly.variable(amb, i * n + j) for j in range(n)] for i in range(n)]
    res = []
    for i in range(n):
        for j in range(n):
            sq = sum((P[i][t] * P[t][j] for t in range(n)), MultiPoly(amb))
            res.append(sq - P[i][j])
    for i in range(n):
        for j in range(i + 1, n):
            res.append(P[j][i] - P[i][j])
    res.append(sum((P[i][i] for i in range(n)), MultiPoly(amb)) - float(k))
    charts = [_grassmann_chart(n, k, I) for I in combinations(range(n), k)]
    return Atlas(amb, res, charts, margin, peel_margin, {"variety": "grassmann", "n": n, "k": k})


def custom_atlas(data: dict) -> Atlas:
    """Atlas from JSON: rational charts in text form plus defining polynomials."""
    try:
        amb = int(data["ambient_dim"])
        residual = [parse_poly(t, amb) for t in data["residual"]]
        charts = []
        for c in data["charts"]:
            phi = RationalMap.from_json(c["phi"])
            inv = RationalMap.from_json(c["phi_inv"])
            guards = inv.guards or tuple(d for _, d in inv.components)

            def safety(Y, guards=guards):
                return np.min(np.stack([np.abs(g(np.atleast_2d(Y))) for g in guards], axis=1), axis=1)

            charts.append(Chart(phi.nvars, phi, inv, safety, c.get("name", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadSpec(f"bad custom atlas: {exc}") from exc
    return Atlas(amb, residual, charts, data.get("margin", CHART_MARGIN), data.get("peel_margin", 0.5),
                 {"variety": "custom"})


# ---------------------------------------------------------------------------

def variety_contains(atlas: Atlas, y, tol: float = 1e-10) -> tuple[bool, float]:
    r = float(atlas.residual_norm(np.atleast_2d(y))[0])
    return r < tol, r


def chart_select(atlas: Atlas, y) -> int:
    """Chart whose excluded locus is farthest from y; ties go to the lowest index."""
    s = atlas.safety(np.atleast_2d(y))[0]
    best = int(np.argmax(s))
    if s[best] < atlas.margin:
        raise NoChartCovers(f"best chart safety {s[best]:.3g} below margin {atlas.margin}")
    return best
