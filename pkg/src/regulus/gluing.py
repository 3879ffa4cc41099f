"""C^l approximation of smooth maps into chart-covered varieties by C^k piecewise-regular maps.

The recursion peels off the last chart of a cover. With charts E_1..E_c, the
map is first approximated near the set K where it leaves the safe zone of E_c
(using only E_1..E_{c-1}); a bump beta then blends that inner approximation,
read in the coordinates of E_c, with a polynomial fit of f in E_c:

    g = f_1                                  on the closure of N_1
    g = phi_c(beta h_1 + (1 - beta) h_2)     on N_2 minus N_1
    g = phi_c(h_2)                           off N_2
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .bump import Bump, _off_faces, make_bump
from .errors import (BlendLeftDomain, ChartEscape, DomainViolation, EvalFailed, NoCover,
                     RecursionDepthExceeded, ToleranceNotMet)
from .pieces import (Blend, Component, ComponentSelector, Context, Piece, PieceList, Poly, Push)
from .poly import PolyMap, scalar_to_json
from .sampling import JetTable, SampledRegion, fd_jets, make_region, seminorm_from_jets
from .varieties import Atlas, atlas_from_json
from .weierstrass import weierstrass_fit

MAX_CHARTS = 8
MAX_TIGHTEN = 4
BUMP_CELLS = 16
MAX_REFINE = 8
MIN_FIT_SAMPLES = 1200
NEAR_CELLS = 2


@dataclass
class MapSpec:
    """A C^l map given by an evaluator on a neighbourhood of the sampled domain L."""

    f: object
    L: SampledRegion
    l: int
    jets: object = None
    name: str = ""

    def __call__(self, X):
        return np.atleast_2d(np.asarray(self.f(np.atleast_2d(X)), dtype=float))


# ---------------------------------------------------------------------------
# covers

def cover_assign(f: MapSpec, atlas: Atlas, points=None, margin: float | None = None) -> list[int]:
    """Greedy chart cover of the image samples; charts must be safe by ``margin`` (default atlas.margin)."""
    X = f.L.points if points is None else points
    S = atlas.safety(f(X)) >= (atlas.margin if margin is None else margin)
    uncovered = np.ones(len(X), dtype=bool)
    order = []
    while uncovered.any():
        gain = (S & uncovered[:, None]).sum(axis=0)
        if order:
            gain[order] = -1
        best = int(np.argmax(gain))
        if gain[best] <= 0:
            raise NoCover(f"{int(uncovered.sum())} image samples are in no chart's safe zone")
        order.append(best)
        uncovered &= ~S[:, best]
    return order


# ---------------------------------------------------------------------------
# regular maps and their glued combinations

@dataclass
class BaseMap:
    """g = phi(p_c(x)) where p_c is the polynomial fit on the component c of x."""

    atlas: Atlas
    chart: int
    fits: list
    selector: ComponentSelector
    path: str = "g"

    @property
    def phi(self):
        return self.atlas.charts[self.chart].phi

    def params(self, X):
        X = np.atleast_2d(X)
        lab = self.selector.labels_of(X)
        out = None
        for c, p in enumerate(self.fits):
            sel = lab == c
            if sel.any():
                v = p(X[sel])
                if out is None:
                    out = np.zeros((len(X), v.shape[1]))
                out[sel] = v
        return out

    def __call__(self, X):
        return np.atleast_2d(self.phi(self.params(X)))

    def pieces(self) -> PieceList:
        name = self.path + "/components"
        pcs = [Piece([Component(name, c)], Push(self.phi, Poly(p)), f"{self.path}: chart {self.chart}, component {c}")
               for c, p in enumerate(self.fits)]
        return PieceList(pcs, Context(selectors={name: self.selector}))

    def to_json(self):
        return {"kind": "base", "chart": self.chart, "path": self.path,
                "fits": [p.to_json() for p in self.fits], "selector": self.selector.to_json()}


def blend(h1, h2, beta, rmap=None):
    """x -> beta(x) h1(x) + (1 - beta(x)) h2(x); with ``rmap`` the result must stay in its domain."""
    def ht(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w = np.asarray(beta(X), dtype=float).reshape(len(X), 1)
        out = w * np.atleast_2d(h1(X)) + (1.0 - w) * np.atleast_2d(h2(X))
        if rmap is not None and not np.all(rmap.valid(out)):
            raise BlendLeftDomain("blended parameters left the chart domain")
        return out
    return ht


@dataclass
class GluedMap:
    atlas: Atlas
    chart: int
    bump: Bump
    inner: object
    fits: list
    selector: ComponentSelector
    path: str = "g"
    U_name: str = "U"

    @property
    def phi(self):
        return self.atlas.charts[self.chart].phi

    @property
    def phi_inv(self):
        return self.atlas.charts[self.chart].phi_inv

    def h2(self, X):
        return BaseMap(self.atlas, self.chart, self.fits, self.selector).params(X)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        b = self.bump
        inside = np.asarray(b.U_region.membership(X), dtype=bool)
        p = np.full(len(X), np.inf)
        if inside.any():
            p[inside] = b.P(X[inside])
        plateau = inside & (p <= b.eps1)
        band = inside & (p > b.eps1) & (p < b.eps2)
        rest = ~(plateau | band)
        out = np.zeros((len(X), self.atlas.ambient_dim))
        if plateau.any():
            out[plateau] = self.inner(X[plateau])
        if rest.any():
            out[rest] = np.atleast_2d(self.phi(self.h2(X[rest])))
        if band.any():
            ht = blend(lambda Z: self.phi_inv(self.inner(Z)), self.h2, b, self.phi)
            out[band] = np.atleast_2d(self.phi(ht(X[band])))
        return out

    def pieces(self) -> PieceList:
        bpieces = self.bump.pieces(self.U_name)
        inner = self.inner.pieces()
        sel_name = self.path + "/components"
        ctx = Context(regions=dict(bpieces.ctx.regions), selectors={sel_name: self.selector})
        ctx.merge(inner.ctx)
        out = []
        for bp in bpieces.pieces:
            if bp.name == "plateau":
                for ip in inner.pieces:
                    out.append(Piece(bp.conditions + ip.conditions, ip.expr, f"{bp.name} | {ip.name}"))
            elif bp.name in ("outside U", "exterior"):
                for c, p in enumerate(self.fits):
                    out.append(Piece(bp.conditions + [Component(sel_name, c)], Push(self.phi, Poly(p)),
                                     f"{self.path}: {bp.name}, chart {self.chart}, component {c}"))
            else:
                for ip in inner.pieces:
                    h1 = Push(self.phi_inv, ip.expr)
                    for c, p in enumerate(self.fits):
                        expr = Push(self.phi, Blend(bp.expr, h1, Poly(p)))
                        out.append(Piece(bp.conditions + ip.conditions + [Component(sel_name, c)], expr,
                                         f"{self.path}: {bp.name} | {ip.name} | component {c}"))
        return PieceList(out, ctx)

    def to_json(self):
        return {"kind": "glued", "chart": self.chart, "path": self.path, "U_name": self.U_name,
                "bump": self.bump.to_json(), "inner": self.inner.to_json(),
                "fits": [p.to_json() for p in self.fits], "selector": self.selector.to_json()}


def map_from_json(d: dict, atlas: Atlas):
    sel = ComponentSelector.from_json(d["selector"])
    fits = [PolyMap.from_json(p) for p in d["fits"]]
    if d["kind"] == "base":
        return BaseMap(atlas, d["chart"], fits, sel, d["path"])
    return GluedMap(atlas, d["chart"], Bump.from_json(d["bump"]), map_from_json(d["inner"], atlas),
                    fits, sel, d["path"], d["U_name"])


@dataclass
class PiecewiseRegularMap:
    """A glued map together with its atlas; callable, serialisable, expandable into pieces."""

    root: object
    atlas: Atlas
    trace: list = field(default_factory=list)
    domain: dict = field(default_factory=dict)

    def __call__(self, X):
        return self.root(X)

    def domain_region(self) -> SampledRegion:
        return make_region(self.domain)

    def pieces(self) -> PieceList:
        return self.root.pieces()

    def to_json(self):
        return {"atlas": self.atlas.to_json(), "map": self.root.to_json(), "trace": self.trace,
                "domain": self.domain}

    @classmethod
    def from_json(cls, d):
        atlas = atlas_from_json(d["atlas"])
        return cls(map_from_json(d["map"], atlas), atlas, d.get("trace", []), d.get("domain", {}))


# ---------------------------------------------------------------------------
# fitting helpers

def _chart_jet_bound(rmap, Y, l) -> float:
    """C^l seminorm of a chart map over sample values Y of its argument."""
    J = fd_jets(lambda Z: rmap(Z), Y, max(l, 1))
    return seminorm_from_jets(J, max(l, 1))


def _param_jets(f: MapSpec, inv, X, l) -> JetTable:
    def h(Z):
        try:
            return np.atleast_2d(inv(f(Z)))
        except DomainViolation as exc:
            raise ChartEscape(str(exc)) from exc
    return fd_jets(h, X, l)


def _refined(sub: SampledRegion, factor: int) -> SampledRegion:
    """Each grid sample replaced by factor**n points spread over its cell."""
    n = sub.dim
    t = (np.arange(factor) + 0.5) / factor - 0.5
    offs = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n) * sub.h
    pts = (sub.points[:, None, :] + offs[None]).reshape(-1, n)
    return SampledRegion(n, pts, sub.lo, sub.hi, sub.membership, sub.dist, sub.h / factor)


def fit_chart_components(f: MapSpec, atlas: Atlas, chart: int, region: SampledRegion, l: int, eps: float):
    """Per-component polynomial fits of phi^{-1} o f on ``region`` with C^l error below ``eps``.

    Components with few samples are fitted on points refined inside their grid cells
    so that higher degrees stay determined.
    """
    inv = atlas.charts[chart].phi_inv
    labels = region.component_labels()
    fits, reports = [], []
    for c in range(int(labels.max()) + 1):
        sub = region.subregion(labels == c)
        factor = int(np.ceil((MIN_FIT_SAMPLES / len(sub)) ** (1.0 / sub.dim))) if region.has_grid else 1
        if factor > 1:
            try:
                fine = _refined(sub, min(factor, MAX_REFINE))
                jets = _param_jets(f, inv, fine.points, l)
                sub = fine
            except ChartEscape:
                jets = _param_jets(f, inv, sub.points, l)
        else:
            jets = _param_jets(f, inv, sub.points, l)
        p, rep = weierstrass_fit(None, sub, l, eps, jets=jets)
        fits.append(p)
        reports.append(rep.to_json())
    return fits, ComponentSelector(region.points, labels), reports


def _scale(f: MapSpec, atlas: Atlas, chart: int, region: SampledRegion, l: int) -> float:
    """Jet bound of phi over the fitted range: max over samples of the sum of |partials| of order 1..l."""
    inv = atlas.charts[chart].phi_inv
    Y = np.atleast_2d(inv(f(region.points)))
    order = max(l, 1)
    J = fd_jets(lambda Z: atlas.charts[chart].phi(Z), Y, order)
    per_point = np.abs(J.values[:, 1:, :]).sum(axis=(1, 2))
    return max(1.0, float(per_point.max()))


def measured_error(f: MapSpec, g, L: SampledRegion, l: int) -> float:
    J = fd_jets(lambda X: f(X) - g(X), L.points, l)
    return seminorm_from_jets(J, l)


def approximate_base(f: MapSpec, atlas: Atlas, chart: int, eps: float, path: str = "g"):
    """One chart: fit phi^{-1} o f by polynomials and push forward, tightening until the error passes."""
    L = f.L
    eps_fit = eps / (2.0 * _scale(f, atlas, chart, L, f.l))
    history = []
    for _ in range(MAX_TIGHTEN + 1):
        fits, sel, reps = fit_chart_components(f, atlas, chart, L, f.l, eps_fit)
        g = BaseMap(atlas, chart, fits, sel, path)
        try:
            err = measured_error(f, g, L, f.l)
        except (DomainViolation, EvalFailed) as exc:
            raise ChartEscape(f"fitted parameters leave chart {chart}: {exc}") from exc
        history.append({"eps_fit": eps_fit, "error": err, "fits": reps})
        if err < eps:
            return g, {"kind": "base", "path": path, "chart": chart, "error": err, "history": history}
        eps_fit /= 2.0
    raise ToleranceNotMet(f"base fit error {history[-1]['error']:.3g} >= {eps}")


# ---------------------------------------------------------------------------
# the recursion

def _domain_box(L: SampledRegion, pad: float):
    lo = L.points.min(axis=0) - pad
    hi = L.points.max(axis=0) + pad
    return lo, hi


def _dilate(mask_grid: np.ndarray) -> np.ndarray:
    out = mask_grid.copy()
    for ax in range(mask_grid.ndim):
        for s in (-1, 1):
            out |= np.roll(mask_grid, s, axis=ax) & _edge_guard(mask_grid.shape, ax, s)
    return out


def _edge_guard(shape, ax, s):
    g = np.ones(shape, dtype=bool)
    idx = [slice(None)] * len(shape)
    idx[ax] = 0 if s == 1 else -1
    g[tuple(idx)] = False
    return g


def _grid_values(region: SampledRegion, values, fill=False):
    grid = np.full(region.grid_shape, fill, dtype=bool)
    grid[tuple(region.grid_index.T)] = values
    return grid


def _peel(f, atlas: Atlas, order, T: SampledRegion, fT, lo, hi):
    """K, the samples of T near L where f leaves the last chart's safe zone (dilated by one cell),
    and a sublevel neighbourhood U = {P < lam_U} of K relative to the open box of T.

    P is a polynomial fit of the smooth safety level of the last chart along f. lam_U sits halfway
    between the level of K and the level at which the remaining charts fail on L, so f maps the
    samples of L inside U into their safe zones.
    """
    last, rest = order[-1], order[:-1]
    reach = NEAR_CELLS * T.h
    lev_T = atlas.levels(fT)[:, last]
    K_mask = (atlas.safety(fT)[:, last] < atlas.peel_margin) & (cKDTree(f.L.points).query(T.points)[0] <= reach)
    K_mask = _dilate(_grid_values(T, K_mask))[tuple(T.grid_index.T)]
    K = T.subregion(K_mask)
    fL = f(f.L.points)
    bad = atlas.safety(fL)[:, rest].max(axis=1) < atlas.margin
    lam_K = float(lev_T[K_mask].max())
    lam_bad = float(atlas.levels(fL[bad])[:, last].min()) if bad.any() else float(lev_T.max())
    if lam_bad <= lam_K:
        raise NoCover("no level separates the peeled set from where the remaining charts fail")
    lam_U = 0.5 * (lam_K + lam_bad)

    def j(X):
        return atlas.levels(f(np.atleast_2d(X)))[:, last]

    P_map, _ = weierstrass_fit(j, T, 0, (lam_U - lam_K) / 8.0)
    P = P_map.components[0]
    desc = {"kind": "sublevel", "poly": scalar_to_json(P), "level": lam_U, "open_box": True,
            "lo": lo.tolist(), "hi": hi.tolist(), "h": T.h}
    return K, K_mask, desc, P, {"lam_K": lam_K, "lam_U": lam_U, "lam_bad": lam_bad}


def _bump_spacing(P, desc, lam, h) -> float:
    """Grid spacing giving the collar band (about a quarter of lam_U - lam_K wide in P) several cells."""
    U = make_region(desc)
    p = P(U.points)
    X = U.points[(p > lam["lam_K"]) & (p < lam["lam_U"])]
    if not len(X):
        return h
    g = np.max(np.abs(fd_jets(P, X, 1).values[:, 1:, 0]).sum(axis=1))
    width = 0.25 * (lam["lam_U"] - lam["lam_K"]) / max(float(g), 1e-12)
    return float(np.clip(width / (BUMP_CELLS / 2), h / MAX_REFINE, h))


def approximate(f: MapSpec, atlas: Atlas, k: int, eps: float, seed=0, pad_cells: int = 4,
                _depth: int = 0, _path: str = "g"):
    """Piecewise-regular C^k map g with measured C^l distance to f below eps on the samples of f.L."""
    if k < f.l:
        raise ValueError("need k >= l")
    if eps <= 0:
        raise ValueError("eps must be positive")
    order = cover_assign(f, atlas)
    c = len(order)
    if c > MAX_CHARTS:
        raise RecursionDepthExceeded(f"cover needs {c} charts")
    if c == 1:
        g, rep = approximate_base(f, atlas, order[0], eps, _path)
        return PiecewiseRegularMap(g, atlas, [rep], dict(f.L.descriptor)), rep

    rng = np.random.default_rng(seed)
    L = f.L
    h = L.h if L.h > 0 else float(np.max(np.ptp(L.points, axis=0))) / 32
    lo, hi = _domain_box(L, pad_cells * h)
    T = make_region({"kind": "box", "lo": lo.tolist(), "hi": hi.tolist(), "h": h})
    fT = f(T.points)
    try:
        K, K_mask, U_desc, P, lam = _peel(f, atlas, order, T, fT, lo, hi)
    except NoCover:
        # safe zones of a minimal cover may overlap too little to peel; use a stricter cover
        strict = cover_assign(f, atlas, margin=atlas.peel_margin)
        if strict == order:
            raise
        order = strict
        K, K_mask, U_desc, P, lam = _peel(f, atlas, order, T, fT, lo, hi)
    last, rest = order[-1], order[:-1]

    # the bump runs on a finer grid so that its collar band spans several cells
    U_fine = make_region({**U_desc, "h": _bump_spacing(P, U_desc, lam, T.h)})
    # the inner map is only evaluated on the samples of L inside U (and finite-difference stencils)
    U = L.subregion(np.asarray(U_fine.membership(L.points), dtype=bool))
    beta, cert, pair = make_bump(K, U_fine, k, seed=int(rng.integers(2**31)), P=P)
    sup_K = float(np.max(P(K.points)))
    rho = min(beta.eps1 / 4.0, (beta.eps1 - sup_K) / 2.0)
    U_name = _path + "/U"

    def in_A(X):
        X = np.atleast_2d(X)
        m = np.asarray(U_fine.membership(X), dtype=bool)
        out = np.zeros(len(X), dtype=bool)
        if m.any():
            out[m] = P(X[m]) - beta.eps1 < -rho
        return out

    fit_region = T.subregion(~in_A(T.points))
    scale_c = _scale(f, atlas, last, fit_region, f.l)
    bnorm = cert.flatness.get("seminorm", None)
    if bnorm is None:
        pts = _off_faces(U_fine, U_fine.points)
        bnorm = 1.0 if f.l == 0 else seminorm_from_jets(fd_jets(beta, pts, f.l), f.l)
    eps_sub = eps / (2.0 * (1.0 + bnorm) * scale_c)
    history = []
    inner_f = MapSpec(f.f, U, f.l, None, f.name)
    for _ in range(MAX_TIGHTEN + 1):
        inner_g, inner_rep = approximate(inner_f, _restricted(atlas, rest), k, eps_sub,
                                         int(rng.integers(2**31)), pad_cells, _depth + 1, _path + "/inner")
        inner_root = _reindex(inner_g.root, atlas, rest)
        fits, sel, reps = fit_chart_components(f, atlas, last, fit_region, f.l, eps_sub)
        g = GluedMap(atlas, last, beta, inner_root, fits, sel, _path, U_name)
        try:
            err = measured_error(f, g, L, f.l)
        except (DomainViolation, EvalFailed, BlendLeftDomain) as exc:
            history.append({"eps_sub": eps_sub, "error": None, "failure": str(exc)})
            eps_sub /= 2.0
            continue
        history.append({"eps_sub": eps_sub, "error": err, "fits": reps})
        if err < eps:
            rep = {"kind": "glued", "path": _path, "cover": order, "peeled_chart": last,
                   "K_samples": int(K_mask.sum()), "levels": lam, "bump_h": U_fine.h, "rho": rho,
                   "bump": {"eps1": beta.eps1, "eps2": beta.eps2, "delta": beta.delta, "gamma": beta.gamma,
                            "alpha_min": cert.alpha_min, "m": beta.m, "l": beta.l, "r": beta.r,
                            "beta_seminorm": bnorm, "flatness": cert.flatness},
                   "inner": inner_rep, "error": err, "history": history}
            return PiecewiseRegularMap(g, atlas, [rep], dict(f.L.descriptor)), rep
        eps_sub /= 2.0
    raise ToleranceNotMet(f"glued error not below {eps} after {MAX_TIGHTEN} tightenings: {history[-1]}")


def _restricted(atlas: Atlas, indices) -> Atlas:
    return Atlas(atlas.ambient_dim, atlas.residual_polys, [atlas.charts[i] for i in indices],
                 atlas.margin, atlas.peel_margin, atlas.params)


def _reindex(node, atlas: Atlas, indices):
    """Rewrite chart indices of a map built on a restricted atlas into the full atlas."""
    node.atlas = atlas
    node.chart = indices[node.chart]
    if isinstance(node, GluedMap):
        _reindex(node.inner, atlas, indices)
    return node
