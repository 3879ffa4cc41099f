"""Piecewise-regular C^k bump functions with a plateau on a collar of K.

Pipeline: a nonnegative polynomial P close to dist(., K); two regular levels
eps1 < eps2 of P giving nested collars N1 = {P < eps1} and N2 = {P < eps2};
F = ((P - eps1)(P - eps2))**2 and a regular value gamma of F below its minimum
on a middle level {P = delta}; a signed power G0 = sigma (F - gamma)**2m folded
into [-c, c] by the clamp iteration; and the plateau polynomial
H = ((G - c)**l + (2c)**l)**r / (2c)**(l r), with c = gamma**2m.

All numerics use the normalised scale c = 1 (values divided by gamma**2m), which
leaves H unchanged and avoids under/overflow of gamma**2m.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import ndimage

from .errors import (AmbiguousComponent, EmptyLevelSet, ExhaustedRetries, ExponentSearchFailed,
                     InclusionViolated, NoConvergence)
from .pieces import Chain, Const, Context, InRegion, Piece, PieceList, Poly, Sign
from .poly import MultiPoly, scalar_from_json, scalar_to_json
from .sampling import SampledRegion, fd_jets, make_region
from .weierstrass import dist_poly

TAU_REG = 1e-3
TOL_FLAT = 1e-4
MAX_DRAWS = 64
MAX_CLAMP_ITER = 64
M_CAP, L_CAP, R_CAP = 32, 33, 32
FD_STEP = 1e-4


# ---------------------------------------------------------------------------
# level sets on grids

def bisect_segments(fun, A, B, iters: int = 60) -> np.ndarray:
    """Zeros of ``fun`` on segments [A_i, B_i] where it changes sign (vectorised)."""
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    fa = fun(A)
    for _ in range(iters):
        M = 0.5 * (A + B)
        fm = fun(M)
        same = np.sign(fm) == np.sign(fa)
        A[same] = M[same]
        fa[same] = fm[same]
        B[~same] = M[~same]
    return 0.5 * (A + B)


def crossing_edges(U: SampledRegion, values, level) -> np.ndarray:
    """Grid-adjacent sample pairs (i, j) with values - level changing sign."""
    pairs = U.neighbor_pairs()
    d = np.asarray(values) - level
    sel = (d[pairs[:, 0]] < 0) != (d[pairs[:, 1]] < 0)
    return pairs[sel]


def level_points(fun, U: SampledRegion, level: float, values=None) -> np.ndarray:
    """Points of {fun = level} located by bisection along crossing grid edges."""
    v = fun(U.points) if values is None else values
    e = crossing_edges(U, v, level)
    if len(e) == 0:
        return np.zeros((0, U.dim))
    return bisect_segments(lambda X: fun(X) - level, U.points[e[:, 0]], U.points[e[:, 1]])


def _gradient(P, X):
    g = np.asarray(P.grad(X), dtype=float)
    return g.reshape(len(X), -1)


def check_regular_value(values, grad_norm, level, h, tau=TAU_REG) -> bool:
    """Gradient bounded below by tau at grid samples within 2 h max(|grad|, tau) of the level.

    The floor tau keeps critical points next to the level in the tested set.
    """
    near = np.abs(values - level) < 2.0 * h * np.maximum(grad_norm, tau)
    return bool(np.all(grad_norm[near] >= tau))


# ---------------------------------------------------------------------------
# levels and collars

@dataclass
class RegionPair:
    eps1: float
    eps2: float
    n1_mask: np.ndarray  # U samples in the closure of N1 (P <= eps1)
    n2_mask: np.ndarray  # U samples in N2 (P < eps2)
    boundary1: np.ndarray
    boundary2: np.ndarray


def _level_range(P, K: SampledRegion, U: SampledRegion):
    a = float(np.max(P(K.points)))
    b = float(np.min(P(U.boundary_points())))
    return a, b


def pick_levels(P, K: SampledRegion, U: SampledRegion, rng, tau: float = TAU_REG):
    """Two regular levels sup_K P < eps1 < eps2 < inf_{boundary U} P."""
    rng = np.random.default_rng(rng)
    a, b = _level_range(P, K, U)
    if not a < b:
        raise ExhaustedRetries(f"empty admissible interval: sup_K P = {a:.4g} >= inf_dU P = {b:.4g}")
    vals = P(U.points)
    gn = np.linalg.norm(_gradient(P, U.points), axis=1)
    for _ in range(MAX_DRAWS):
        # lower and upper quarter of the interval: keeps the collar band wide in grid cells
        e1 = a + (b - a) * rng.uniform(1 / 16, 1 / 4)
        e2 = a + (b - a) * rng.uniform(3 / 4, 15 / 16)
        if check_regular_value(vals, gn, e1, U.h, tau) and check_regular_value(vals, gn, e2, U.h, tau):
            return float(e1), float(e2)
    raise ExhaustedRetries(f"no regular level pair in ({a:.4g}, {b:.4g}) after {MAX_DRAWS} draws")


def build_collar(P, eps1: float, eps2: float, U: SampledRegion, K: SampledRegion | None = None) -> RegionPair:
    """Sample descriptors of N1 = {P < eps1} and N2 = {P < eps2} inside U."""
    if not 0 < eps1 < eps2:
        raise InclusionViolated("need 0 < eps1 < eps2")
    vals = P(U.points)
    if K is not None and np.any(P(K.points) >= eps1):
        raise InclusionViolated("a sample of K lies outside N1")
    if np.any(vals[U.boundary_mask()] <= eps2):
        raise InclusionViolated("N2 reaches the boundary of U")
    b1 = level_points(P, U, eps1, vals)
    b2 = level_points(P, U, eps2, vals)
    return RegionPair(eps1, eps2, vals <= eps1, vals < eps2, b1, b2)


def pick_delta(P, eps1: float, eps2: float, U: SampledRegion, rng, tau: float = TAU_REG) -> float:
    rng = np.random.default_rng(rng)
    vals = P(U.points)
    gn = np.linalg.norm(_gradient(P, U.points), axis=1)
    third = (eps2 - eps1) / 3
    for _ in range(MAX_DRAWS):
        d = float(rng.uniform(eps1 + third, eps2 - third))
        if check_regular_value(vals, gn, d, U.h, tau):
            return d
    raise ExhaustedRetries("no regular middle level delta")


def collar_F(p, eps1, eps2):
    """F = ((P - eps1)(P - eps2))**2 as a function of the values of P."""
    return ((p - eps1) * (p - eps2)) ** 2


def pick_gamma(P, eps1: float, eps2: float, delta: float, U: SampledRegion, rng, tau: float = TAU_REG):
    """(gamma, alpha_min): alpha_min = min F on the delta-level, gamma a regular value below it."""
    rng = np.random.default_rng(rng)
    lev = level_points(P, U, delta)
    if len(lev) == 0:
        raise EmptyLevelSet(f"no samples near the level P = {delta:.4g}")
    alpha = float(np.min(collar_F(P(lev), eps1, eps2)))
    if not alpha > 0:
        raise EmptyLevelSet("F vanishes on the delta-level")
    p = P(U.points)
    gp = np.linalg.norm(_gradient(P, U.points), axis=1)
    F = collar_F(p, eps1, eps2)
    dF = np.abs(2.0 * (p - eps1) * (p - eps2) * (2.0 * p - eps1 - eps2)) * gp
    for _ in range(MAX_DRAWS):
        gamma = float(rng.uniform(0.55, 0.95) * alpha)
        # regularity of F - gamma checked on the relative scale F / gamma
        if check_regular_value(F / gamma, dF / gamma, 1.0, U.h, tau):
            return gamma, alpha
    raise ExhaustedRetries("no regular value gamma of F below alpha")


# ---------------------------------------------------------------------------
# signs, clamp, plateau

def sign_rule(p, q, delta):
    """sigma = -1 on the part of {F < gamma} beyond the middle level, +1 elsewhere.

    ``q`` is F / gamma - 1.
    """
    return np.where((q < 0) & (p > delta), -1.0, 1.0)


def _face_mask(U: SampledRegion) -> np.ndarray:
    """Samples on the outer layer of the grid."""
    shape = np.asarray(U.grid_shape)
    return np.any((U.grid_index == 0) | (U.grid_index == shape - 1), axis=1)


def _off_faces(U: SampledRegion, X, cells: float = 0.5) -> np.ndarray:
    X = np.atleast_2d(X)
    if not len(X):
        return X
    margin = max(cells * U.h, 8 * FD_STEP)
    keep = np.all((X > U.lo + margin) & (X < U.hi - margin), axis=1)
    return X[keep]


def sign_components(P, eps1, eps2, delta, gamma, U: SampledRegion):
    """Flood-fill labels of the grid components of U minus T = {F = gamma}.

    Components containing an endpoint of a grid edge crossing {P = eps2} get -1,
    all others +1. The result is compared with ``sign_rule`` on the collar band.
    Returns (labels dict, per-sample sign array, per-sample component ids).
    """
    p = P(U.points)
    q = collar_F(p, eps1, eps2) / gamma - 1.0
    below = q < 0
    structure = ndimage.generate_binary_structure(U.dim, 1)
    ids = np.empty(len(p), dtype=int)
    offset = 0
    for cls in (True, False):
        grid = np.zeros(U.grid_shape, dtype=bool)
        sel = below == cls
        grid[tuple(U.grid_index[sel].T)] = True
        lab, n = ndimage.label(grid, structure=structure)
        ids[sel] = lab[tuple(U.grid_index[sel].T)] - 1 + offset
        offset += n
    touch1 = np.unique(ids[crossing_edges(U, p, eps1).ravel()])
    touch2 = np.unique(ids[crossing_edges(U, p, eps2).ravel()])
    both = np.intersect1d(touch1, touch2)
    if len(both):
        raise AmbiguousComponent(f"component(s) {both.tolist()} touch both collar boundaries; refine the grid")
    labels = {int(c): (-1 if c in set(touch2.tolist()) else 1) for c in np.unique(ids)}
    band = (p > eps1) & (p < eps2)
    if U.descriptor.get("open_box", False):
        # a component cut by a box face may end before reaching either collar boundary;
        # it takes the level-set rule, which must then be constant on it
        rule = sign_rule(p, q, delta)
        face = _face_mask(U)
        for c in np.setdiff1d(np.unique(ids[face]), np.union1d(touch1, touch2)):
            vals = np.unique(rule[(ids == c) & band])
            if len(vals) > 1:
                raise AmbiguousComponent(f"component {int(c)} at the box face has mixed signs; refine the grid")
            if len(vals):
                labels[int(c)] = int(vals[0])
    sigma = np.array([labels[int(c)] for c in ids], dtype=float)
    if np.any(sigma[band] != sign_rule(p[band], q[band], delta)):
        raise AmbiguousComponent("grid labels disagree with the level-set sign rule; refine the grid")
    return labels, sigma, ids


def smooth_clamp_iterate(g0, c: float = 1.0, max_iter: int = MAX_CLAMP_ITER):
    """Fold values into [-c, c] by G+ = -|G- - c| + c, G- = |G+ + c| - c.

    Returns (folded values, iteration count); at least one iteration is done.
    """
    g = np.array(g0, dtype=float)
    tol = c * 1e-12
    for it in range(1, max_iter + 1):
        gp = -np.abs(g - c) + c
        g = np.abs(gp + c) - c
        if np.all(np.abs(g) <= c + tol):
            return g, it
    raise NoConvergence(f"clamp iteration did not settle in {max_iter} steps")


def plateau(ghat, c: float, l: int, r: int):
    """H = ((G - c)**l + (2c)**l)**r / (2c)**(l r), evaluated as ((((G/c) - 1)/2)**l + 1)**r."""
    u = (np.asarray(ghat, dtype=float) / c - 1.0) / 2.0
    return (u ** l + 1.0) ** r


def build_plateau(ghat, gamma: float, m: int, l: int, r: int):
    """Plateau values for folded values given on the unnormalised scale c = gamma**2m."""
    if l % 2 == 0:
        raise ValueError("l must be odd")
    return plateau(ghat, gamma ** (2 * m), l, r)


# ---------------------------------------------------------------------------
# the bump and its certificate

@dataclass
class Bump:
    """beta = 1 on the closure of N1, 0 off N2 or outside U, H on N2 minus N1."""

    P: object
    eps1: float
    eps2: float
    delta: float
    gamma: float
    m: int
    l: int
    r: int
    U_descriptor: dict
    _U_region: object = field(default=None, repr=False)

    @property
    def U_region(self):
        if self._U_region is None:
            self._U_region = make_region(self.U_descriptor)
        return self._U_region

    def normalized_g0(self, p):
        q = collar_F(p, self.eps1, self.eps2) / self.gamma - 1.0
        return sign_rule(p, q, self.delta) * q ** (2 * self.m)

    def __call__(self, X, return_iterations: bool = False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = np.asarray(self.U_region.membership(X), dtype=bool)
        out = np.zeros(len(X))
        p = np.full(len(X), np.inf)
        p[inside] = self.P(X[inside])
        out[inside & (p <= self.eps1)] = 1.0
        band = inside & (p > self.eps1) & (p < self.eps2)
        its = 0
        if band.any():
            g, its = smooth_clamp_iterate(self.normalized_g0(p[band]), 1.0)
            out[band] = plateau(g, 1.0, self.l, self.r)
        return (out, its) if return_iterations else out

    def domain_region(self) -> SampledRegion:
        return self.U_region

    def fold_branches(self) -> int:
        """Largest fold index needed on the band, from the bound F <= ((eps2 - eps1)/2)**4."""
        fmax = ((self.eps2 - self.eps1) / 2) ** 4
        smax = max(fmax / self.gamma - 1.0, 0.0) ** (2 * self.m)
        return int(np.ceil(max(smax - 1.0, 0.0) / 2.0))

    def pieces(self, region_name: str = "U") -> PieceList:
        """Stratification of R^n with one polynomial expression of beta per piece."""
        u = MultiPoly.variable(1, 0)
        base = Chain(Poly(self.P), [])
        P1 = base.then(u - self.eps1)
        P2 = base.then(u - self.eps2)
        Pd = base.then(u - self.delta)
        q = base.then((u - self.eps1) * (u - self.eps2), u * u, u / self.gamma - 1.0)
        inU = InRegion(region_name, True)
        tail = [(u - 1.0) / 2.0, u ** self.l, u + 1.0, u ** self.r]
        band = [inU, Sign(P1, ">", "P1"), Sign(P2, "<", "P2")]
        pcs = [
            Piece([InRegion(region_name, False)], Const(0.0), "outside U"),
            Piece([inU, Sign(P1, "<=", "P1")], Const(1.0), "plateau"),
            Piece([inU, Sign(P2, ">=", "P2")], Const(0.0), "exterior"),
            Piece(band + [Sign(q, "<", "F-gamma"), Sign(Pd, ">", "P-delta")],
                  q.then(u ** (2 * self.m), -u, *tail), "band, sigma=-1"),
            Piece(band + [Sign(q, "<", "F-gamma"), Sign(Pd, "<=", "P-delta")],
                  q.then(u ** (2 * self.m), *tail), "band, sigma=+1 inner"),
        ]
        s = q.then(u ** (2 * self.m))
        imax = self.fold_branches()
        for i in range(imax + 1):
            conds = band + [Sign(q, ">=", "F-gamma")]
            if i > 0:
                conds.append(Sign(s.then(u - (2 * i - 1)), ">=", f"clamp>{2 * i - 1}"))
            if i < imax:
                conds.append(Sign(s.then(u - (2 * i + 1)), "<", f"clamp<{2 * i + 1}"))
            fold = (-1) ** i * (u - 2 * i)
            pcs.append(Piece(conds, s.then(fold, *tail), f"band, sigma=+1 outer, fold {i}"))
        return PieceList(pcs, Context(regions={region_name: self.U_descriptor}))

    def to_json(self) -> dict:
        return {"P": scalar_to_json(self.P), "eps1": self.eps1, "eps2": self.eps2, "delta": self.delta,
                "gamma": self.gamma, "m": self.m, "l": self.l, "r": self.r, "U": self.U_descriptor}

    @classmethod
    def from_json(cls, d: dict) -> "Bump":
        return cls(scalar_from_json(d["P"]), d["eps1"], d["eps2"], d["delta"], d["gamma"],
                   d["m"], d["l"], d["r"], d["U"])


@dataclass
class BumpCertificate:
    P: object
    eps1: float
    eps2: float
    delta: float
    gamma: float
    alpha_min: float
    m: int
    l: int
    r: int
    sign_labels: dict
    pieces: PieceList
    grid_h: float
    flatness: dict = field(default_factory=dict)
    search_history: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"P": scalar_to_json(self.P), "eps1": self.eps1, "eps2": self.eps2, "delta": self.delta,
                "gamma": self.gamma, "alpha_min": self.alpha_min, "m": self.m, "l": self.l, "r": self.r,
                "sign_labels": {str(k): v for k, v in sorted(self.sign_labels.items())},
                "grid_h": self.grid_h, "flatness": self.flatness, "search_history": self.search_history,
                "pieces": self.pieces.to_json()}


def _side_patterns(dim: int):
    return [np.array(s) for s in product((-1, 1), repeat=dim)]


def boundary_derivatives(beta, points, k: int, step: float = FD_STEP) -> np.ndarray:
    """Largest one-sided FD partial of order 1..k at each point, over all side patterns."""
    points = np.atleast_2d(points)
    if len(points) == 0:
        return np.zeros(0)
    out = np.zeros(len(points))
    for s in _side_patterns(points.shape[1]):
        sides = np.tile(s, (len(points), 1))
        J = fd_jets(beta, points, k, step, sides=sides, richardson=False)
        out = np.maximum(out, np.max(np.abs(J.values[:, 1:, 0]), axis=1))
    return out


def seam_jump(beta, points, k: int, step: float = FD_STEP) -> np.ndarray:
    """Largest relative disagreement of one-sided FD jets across a hypersurface at each point."""
    points = np.atleast_2d(points)
    if len(points) == 0:
        return np.zeros(0)
    pats = _side_patterns(points.shape[1])
    jets = [fd_jets(beta, points, k, step, sides=np.tile(s, (len(points), 1)), richardson=False).values[:, 1:, 0]
            for s in pats]
    J = np.stack(jets)
    spread = J.max(axis=0) - J.min(axis=0)
    scale = 1.0 + np.abs(J).max(axis=0)
    return np.max(spread / scale, axis=1)


def _odd_at_least(v: int) -> int:
    return v if v % 2 else v + 1


def exponent_candidates(k: int):
    # sigma (F - gamma)**2m is only C^(2m-1) across T whatever l and r are,
    # so smaller m can never give a C^k bump
    ms = [1]
    while 2 * ms[-1] - 1 < k:
        ms[-1] *= 2
    while ms[-1] * 2 <= M_CAP:
        ms.append(ms[-1] * 2)
    ls = [_odd_at_least(k + 1)]
    while 2 * ls[-1] - 1 <= L_CAP:
        ls.append(2 * ls[-1] - 1)
    rs = [1]
    while rs[-1] * 2 <= R_CAP:
        rs.append(rs[-1] * 2)
    return ms, ls, rs


def make_bump(K: SampledRegion, U: SampledRegion, k: int, seed=0, tol_flat: float = TOL_FLAT,
              tol_seam: float = 1e-2, P=None):
    """Build beta, its certificate and the collar pair for K inside U."""
    rng = np.random.default_rng(seed)
    if P is None:
        eps_fit = float(np.min(K.dist(U.boundary_points()))) / 8.0
        P, _ = dist_poly(K, U, eps_fit)
    eps1, eps2 = pick_levels(P, K, U, rng)
    pair = build_collar(P, eps1, eps2, U, K)
    delta = pick_delta(P, eps1, eps2, U, rng)
    gamma, alpha = pick_gamma(P, eps1, eps2, delta, U, rng)
    labels, _, _ = sign_components(P, eps1, eps2, delta, gamma, U)
    # the hypersurface T = {F = gamma} inside the band, where sigma may flip
    p = P(U.points)
    band_mask = (p > eps1) & (p < eps2)
    T_pts = level_points(lambda X: collar_F(P(X), eps1, eps2) / gamma, U, 1.0)
    if len(T_pts):
        pt = P(T_pts)
        T_pts = T_pts[(pt > eps1) & (pt < eps2)]
    bnd = np.concatenate([pair.boundary1, pair.boundary2])
    if U.descriptor.get("open_box", False):
        # outside its box the region is empty by definition; check only away from the faces
        bnd, T_pts = _off_faces(U, bnd), _off_faces(U, T_pts)
    history = []
    ms, ls, rs = exponent_candidates(k)
    for m in ms:
        for l in ls:
            for r in rs:
                beta = Bump(P, eps1, eps2, delta, gamma, m, l, r, dict(U.descriptor), U)
                d = float(np.max(boundary_derivatives(beta, bnd, k), initial=0.0))
                j = float(np.max(seam_jump(beta, T_pts, k), initial=0.0))
                history.append({"m": m, "l": l, "r": r, "boundary_derivative": d, "seam_jump": j})
                if d < tol_flat and j < tol_seam:
                    cert = BumpCertificate(P, eps1, eps2, delta, gamma, alpha, m, l, r, labels,
                                           beta.pieces(), U.h,
                                           {"boundary_derivative": d, "seam_jump": j,
                                            "band_samples": int(band_mask.sum())}, history)
                    return beta, cert, pair
    raise ExponentSearchFailed(f"no exponents within caps give flatness {tol_flat}; last {history[-1]}")
