"""Sampled compact sets, finite-difference jets and the C^l seminorm estimate."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import BadSpec, EvalFailed, MissingJets

DEFAULT_EDGE_SAMPLES = 33
DEFAULT_STEP = 1e-4


def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``n`` with total degree <= order, graded order."""
    out = [a for a in product(range(order + 1), repeat=n) if sum(a) <= order]
    return sorted(out, key=lambda a: (sum(a), tuple(-x for x in a)))


# ---------------------------------------------------------------------------
# regions

@dataclass
class SampledRegion:
    """A compact set given by a deterministic sample plus membership/distance oracles.

    Grid-backed regions also carry ``grid_axes`` and ``grid_index`` so that
    neighbour relations (boundary detection, flood fill) are available.
    """

    dim: int
    points: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    membership: Callable[[np.ndarray], np.ndarray]
    dist: Callable[[np.ndarray], np.ndarray]
    h: float
    grid_axes: list | None = None
    grid_index: np.ndarray | None = None
    descriptor: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def has_grid(self) -> bool:
        return self.grid_axes is not None

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.grid_axes)

    def grid_mask(self) -> np.ndarray:
        m = np.zeros(self.grid_shape, dtype=bool)
        m[tuple(self.grid_index.T)] = True
        return m

    def _neighbor_pairs(self):
        """Yield (i, j) index pairs of grid-adjacent member points (4/6-connectivity)."""
        lookup = -np.ones(self.grid_shape, dtype=int)
        lookup[tuple(self.grid_index.T)] = np.arange(len(self.points))
        pairs = []
        for ax in range(self.dim):
            nb = self.grid_index.copy()
            nb[:, ax] += 1
            ok = nb[:, ax] < self.grid_shape[ax]
            j = np.full(len(self.points), -1)
            j[ok] = lookup[tuple(nb[ok].T)]
            sel = j >= 0
            pairs.append(np.stack([np.nonzero(sel)[0], j[sel]], axis=1))
        return np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=int)

    def neighbor_pairs(self) -> np.ndarray:
        if not self.has_grid:
            raise BadSpec("region has no grid structure")
        if not hasattr(self, "_pairs_cache"):
            self._pairs_cache = self._neighbor_pairs()
        return self._pairs_cache

    def boundary_mask(self) -> np.ndarray:
        """Members with at least one grid neighbour outside the region (or off the grid)."""
        if not self.has_grid:
            return np.ones(len(self.points), dtype=bool)
        mask = self.grid_mask()
        # regions relative to an open box do not count the box faces as boundary
        padded = np.pad(mask, 1, constant_values=bool(self.descriptor.get("open_box", False)))
        out = np.zeros(len(self.points), dtype=bool)
        idx = self.grid_index + 1
        for ax in range(self.dim):
            for s in (-1, 1):
                nb = idx.copy()
                nb[:, ax] += s
                out |= ~padded[tuple(nb.T)]
        return out

    def boundary_points(self) -> np.ndarray:
        return self.points[self.boundary_mask()]

    def component_labels(self) -> np.ndarray:
        """Grid connected-component label (0-based) of every sample."""
        if not self.has_grid:
            return np.zeros(len(self.points), dtype=int)
        structure = ndimage.generate_binary_structure(self.dim, 1)
        lab, _ = ndimage.label(self.grid_mask(), structure=structure)
        raw = lab[tuple(self.grid_index.T)]
        # relabel in order of first appearance so labels are canonical
        _, first = np.unique(raw, return_index=True)
        order = np.argsort(first)
        remap = {int(raw[first[k]]): r for r, k in enumerate(order)}
        return np.array([remap[int(v)] for v in raw], dtype=int)

    def subregion(self, mask: np.ndarray, membership=None, descriptor=None) -> "SampledRegion":
        """Region made of the samples selected by ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        pts = self.points[mask]
        tree = cKDTree(pts) if len(pts) else None
        if membership is None:
            parent = self.membership
            h = self.h

            def membership(X, _tree=tree):
                X = np.atleast_2d(X)
                if _tree is None:
                    return np.zeros(len(X), dtype=bool)
                return parent(X) & (_tree.query(X)[0] <= 0.5 * h)

        def dist(X, _tree=tree):
            return _tree.query(np.atleast_2d(X))[0]

        lo = pts.min(axis=0) if len(pts) else self.lo.copy()
        hi = pts.max(axis=0) if len(pts) else self.hi.copy()
        return SampledRegion(self.dim, pts, lo, hi, membership, dist, self.h,
                             self.grid_axes, None if self.grid_index is None else self.grid_index[mask],
                             descriptor or {"kind": "subset", "parent": self.descriptor})


def _axes(lo, hi, h):
    axes = []
    for a, b in zip(lo, hi):
        if b < a:
            raise BadSpec("box with hi < lo")
        n = int(np.ceil((b - a) / h - 1e-9)) + 1 if b > a else 1
        axes.append(np.linspace(a, b, n))
    return axes


def _grid_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    idx = np.stack([m.ravel() for m in np.meshgrid(*[np.arange(len(a)) for a in axes], indexing="ij")], axis=1)
    return pts, idx


def grid_region(lo, hi, h, membership, dist=None, descriptor=None) -> SampledRegion:
    """Grid over the box [lo, hi] with spacing <= h, keeping points accepted by ``membership``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = _axes(lo, hi, h)
    pts, idx = _grid_points(axes)
    keep = np.asarray(membership(pts), dtype=bool)
    pts, idx = pts[keep], idx[keep]
    if dist is None:
        tree = cKDTree(pts)

        def dist(X):
            return tree.query(np.atleast_2d(X))[0]

    spacing = max((a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes)
    return SampledRegion(len(lo), pts, lo, hi, membership, dist, spacing, axes, idx, descriptor or {})


def _default_h(lo, hi):
    edges = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    edges = edges[edges > 0]
    return float(edges.min()) / (DEFAULT_EDGE_SAMPLES - 1) if edges.size else 1.0


def make_region(spec: dict) -> SampledRegion:
    """Build a region from a JSON descriptor (box, ball, points, product, neighborhood)."""
    try:
        kind = spec["kind"]
    except (KeyError, TypeError):
        raise BadSpec("region descriptor needs a 'kind'")
    if "h" in spec and not spec["h"] > 0:
        raise BadSpec("sampling resolution h must be positive")

    if kind == "box":
        lo = np.atleast_1d(np.asarray(spec["lo"], dtype=float))
        hi = np.atleast_1d(np.asarray(spec["hi"], dtype=float))
        if lo.shape != hi.shape:
            raise BadSpec("lo/hi dimension mismatch")
        h = float(spec.get("h") or _default_h(lo, hi))
        tol = 1e-12

        def member(X):
            X = np.atleast_2d(X)
            return np.all((X >= lo - tol) & (X <= hi + tol), axis=1)

        def dist(X):
            X = np.atleast_2d(X)
            d = np.maximum(lo - X, 0) + np.maximum(X - hi, 0)
            return np.linalg.norm(d, axis=1)

        return grid_region(lo, hi, h, member, dist, dict(spec))

    if kind == "ball":
        c = np.atleast_1d(np.asarray(spec["center"], dtype=float))
        r = float(spec["radius"])
        if r <= 0:
            raise BadSpec("ball radius must be positive")
        h = float(spec.get("h") or 2 * r / (DEFAULT_EDGE_SAMPLES - 1))

        def member(X):
            return np.linalg.norm(np.atleast_2d(X) - c, axis=1) <= r + 1e-12

        def dist(X):
            return np.maximum(np.linalg.norm(np.atleast_2d(X) - c, axis=1) - r, 0.0)

        # grid anchored at the center so the center is a sample
        n = int(np.ceil(r / h - 1e-9))
        return grid_region(c - n * h, c + n * h, h, member, dist, dict(spec))

    if kind == "points":
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        if pts.size == 0:
            raise BadSpec("empty point list")
        tree = cKDTree(pts)

        def dist(X):
            return tree.query(np.atleast_2d(X))[0]

        def member(X):
            return dist(X) <= 1e-12

        return SampledRegion(pts.shape[1], pts, pts.min(0), pts.max(0), member, dist,
                             float(spec.get("h", 0.0)), descriptor=dict(spec))

    if kind == "product":
        factors = [make_region(f) for f in spec["factors"]]
        if not factors:
            raise BadSpec("product needs factors")
        dims = [f.dim for f in factors]
        splits = np.cumsum(dims)[:-1]

        def member(X):
            parts = np.split(np.atleast_2d(X), splits, axis=1)
            return np.all([f.membership(p) for f, p in zip(factors, parts)], axis=0)

        def dist(X):
            parts = np.split(np.atleast_2d(X), splits, axis=1)
            return np.sqrt(sum(f.dist(p) ** 2 for f, p in zip(factors, parts)))

        lo = np.concatenate([f.lo for f in factors])
        hi = np.concatenate([f.hi for f in factors])
        if all(f.has_grid for f in factors):
            axes = [a for f in factors for a in f.grid_axes]
            pts, idx = _grid_points(axes)
            keep = member(pts)
            h = max(f.h for f in factors)
            return SampledRegion(len(lo), pts[keep], lo, hi, member, dist, h, axes, idx[keep], dict(spec))
        grids = [f.points for f in factors]
        pts = np.array([np.concatenate(c) for c in product(*grids)])
        return SampledRegion(len(lo), pts, lo, hi, member, dist, max(f.h for f in factors),
                             descriptor=dict(spec))

    if kind == "neighborhood":
        centers = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        r = float(spec["radius"])
        lo = np.asarray(spec["lo"], dtype=float)
        hi = np.asarray(spec["hi"], dtype=float)
        tree = cKDTree(centers)

        def member(X):
            X = np.atleast_2d(X)
            inside = np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)
            return inside & (tree.query(X)[0] < r)

        return grid_region(lo, hi, float(spec["h"]), member, None, dict(spec))

    if kind == "sublevel":
        # {x in the box : p(x) < level} for a polynomial p in JSON form; the box faces
        # are not part of the region's boundary
        from .poly import scalar_from_json

        p = scalar_from_json(spec["poly"])
        level = float(spec["level"])
        lo = np.asarray(spec["lo"], dtype=float)
        hi = np.asarray(spec["hi"], dtype=float)

        if not spec.get("open_box", False):
            raise BadSpec("sublevel regions are taken relative to their box")

        def member(X):
            X = np.atleast_2d(X)
            inside = np.all((X >= lo) & (X <= hi), axis=1)
            out = np.zeros(len(X), dtype=bool)
            if inside.any():
                out[inside] = p(X[inside]) < level
            return out

        return grid_region(lo, hi, float(spec["h"]), member, None, dict(spec))

    raise BadSpec(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# finite differences

@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[float, ...], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) ~ h^order f^(order)(x)."""
    o = np.asarray(offsets, dtype=float)
    k = len(o)
    A = np.vander(o, k, increasing=True).T
    b = np.zeros(k)
    b[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, b)


def _offsets_1d(order: int, side: int) -> tuple[float, ...]:
    if order == 0:
        return (0.0,)
    if side == 0:
        q = (order + 1) // 2
        return tuple(float(i) for i in range(-q, q + 1))
    return tuple(float(side * i) for i in range(order + 2))


def _stencil(alpha, sides, scale):
    """Offsets (in units of the base step) and weights for d^alpha at one side pattern."""
    per_axis = []
    for a, s in zip(alpha, sides):
        offs = _offsets_1d(a, s)
        per_axis.append((np.asarray(offs) * scale, fd_weights(offs, a) / scale ** a))
    offsets = np.array(list(product(*[p[0] for p in per_axis])))
    weights = np.array([np.prod(w) for w in product(*[p[1] for p in per_axis])])
    return offsets, weights


def _order_step(step: float, total_order: int) -> float:
    # orders >= 3 need a larger step to stay above round-off
    if total_order <= 2:
        return step
    return max(step, 1e-16 ** (1.0 / (total_order + 2)))


@dataclass
class JetTable:
    """Partials up to ``order`` at sample points; ``values[i, a, j]`` is d^alphas[a] f_j at points[i]."""

    order: int
    alphas: list
    points: np.ndarray
    values: np.ndarray

    def get(self, alpha) -> np.ndarray:
        return self.values[:, self.alphas.index(tuple(alpha)), :]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.points.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["alpha", "component", "value"])
        for i, x in enumerate(self.points):
            for a, alpha in enumerate(self.alphas):
                for j in range(self.values.shape[2]):
                    w.writerow([repr(float(v)) for v in x] + ["-".join(map(str, alpha)), j,
                                                               repr(float(self.values[i, a, j]))])
        return buf.getvalue()


def _call(f, X):
    try:
        Y = np.asarray(f(X), dtype=float)
    except Exception as exc:  # noqa: BLE001 - surface any evaluator failure uniformly
        raise EvalFailed(f"evaluator raised {type(exc).__name__}: {exc}") from exc
    if Y.ndim == 1:
        Y = Y[:, None]
    if not np.all(np.isfinite(Y)):
        raise EvalFailed("evaluator returned non-finite values")
    return Y


def fd_jets(f, X, order: int, step: float = DEFAULT_STEP, sides=None, richardson: bool = True) -> JetTable:
    """Finite-difference partials up to ``order`` (<= 4) of a vectorised evaluator.

    ``sides[i, k]`` in {-1, 0, 1} selects a backward, central or forward stencil
    along axis k at point i. One level of Richardson extrapolation is applied to
    derivatives of total order <= 2.
    """
    if order > 4:
        raise ValueError("jets are supported up to order 4")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    alphas = multi_indices(n, order)
    sides = np.zeros((N, n), dtype=int) if sides is None else np.asarray(sides, dtype=int).reshape(N, n)
    values = None
    patterns, inverse = np.unique(sides, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for pi, pattern in enumerate(patterns):
        rows = np.nonzero(inverse == pi)[0]
        plan = []
        keys: dict[tuple, int] = {}
        for alpha in alphas:
            levels = [1.0, 0.5] if richardson and 0 < sum(alpha) <= 2 else [1.0]
            for lev in levels:
                offs, w = _stencil(alpha, pattern, lev)
                ids = []
                for o in offs:
                    key = tuple(np.round(o * 4).astype(int))
                    if key not in keys:
                        keys[key] = len(keys)
                    ids.append(keys[key])
                plan.append((alpha, lev, np.array(ids), w))
        offsets = np.zeros((len(keys), n))
        for key, i in keys.items():
            offsets[i] = np.asarray(key) / 4.0
        raw: dict[tuple, dict[float, np.ndarray]] = {}
        for hs in sorted({_order_step(step, sum(alpha)) for alpha in alphas}):
            group = [p for p in plan if _order_step(step, sum(p[0])) == hs]
            used = sorted({int(i) for p in group for i in p[2]})
            col = {k: c for c, k in enumerate(used)}
            P = (X[rows, None, :] + hs * offsets[None, used, :]).reshape(-1, n)
            Y = _call(f, P).reshape(len(rows), len(used), -1)
            if values is None:
                values = np.zeros((N, len(alphas), Y.shape[2]))
            for alpha, lev, ids, w in group:
                d = np.einsum("k,nkp->np", w, Y[:, [col[int(i)] for i in ids], :]) / hs ** sum(alpha)
                raw.setdefault(alpha, {})[lev] = d
        for a, alpha in enumerate(alphas):
            r = raw[alpha]
            values[rows, a, :] = (4 * r[0.5] - r[1.0]) / 3 if 0.5 in r else r[1.0]
    return JetTable(order, alphas, X, values)


def fd_jet(f, x, l: int, step: float = DEFAULT_STEP) -> dict:
    """Jet row at a single point: multi-index -> array of component partials."""
    jt = fd_jets(f, np.atleast_2d(np.asarray(x, dtype=float)), l, step)
    return {alpha: jt.values[0, a] for a, alpha in enumerate(jt.alphas)}


def poly_jets(polys, X, order: int) -> JetTable:
    """Exact jets of a list of scalar polynomials (MultiPoly or ChebPoly)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    alphas = multi_indices(n, order)
    vals = np.zeros((len(X), len(alphas), len(polys)))
    for j, p in enumerate(polys):
        for a, alpha in enumerate(alphas):
            q = p
            for ax, k in enumerate(alpha):
                for _ in range(k):
                    q = q.partial(ax)
            vals[:, a, j] = q(X)
    return JetTable(order, alphas, X, vals)


class SeminormEstimate(NamedTuple):
    value: float
    grid_h: float


def seminorm_from_jets(jets: JetTable, l: int) -> float:
    if jets.order < l:
        raise MissingJets(f"jets of order {jets.order} cannot give a C^{l} seminorm")
    total = 0.0
    for a, alpha in enumerate(jets.alphas):
        if sum(alpha) <= l:
            total += float(np.sum(np.max(np.abs(jets.values[:, a, :]), axis=0)))
    return total


def seminorm_estimate(f, L: SampledRegion, l: int, step: float = DEFAULT_STEP) -> SeminormEstimate:
    """Grid lower bound of sum_j sum_{|alpha|<=l} sup_L |d^alpha f_j|."""
    if isinstance(f, JetTable):
        if len(f.points) != len(L.points):
            raise MissingJets("jet table does not cover every sample of L")
        return SeminormEstimate(seminorm_from_jets(f, l), L.h)
    jets = fd_jets(f, L.points, l, step)
    return SeminormEstimate(seminorm_from_jets(jets, l), L.h)
