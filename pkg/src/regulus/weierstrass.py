"""Polynomial approximation with derivative control.

The default fitter is least-squares jet collocation: values and all partials up
to order ``l`` at the sample points are matched in a tensor Chebyshev basis on
the region's bounding box, with a small ridge term. Degrees are tried in the
fixed order 4, 8, 16, 32, 64 per variable until the measured C^l error is
below the target.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import least_squares
from scipy.stats import binom

from .errors import DegreeCapExceeded
from .poly import ChebPoly, PolyMap, SquaredPoly
from .sampling import JetTable, SampledRegion, fd_jets, multi_indices, poly_jets, seminorm_from_jets

BUDGETS = (4, 8, 16, 32, 64)
RIDGE = 1e-10
BERNSTEIN_MAX_DEGREE = 40
MAX_UNKNOWNS = 4500
MAX_DESIGN_ENTRIES = 6_000_000
MAX_CHECK_POINTS = 20_000


@dataclass
class FitReport:
    degree: int
    basis: str
    achieved_error: float
    grid_h: float
    history: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _fit_box(L: SampledRegion):
    lo = L.points.min(axis=0).astype(float)
    hi = L.points.max(axis=0).astype(float)
    lo = np.minimum(lo, L.lo) if L.lo.shape == lo.shape else lo
    hi = np.maximum(hi, L.hi) if L.hi.shape == hi.shape else hi
    # a box only a few cells wide would make the basis (and its derivatives) badly scaled
    pad = np.maximum(2.0 * L.h - (hi - lo) / 2.0, 0.0) if L.h > 0 else 0.0
    lo, hi = lo - pad, hi + pad
    flat = hi - lo < 1e-9
    lo[flat] -= 0.5
    hi[flat] += 0.5
    return lo, hi


def _derivative_vander(t, deg, order, scale):
    """Values of d^order/dx^order T_j at points ``t`` (shape N x (deg+1))."""
    if order == 0:
        return C.chebvander(t, deg)
    if order > deg:
        return np.zeros((len(t), deg + 1))
    D = C.chebder(np.eye(deg + 1), m=order)  # (deg+1-order, deg+1)
    return C.chebvander(t, deg - order) @ D * scale ** order


def _design(X, lo, hi, deg, alphas):
    n = X.shape[1]
    T = (2.0 * X - (lo + hi)) / (hi - lo)
    scale = 2.0 / (hi - lo)
    blocks = []
    for alpha in alphas:
        M = np.ones((len(X), 1))
        for ax in range(n):
            V = _derivative_vander(T[:, ax], deg, alpha[ax], scale[ax])
            M = (M[:, :, None] * V[:, None, :]).reshape(len(X), -1)
        blocks.append(M)
    return np.concatenate(blocks, axis=0)


def _solve_ridge(A, b, ridge=RIDGE):
    k = A.shape[1]
    Aaug = np.vstack([A, np.sqrt(ridge) * np.eye(k)])
    baug = np.vstack([b, np.zeros((k, b.shape[1]))])
    sol, *_ = np.linalg.lstsq(Aaug, baug, rcond=None)
    return sol


def _cell_centers(L: SampledRegion) -> np.ndarray:
    """Grid cell centres inside L, used to catch fits that oscillate between samples."""
    if not L.has_grid or len(L.points) < 2:
        return np.zeros((0, L.dim))
    X = L.points + 0.5 * L.h
    X = X[np.asarray(L.membership(X), dtype=bool)]
    if len(X) > MAX_CHECK_POINTS:
        X = X[np.linspace(0, len(X) - 1, MAX_CHECK_POINTS).round().astype(int)]
    return X


def _row_subsample(npts: int, nalpha: int, ncols: int) -> np.ndarray:
    """Evenly strided sample indices keeping the design matrix within MAX_DESIGN_ENTRIES."""
    keep = max(ncols, MAX_DESIGN_ENTRIES // max(ncols * nalpha, 1))
    if keep >= npts:
        return np.arange(npts)
    return np.unique(np.linspace(0, npts - 1, keep).round().astype(int))


def lsq_jet_fit(jets: JetTable, lo, hi, deg: int, l: int) -> PolyMap:
    """Least-squares fit of a tensor Chebyshev polynomial of degree ``deg`` to a jet table."""
    alphas = [a for a in jets.alphas if sum(a) <= l]
    n = jets.points.shape[1]
    rows = _row_subsample(len(jets.points), len(alphas), (deg + 1) ** n)
    A = _design(jets.points[rows], lo, hi, deg, alphas)
    b = np.concatenate([jets.get(a)[rows] for a in alphas], axis=0)
    coef = _solve_ridge(A, b)
    shape = (deg + 1,) * n
    return PolyMap([ChebPoly(coef[:, j].reshape(shape), lo, hi) for j in range(coef.shape[1])])


def bernstein_fit(h, lo, hi, deg: int) -> PolyMap:
    """Tensor Bernstein approximant B_deg(h) on the box, returned in Chebyshev form."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    k = np.arange(deg + 1)
    knots = np.stack(np.meshgrid(*[lo[i] + (hi[i] - lo[i]) * k / deg for i in range(n)], indexing="ij"), -1)
    vals = np.asarray(h(knots.reshape(-1, n)), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals.reshape((deg + 1,) * n + (-1,))
    # interpolate the Bernstein polynomial at Chebyshev-Lobatto nodes: exact for degree deg
    nodes = np.cos(np.pi * np.arange(deg + 1) / deg)[::-1]
    Bmat = binom.pmf(k[None, :], deg, ((nodes + 1) / 2)[:, None])  # node x k
    Vinv = np.linalg.inv(C.chebvander(nodes, deg))
    coef = vals
    for ax in range(n):
        coef = np.moveaxis(np.tensordot(Vinv @ Bmat, coef, axes=([1], [ax])), 0, ax)
    return PolyMap([ChebPoly(coef[..., j], lo, hi) for j in range(coef.shape[-1])])


def _as_jets(h, L, l, jets, step):
    if jets is not None:
        return jets(L.points) if callable(jets) else jets
    return fd_jets(h, L.points, l, step)


def fit_error(target: JetTable, p: PolyMap, l: int) -> float:
    pj = poly_jets(p.components, target.points, l)
    keep = [i for i, a in enumerate(target.alphas) if sum(a) <= l]
    diff = JetTable(l, [target.alphas[i] for i in keep], target.points,
                    target.values[:, keep, :] - pj.values[:, [pj.alphas.index(target.alphas[i]) for i in keep], :])
    return seminorm_from_jets(diff, l)


def _budget_sweep(h, L: SampledRegion, l: int, basis: str, budgets, target):
    """Yield (budget, best fit of degree <= budget, its C^l error, basis used).

    A fit of lower degree is also admissible under a larger budget, so the error
    reported for a budget is the best over all degrees tried so far.
    """
    lo, hi = _fit_box(L)
    n = L.dim
    rows = len(L.points) * len(multi_indices(n, l))
    mids = _cell_centers(L) if callable(h) else np.zeros((0, n))
    hm = np.asarray(h(mids), dtype=float).reshape(len(mids), -1) if len(mids) else None
    best = None
    for i, deg in enumerate(budgets):
        cols = (deg + 1) ** n
        if i and (cols > min(MAX_UNKNOWNS, rows) or 2 * cols * cols > MAX_DESIGN_ENTRIES):
            break
        if basis == "bernstein" and deg <= BERNSTEIN_MAX_DEGREE:
            p, used = bernstein_fit(h, lo, hi, deg), "bernstein"
        else:
            p, used = lsq_jet_fit(target, lo, hi, deg, l), "chebyshev-lsq"
        err = fit_error(target, p, l)
        if hm is not None:
            err = max(err, float(np.max(np.abs(p(mids) - hm))))
        if best is None or err < best[1]:
            best = (p, err, used)
        yield deg, best[0], best[1], best[2]


def weierstrass_fit(h, L: SampledRegion, l: int, eps: float, basis: str = "chebyshev",
                    budgets=BUDGETS, jets=None, step: float = 1e-4) -> tuple[PolyMap, FitReport]:
    """Polynomial map p with measured C^l error on the samples of L below ``eps``.

    ``jets`` may supply exact target jets (a JetTable or a callable on points);
    otherwise they are taken by finite differences of ``h``. The report's degree
    is the budget at which the target was met.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = _as_jets(h, L, l, jets, step)
    history = []
    for deg, p, err, used in _budget_sweep(h, L, l, basis, budgets, target):
        history.append((deg, err))
        if err < eps:
            return p, FitReport(deg, used, err, L.h, history)
    raise DegreeCapExceeded(f"C^{l} error {eps} not reached; history {history}")


def budget_errors(h, L: SampledRegion, l: int, basis: str = "chebyshev", budgets=BUDGETS, jets=None,
                  step: float = 1e-4) -> list[tuple[int, float]]:
    """(budget, achieved C^l error) for every budget that fits the sample count."""
    target = _as_jets(h, L, l, jets, step)
    return [(deg, err) for deg, _, err, _ in _budget_sweep(h, L, l, basis, budgets, target)]


def nonneg_poly_approx(j, U: SampledRegion, eps: float, budgets=BUDGETS) -> tuple[SquaredPoly, FitReport]:
    """Nonnegative polynomial W**2 with sup |W**2 - j| < eps on the samples of U."""
    X = U.points
    jv = np.asarray(j(X), dtype=float)
    root = np.sqrt(np.clip(jv, 0.0, None))
    lo, hi = _fit_box(U)
    n = U.dim
    mids = _cell_centers(U)
    jm = np.asarray(j(mids), dtype=float) if len(mids) else None
    history = []
    for deg in budgets:
        cols = (deg + 1) ** n
        if history and (cols > min(MAX_UNKNOWNS, len(X)) or 2 * cols * cols > MAX_DESIGN_ENTRIES):
            break
        rows = _row_subsample(len(X), 1, cols)
        V = _design(X[rows], lo, hi, deg, [(0,) * n])
        jr = jv[rows]
        c0 = _solve_ridge(V, root[rows, None])[:, 0]

        def sup_err(c):
            W = ChebPoly(c.reshape((deg + 1,) * n), lo, hi)
            e = float(np.max(np.abs(W(X) ** 2 - jv)))
            if len(mids):
                e = max(e, float(np.max(np.abs(W(mids) ** 2 - jm))))
            return W, e

        W, err = sup_err(c0)
        if err >= eps and np.any(c0):
            res = least_squares(lambda c: (V @ c) ** 2 - jr, c0,
                                jac=lambda c: 2.0 * (V @ c)[:, None] * V, max_nfev=40, method="trf")
            W1, err1 = sup_err(res.x)
            if err1 < err:
                W, err = W1, err1
        history.append((deg, err))
        if err < eps:
            return SquaredPoly(W), FitReport(deg, "chebyshev-square", err, U.h, history)
    raise DegreeCapExceeded(f"nonnegative approximation within {eps} not reached; history {history}")


def dist_poly(K: SampledRegion, U: SampledRegion, eps: float) -> tuple[SquaredPoly, FitReport]:
    """Nonnegative polynomial approximating dist(., K) on the samples of U."""
    return nonneg_poly_approx(K.dist, U, eps)
