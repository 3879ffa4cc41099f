"""Checks that make "C^k piecewise-regular" machine-checkable on samples.

* ``check_smoothness``: at points where the active piece changes, the one-sided
  jets of the two adjacent piece expressions must agree up to order k.
* ``check_containment``: outputs satisfy the defining equations of the variety.
* ``certificate_equivalence``: the piece list reproduces the evaluator.
* ``arc_probe``: along an arc inside one piece the map is fitted by a rational
  function of low degree (a spot check, not a proof).
* ``winding_number``: degree of a circle map.
"""
from __future__ import annotations

import numpy as np

from .errors import NoInteriorWindow, SamplingTooCoarse
from .pieces import PieceList
from .sampling import SampledRegion, fd_jets, seminorm_from_jets

BISECT_STEPS = 40
EQUIV_TOL = 1e-9
ARC_TOL = 1e-6
ARC_SAMPLES = 801
ARC_SHRINK = 0.25
ARC_MIN_SAMPLES = 40
RATIONAL_SWEEPS = 4


def _pieces_of(g, pieces=None) -> PieceList:
    return pieces if pieces is not None else g.pieces()


def _values(expr, X) -> np.ndarray:
    v = np.asarray(expr(X), dtype=float)
    return v[:, None] if v.ndim == 1 else v


# ---------------------------------------------------------------------------
# seams


def seam_points(pieces: PieceList, L: SampledRegion):
    """Points where the active piece changes, found by bisection along grid edges of L.

    Returns (points, piece_below, piece_above, axis): piece_below is active on the
    side of smaller coordinate ``axis``.
    """
    if not L.has_grid or len(L.points) < 2:
        return np.zeros((0, L.dim)), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int)
    which = pieces.locate(L.points)
    pairs = L.neighbor_pairs()
    diff = which[pairs[:, 0]] != which[pairs[:, 1]]
    pairs = pairs[diff]
    if not len(pairs):
        return np.zeros((0, L.dim)), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int)
    a = L.points[pairs[:, 0]].copy()
    b = L.points[pairs[:, 1]].copy()
    axis = np.argmax(np.abs(b - a), axis=1)
    pa = which[pairs[:, 0]]
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (a + b)
        same = pieces.locate(mid) == pa
        a[same] = mid[same]
        b[~same] = mid[~same]
    pb = pieces.locate(b)
    x = 0.5 * (a + b)
    return x, pa, pb, axis


def _one_sided(expr, X, axis, side, k) -> np.ndarray:
    sides = np.zeros(X.shape, dtype=int)
    sides[np.arange(len(X)), axis] = side
    return fd_jets(lambda Z: _values(expr, Z), X, k, sides=sides).values


def check_smoothness(g, k: int, tol: float = 1e-3, L: SampledRegion | None = None, pieces=None) -> dict:
    """Largest disagreement of one-sided k-jets of adjacent pieces at their common boundary.

    The discrepancy is scaled by max(1, C^k seminorm of g on L). Never raises.
    """
    L = L if L is not None else g.domain_region()
    report = {"k": k, "tol": tol, "seams": 0, "max_discrepancy": 0.0, "scaled": 0.0,
              "seminorm": None, "pass": True}
    try:
        pl = _pieces_of(g, pieces)
        X, pa, pb, axis = seam_points(pl, L)
        report["seams"] = int(len(X))
        report["pieces"] = len(pl.pieces)
        if not len(X):
            return report
        worst = 0.0
        worst_at = None
        for i in np.unique(pa):
            for j in np.unique(pb[pa == i]):
                sel = (pa == i) & (pb == j)
                Xs = X[sel]
                # piece i is active before the seam (moving up along axis), so its stencil looks back
                lo = _one_sided(pl.pieces[i].expr, Xs, axis[sel], -1, k)
                hi = _one_sided(pl.pieces[j].expr, Xs, axis[sel], 1, k)
                d = np.max(np.abs(lo - hi), axis=(1, 2))
                if d.max() > worst:
                    worst = float(d.max())
                    worst_at = {"point": Xs[int(np.argmax(d))].tolist(),
                                "pieces": [pl.pieces[i].name, pl.pieces[j].name]}
        norm = seminorm_from_jets(fd_jets(lambda Z: _values(g, Z), L.points, k), k)
        report.update({"max_discrepancy": worst, "seminorm": norm, "scaled": worst / max(1.0, norm),
                       "worst": worst_at})
        report["pass"] = bool(report["scaled"] < tol)
    except Exception as exc:  # reports, never throws
        report.update({"pass": False, "error": f"{type(exc).__name__}: {exc}"})
    return report


# ---------------------------------------------------------------------------
# containment and certificate


def check_containment(g, L: SampledRegion, atlas, tol: float = 1e-9) -> dict:
    try:
        r = atlas.residual_norm(np.atleast_2d(g(L.points)))
        worst = float(np.max(r))
        return {"max_residual": worst, "tol": tol, "pass": bool(worst < tol)}
    except Exception as exc:
        return {"max_residual": None, "tol": tol, "pass": False, "error": f"{type(exc).__name__}: {exc}"}


def certificate_equivalence(g, L: SampledRegion, pieces=None, tol: float = EQUIV_TOL) -> dict:
    """Max gap between the piece list and the evaluator on the samples of L.

    Raises UnmatchedSample when a sample lies in no piece (or in several).
    """
    pl = _pieces_of(g, pieces)
    X = L.points
    which = pl.locate(X)
    cert = _values(pl, X)
    direct = _values(g, X)
    gap = np.max(np.abs(cert - direct), axis=1)
    counts = np.bincount(which, minlength=len(pl.pieces))
    return {"max_gap": float(gap.max()), "tol": tol, "pass": bool(gap.max() < tol), "samples": int(len(X)),
            "pieces": len(pl.pieces), "pieces_hit": int(np.count_nonzero(counts))}


# ---------------------------------------------------------------------------
# arcs


def line_arc(p0, p1):
    """t -> p0 + t (p1 - p0), t in [0, 1]."""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    return lambda t: p0[None] + np.asarray(t, dtype=float)[:, None] * (p1 - p0)[None]


def circle_arc(center, radius, plane=(0, 1)):
    """t -> center + radius (cos 2 pi t, sin 2 pi t) in the coordinate plane ``plane``."""
    center = np.asarray(center, dtype=float)

    def c(t):
        t = np.asarray(t, dtype=float)
        X = np.tile(center, (len(t), 1))
        X[:, plane[0]] += radius * np.cos(2 * np.pi * t)
        X[:, plane[1]] += radius * np.sin(2 * np.pi * t)
        return X
    return c


def rational_fit(t, Y, num_deg: int = 8, den_deg: int = 8):
    """Least-squares rational fit p/q (Chebyshev bases, q normalised) of each column of Y.

    Linearised fit p - y q = 0 refined by reweighting with the previous denominator.
    Returns the max absolute residual and the fitted values.
    """
    t = np.asarray(t, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(len(t), -1)
    s = (2 * t - (t[0] + t[-1])) / (t[-1] - t[0])
    Vp = np.polynomial.chebyshev.chebvander(s, num_deg)
    Vq = np.polynomial.chebyshev.chebvander(s, den_deg)[:, 1:]
    fitted = np.zeros_like(Y)
    for j in range(Y.shape[1]):
        y = Y[:, j]
        scale = max(1.0, float(np.max(np.abs(y))))
        w = np.ones_like(y)
        best = None
        for _ in range(RATIONAL_SWEEPS):
            A = np.hstack([Vp, -(y / scale)[:, None] * Vq]) / w[:, None]
            coef, *_ = np.linalg.lstsq(A, (y / scale) / w, rcond=None)
            q = 1.0 + Vq @ coef[num_deg + 1:]
            if np.any(np.abs(q) < 1e-12):
                break
            vals = scale * (Vp @ coef[:num_deg + 1]) / q
            res = float(np.max(np.abs(vals - y)))
            if best is None or res < best[0]:
                best = (res, vals)
            w = np.abs(q)
        if best is None:
            best = (np.inf, np.full_like(y, np.nan))
        fitted[:, j] = best[1]
    return float(np.max(np.abs(fitted - Y))), fitted


def arc_probe(g, arc, window=(0.0, 1.0), pieces=None, tol: float = ARC_TOL, samples: int = ARC_SAMPLES,
              num_deg: int = 8, den_deg: int = 8) -> dict:
    """Fit g o arc by a rational function on the longest stretch of the window inside one piece.

    With ``pieces=None`` and no ``pieces`` method on g, the whole window is one stretch.
    """
    t = np.linspace(window[0], window[1], samples)
    X = arc(t)
    pl = pieces if pieces is not None else (g.pieces() if hasattr(g, "pieces") else None)
    if pl is not None:
        which = pl.locate(X)
        change = np.nonzero(np.diff(which))[0]
        starts = np.concatenate([[0], change + 1])
        ends = np.concatenate([change + 1, [len(t)]])
        best = int(np.argmax(ends - starts))
        i0, i1 = int(starts[best]), int(ends[best])
        piece = pl.pieces[int(which[i0])].name
    else:
        i0, i1, piece = 0, len(t), None
    # stay clear of the stratum boundary on both ends
    cut = int(np.ceil(ARC_SHRINK * (i1 - i0))) if (i0 > 0 or i1 < len(t)) else 0
    lo = i0 + (cut if i0 > 0 else 0)
    hi = i1 - (cut if i1 < len(t) else 0)
    if hi - lo < ARC_MIN_SAMPLES:
        raise NoInteriorWindow(f"longest single-piece stretch has {hi - lo} samples")
    tw = np.linspace(t[lo], t[hi - 1], samples)
    Y = np.asarray(g(arc(tw)), dtype=float)
    res, _ = rational_fit(tw, Y, num_deg, den_deg)
    return {"window": [float(tw[0]), float(tw[-1])], "piece": piece, "residual": res, "tol": tol,
            "pass": bool(res < tol), "degrees": [num_deg, den_deg]}


# ---------------------------------------------------------------------------
# degree of circle maps


def winding_number(g, nsamples: int = 4000, period: float = 2 * np.pi) -> int:
    """Degree of a map from the circle (parameter in [0, period]) to the plane minus the origin."""
    th = np.linspace(0.0, period, nsamples + 1)[:, None]
    Y = np.atleast_2d(np.asarray(g(th), dtype=float))
    ang = np.arctan2(Y[:, 1], Y[:, 0])
    d = np.diff(ang)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    if np.any(np.abs(d) > np.pi / 2):
        raise SamplingTooCoarse("consecutive image points are more than a quarter turn apart")
    return int(np.rint(d.sum() / (2 * np.pi)))
