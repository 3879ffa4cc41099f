"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every pipeline is run through a cached runner so later criteria (certificates,
determinism) reuse the same outputs. Run with ``pytest -s tests/test_acceptance.py``
to see the lines inline; they are also repeated in the terminal summary.
"""
from __future__ import annotations

import time
from functools import lru_cache

import numpy as np
import pytest

from regulus.bump import boundary_derivatives, make_bump
from regulus.bundles import (algebraize_bundle, moebius_field, projection_residuals, tangent_s2_field,
                             trivial_field, w1_holonomy)
from regulus.catalog import box_pair, circle_map, sphere_patch_map
from regulus.certify import certificate_equivalence, check_containment, check_smoothness, winding_number
from regulus.cli import dumps
from regulus.gluing import approximate, measured_error
from regulus.poly import MultiPoly
from regulus.sampling import make_region
from regulus.varieties import grassmann_atlas
from regulus.weierstrass import budget_errors

SEED = 0
RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS[n] = line
    print(line)


def gap(g, L, pieces=None) -> float:
    return float(certificate_equivalence(g, L, pieces)["max_gap"])


# runners: each returns (json-able artifact, live objects)


def run_bump(n: int, k: int):
    job = box_pair(n)
    K, U = make_region(job["K"]), make_region(job["U"])
    t0 = time.perf_counter()
    beta, cert, pair = make_bump(K, U, k, seed=SEED)
    rng = np.random.default_rng(SEED)
    b = beta(rng.uniform(U.lo, U.hi, size=(100_000, n)))
    bu = beta(U.points)
    bnd = np.concatenate([pair.boundary1, pair.boundary2])
    flat = float(np.max(boundary_derivatives(beta, bnd, k), initial=0.0))
    seconds = time.perf_counter() - t0
    art = {"n": n, "k": k, "min": float(b.min()), "max": float(b.max()),
           "ones": bool(np.all(bu[pair.n1_mask] == 1.0)), "zeros": bool(np.all(bu[~pair.n2_mask] == 0.0)),
           "boundary_samples": len(bnd), "flat": flat, "certificate": cert.to_json()}
    return art, (beta, cert, U, seconds)


def run_circle(d: int):
    f, atlas = circle_map(d)
    g, rep = approximate(f, atlas, 2, 0.1, seed=SEED)
    L2000 = make_region({"kind": "box", "lo": [0.0], "hi": [2 * np.pi], "h": 2 * np.pi / 2000})
    art = {"d": d, "error": measured_error(f, g, L2000, 1),
           "residual": check_containment(g, L2000, atlas)["max_residual"],
           "winding": winding_number(g), "smoothness": check_smoothness(g, 2, 1e-3), "map": g.to_json()}
    return art, (g, f.L)


def run_patch():
    f, atlas = sphere_patch_map()
    g, rep = approximate(f, atlas, 1, 0.05, seed=SEED)
    art = {"error": measured_error(f, g, f.L, 1), "residual": check_containment(g, f.L, atlas)["max_residual"],
           "cover": rep["cover"], "map": g.to_json()}
    return art, (g, f.L)


def run_bundle(name: str):
    if name == "moebius":
        xi, k, eps = moebius_field(), 1, 0.05
    elif name == "trivial":
        xi, k, eps = trivial_field(moebius_field().L), 1, 0.05
    else:
        xi, k, eps = tangent_s2_field(), 1, 0.1
    g, pull, rep = algebraize_bundle(xi, 0, k, eps, seed=SEED)
    res = projection_residuals(pull(xi.L.points), xi.rank)
    art = {"name": name, "eps": eps, "sup_error": rep["sup_error"], "residuals": res,
           "w1_source": w1_holonomy(xi) if xi.L.dim == 1 else None,
           "w1_pullback": rep.get("w1_pullback"), "map": g.to_json()}
    return art, (g, xi.L)


def run_grassmann(n: int, k: int):
    A = grassmann_atlas(n, k)
    rng = np.random.default_rng(SEED + 10 * n + k)
    worst = {"idempotent": 0.0, "symmetric": 0.0, "trace": 0.0, "roundtrip": 0.0}
    for c in A.charts:
        M = rng.normal(size=(1000, c.param_dim))
        P = c.phi(M).reshape(-1, n, n)
        worst["idempotent"] = max(worst["idempotent"], float(np.max(np.abs(P @ P - P))))
        worst["symmetric"] = max(worst["symmetric"], float(np.max(np.abs(P - P.transpose(0, 2, 1)))))
        worst["trace"] = max(worst["trace"], float(np.max(np.abs(np.trace(P, axis1=1, axis2=2) - k))))
        worst["roundtrip"] = max(worst["roundtrip"], float(np.max(np.abs(c.phi_inv(P.reshape(len(M), -1)) - M))))
    return {"n": n, "k": k, "charts": len(A.charts), **worst}, None


def run_engine():
    L = make_region({"kind": "box", "lo": [0.0], "hi": [1.0], "h": 1 / 32})
    errs = budget_errors(lambda X: np.exp(X), L, 1)
    x = MultiPoly.variable(1, 0)
    q = 3 * x ** 5 - 2 * x ** 2 + x - 0.5
    poly_errs = budget_errors(lambda X: q(X)[:, None], L, 1)
    return {"exp": errs, "poly": poly_errs}, None


BUMPS = [(n, k) for n in (1, 2) for k in (1, 2)]
RUNNERS = {("bump", n, k): (lambda n=n, k=k: run_bump(n, k)) for n, k in BUMPS}
RUNNERS.update({("circle", d): (lambda d=d: run_circle(d)) for d in (1, 2, 3)})
RUNNERS[("patch",)] = run_patch
RUNNERS.update({("grassmann", n, k): (lambda n=n, k=k: run_grassmann(n, k)) for n, k in [(2, 1), (3, 1), (4, 2)]})
RUNNERS.update({("bundle", b): (lambda b=b: run_bundle(b)) for b in ("moebius", "trivial", "tangent")})
RUNNERS[("engine",)] = run_engine


@lru_cache(maxsize=None)
def first_run(key):
    return RUNNERS[key]()


def test_criterion_1_bumps():
    fails, worst_t, worst_gap, worst_flat = [], 0.0, 0.0, 0.0
    for n, k in BUMPS:
        art, (beta, cert, U, seconds) = first_run(("bump", n, k))
        g = gap(beta, U, cert.pieces)
        ok = (art["min"] >= 0.0 and art["max"] <= 1.0 and art["ones"] and art["zeros"]
              and art["flat"] < 1e-3 and g < 1e-9 and seconds < 120.0)
        if not ok:
            fails.append(f"n={n},k={k}")
        worst_t, worst_gap, worst_flat = max(worst_t, seconds), max(worst_gap, g), max(worst_flat, art["flat"])
    report(1, not fails, f"max boundary FD {worst_flat:.2e}, max gap {worst_gap:.1e}, slowest {worst_t:.1f}s"
           + (f", failing {fails}" if fails else ""))
    assert not fails


def test_criterion_2_circles():
    fails, parts = [], []
    for d in (1, 2, 3):
        art, _ = first_run(("circle", d))
        sm = art["smoothness"]
        ok = (art["error"] < 0.1 and art["residual"] < 1e-9 and art["winding"] == d
              and sm["pass"] and sm["max_discrepancy"] < 1e-3)
        if not ok:
            fails.append(d)
        parts.append(f"d={d}: err {art['error']:.1e} wind {art['winding']} seam {sm['max_discrepancy']:.1e}")
    report(2, not fails, "; ".join(parts))
    assert not fails


def test_criterion_3_sphere_patch():
    art, (g, L) = first_run(("patch",))
    c = gap(g, L)
    ok = art["error"] < 0.05 and art["residual"] < 1e-9 and c < 1e-9 and sorted(art["cover"]) == [0, 1]
    report(3, ok, f"err {art['error']:.1e}, residual {art['residual']:.1e}, gap {c:.1e}, charts {art['cover']}")
    assert ok


def test_criterion_4_grassmann():
    arts = [first_run(("grassmann", n, k))[0] for n, k in [(2, 1), (3, 1), (4, 2)]]
    proj = max(max(a["idempotent"], a["symmetric"], a["trace"]) for a in arts)
    rt = max(a["roundtrip"] for a in arts)
    ok = proj < 1e-10 and rt < 1e-9
    report(4, ok, f"max projection residual {proj:.1e}, max roundtrip {rt:.1e}")
    assert ok


def test_criterion_5_bundles():
    mo, _ = first_run(("bundle", "moebius"))
    tr, _ = first_run(("bundle", "trivial"))
    ts, _ = first_run(("bundle", "tangent"))
    rmo, rts = max(mo["residuals"].values()), max(ts["residuals"].values())
    ok = (mo["sup_error"] < 0.05 and rmo < 1e-8 and mo["w1_source"] == -1 and mo["w1_pullback"] == -1
          and tr["w1_pullback"] == 1 and rts < 1e-8)
    report(5, ok, f"moebius sup {mo['sup_error']:.4f} res {rmo:.1e} w1 {mo['w1_pullback']}; "
                  f"trivial w1 {tr['w1_pullback']}; TS2 res {rts:.1e}")
    assert ok


def test_criterion_6_engine():
    art, _ = first_run(("engine",))
    errs = [e for _, e in art["exp"]]
    mono = all(b <= 1.1 * a for a, b in zip(errs, errs[1:]))
    reach = min(errs) < 1e-2
    poly = min(e for _, e in art["poly"])
    ok = mono and reach and poly < 1e-9
    report(6, ok, "exp C1 errors " + ", ".join(f"{d}:{e:.1e}" for d, e in art["exp"]) + f"; polynomial {poly:.1e}")
    assert ok


def test_criterion_7_certificates():
    gaps = {}
    for n, k in BUMPS:
        _, (beta, cert, U, _) = first_run(("bump", n, k))
        gaps[f"bump{n}{k}"] = gap(beta, U, cert.pieces)
    for key in [("circle", 1), ("circle", 2), ("circle", 3), ("patch",),
                ("bundle", "moebius"), ("bundle", "trivial"), ("bundle", "tangent")]:
        _, (g, L) = first_run(key)
        gaps["".join(map(str, key))] = gap(g, L)
    worst = max(gaps, key=gaps.get)
    ok = gaps[worst] < 1e-9
    report(7, ok, f"{len(gaps)} outputs, max gap {gaps[worst]:.1e} ({worst})")
    assert ok


def test_criterion_8_determinism():
    diff = [key for key in RUNNERS if dumps(first_run(key)[0]) != dumps(RUNNERS[key]()[0])]
    ok = not diff
    report(8, ok, f"{len(RUNNERS)} result files rebuilt" + (f", differing {diff}" if diff else ", byte-identical"))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
