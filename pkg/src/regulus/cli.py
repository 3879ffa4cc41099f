"""Command line: ``regulus {bump,approximate,bundle,verify,report}``.

Jobs are JSON files; results are JSON files that embed the job, the seed, the
tool version and every tolerance used. Exit codes: 0 when all checks pass,
2 when a check fails, 1 on errors (bad job, unreadable file, failed run).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .bump import Bump, make_bump
from .bundles import algebraize_bundle, field_from_json
from .catalog import map_from_spec
from .certify import certificate_equivalence, check_containment, check_smoothness, winding_number
from .errors import BadSpec, RegulusError
from .gluing import PiecewiseRegularMap, approximate, measured_error
from .sampling import make_region

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
RANGE_SAMPLES = 10_000
SMOOTH_TOL = 1e-3
CONTAIN_TOL = 1e-9
EQUIV_TOL = 1e-9
PROJ_TOL = 1e-8
FLAT_TOL = 1e-4
SEAM_TOL = 1e-2


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed separators, numpy values converted."""
    return json.dumps(obj, sort_keys=True, indent=1, default=_plain) + "\n"


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _load(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadSpec(f"{path}: {exc}") from exc


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _envelope(command: str, spec: dict, seed: int, tolerances: dict, result: dict, checks: dict) -> dict:
    return {"tool": "regulus", "version": __version__, "command": command, "spec": spec, "seed": seed,
            "tolerances": tolerances, "result": result, "checks": checks,
            "pass": all(bool(c.get("pass")) for c in checks.values())}


def _with_overrides(spec: dict, args, keys=("eps", "l", "k")) -> dict:
    spec = dict(spec)
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            spec[key] = v
    return spec


def _grid(desc: dict, h) -> dict:
    return {**desc, "h": h} if h else dict(desc)


# ---------------------------------------------------------------------------
# bump


def bump_checks(beta: Bump, cert, pair, K, U, k: int, tol_flat: float, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    X = rng.uniform(U.lo, U.hi, size=(RANGE_SAMPLES, U.dim))
    b = beta(X)
    bu = beta(U.points)
    p = beta.P(U.points)
    n1 = p <= beta.eps1
    off = p >= beta.eps2
    return {
        "range": {"min": float(b.min()), "max": float(b.max()), "samples": RANGE_SAMPLES,
                  "pass": bool(b.min() >= 0.0 and b.max() <= 1.0)},
        "plateau": {"ones_on_N1": bool(np.all(bu[n1] == 1.0)), "zeros_off_N2": bool(np.all(bu[off] == 0.0)),
                    "contains_K": bool(np.all(beta.P(K.points) < beta.eps1)),
                    "pass": bool(np.all(bu[n1] == 1.0) and np.all(bu[off] == 0.0))},
        "flatness": {"boundary_derivative": cert.flatness["boundary_derivative"], "tol": tol_flat,
                     "pass": bool(cert.flatness["boundary_derivative"] < tol_flat)},
        "smoothness": check_smoothness(beta, k, SMOOTH_TOL, U),
        "certificate": certificate_equivalence(beta, U, cert.pieces, EQUIV_TOL),
    }


def run_bump(spec: dict, seed: int, args) -> dict:
    try:
        K = make_region(_grid(spec["K"], args.grid_h))
        U = make_region(_grid(spec["U"], args.grid_h))
        k = int(spec.get("k", 1) if args.k is None else args.k)
    except KeyError as exc:
        raise BadSpec(f"bump job needs {exc}") from exc
    tol_flat = args.tol_flat if args.tol_flat is not None else float(spec.get("tol_flat", FLAT_TOL))
    tol_seam = args.tol_seam if args.tol_seam is not None else float(spec.get("tol_seam", SEAM_TOL))
    beta, cert, pair = make_bump(K, U, k, seed=seed, tol_flat=tol_flat, tol_seam=tol_seam)
    checks = bump_checks(beta, cert, pair, K, U, k, tol_flat, seed)
    spec = {**spec, "k": k}
    tolerances = {"tol_flat": tol_flat, "tol_seam": tol_seam, "smoothness": SMOOTH_TOL, "certificate": EQUIV_TOL}
    return _envelope("bump", spec, seed, tolerances, {"bump": beta.to_json(), "certificate": cert.to_json()},
                     checks)


# ---------------------------------------------------------------------------
# maps


def map_checks(f, g: PiecewiseRegularMap, atlas, k: int, eps: float, spec: dict) -> dict:
    L = f.L
    err = measured_error(f, g, L, f.l)
    checks = {
        "error": {"measured": err, "eps": eps, "l": f.l, "samples": len(L.points), "pass": bool(err < eps)},
        "containment": check_containment(g, L, atlas, CONTAIN_TOL),
        "certificate": certificate_equivalence(g, L, tol=EQUIV_TOL),
        "smoothness": check_smoothness(g, k, SMOOTH_TOL, L),
    }
    if spec.get("map", {}).get("kind") == "circle":
        d = int(spec["map"]["d"])
        w = winding_number(g)
        checks["winding"] = {"winding": w, "expected": d, "pass": w == d}
    return checks


def run_approximate(spec: dict, seed: int, args) -> dict:
    spec = _with_overrides(spec, args)
    try:
        l, k, eps = int(spec.get("l", 1)), int(spec.get("k", 2)), float(spec["eps"])
        f, atlas = map_from_spec(spec["map"], l, args.grid_h)
    except KeyError as exc:
        raise BadSpec(f"approximate job needs {exc}") from exc
    g, rep = approximate(f, atlas, k, eps, seed)
    checks = map_checks(f, g, atlas, k, eps, spec)
    tolerances = {"eps": eps, "containment": CONTAIN_TOL, "certificate": EQUIV_TOL, "smoothness": SMOOTH_TOL}
    return _envelope("approximate", spec, seed, tolerances, {"map": g.to_json(), "report": rep}, checks)


def run_bundle(spec: dict, seed: int, args) -> dict:
    spec = _with_overrides(spec, args)
    try:
        l, k, eps = int(spec.get("l", 0)), int(spec.get("k", 1)), float(spec["eps"])
        xi = field_from_json(spec["field"])
    except KeyError as exc:
        raise BadSpec(f"bundle job needs {exc}") from exc
    if args.grid_h and "domain" in spec["field"]:
        xi = field_from_json(spec["field"], make_region(_grid(spec["field"]["domain"], args.grid_h)))
    g, pull, rep = algebraize_bundle(xi, l, k, eps, seed)
    L = xi.L
    res = rep["residuals"]
    checks = {
        "sup_error": {"measured": rep["sup_error"], "eps": eps, "pass": bool(rep["sup_error"] < eps)},
        "projection": {**res, "tol": PROJ_TOL, "pass": bool(max(res.values()) < PROJ_TOL)},
        "certificate": certificate_equivalence(g, L, tol=EQUIV_TOL),
    }
    if "w1_source" in rep:
        checks["w1"] = {"source": rep["w1_source"], "pullback": rep["w1_pullback"],
                        "pass": rep["w1_source"] == rep["w1_pullback"]}
    tolerances = {"eps": eps, "projection": PROJ_TOL, "certificate": EQUIV_TOL}
    result = {"map": g.to_json(), "report": {k2: v for k2, v in rep.items() if k2 != "approximation"},
              "approximation": rep["approximation"]}
    return _envelope("bundle", spec, seed, tolerances, result, checks)


# ---------------------------------------------------------------------------
# verify and report


def _rebuild(res: dict):
    """Objects needed to re-check a stored result: (kind, evaluator, domain, extra)."""
    cmd = res.get("command")
    spec = res.get("spec", {})
    if cmd == "bump":
        beta = Bump.from_json(res["result"]["bump"])
        return cmd, beta, beta.U_region, {"k": int(spec.get("k", 1))}
    if cmd in ("approximate", "bundle"):
        g = PiecewiseRegularMap.from_json(res["result"]["map"])
        return cmd, g, g.domain_region(), {"k": int(spec.get("k", 1))}
    raise BadSpec(f"unknown result command {cmd!r}")


def verify_result(res: dict) -> tuple[dict, list]:
    """Re-run the checks on a stored result; returns (report, per-sample CSV rows)."""
    cmd, g, L, extra = _rebuild(res)
    spec = res.get("spec", {})
    checks = {"certificate": certificate_equivalence(g, L, tol=EQUIV_TOL),
              "smoothness": check_smoothness(g, extra["k"], SMOOTH_TOL, L)}
    rows = []
    if cmd == "bump":
        b = g(L.points)
        checks["range"] = {"min": float(b.min()), "max": float(b.max()),
                           "pass": bool(b.min() >= 0.0 and b.max() <= 1.0)}
        rows = [[*map(float, x), float(v)] for x, v in zip(L.points, b)]
        header = [f"x{i + 1}" for i in range(L.dim)] + ["beta"]
    else:
        Y = np.atleast_2d(g(L.points))
        r = g.atlas.residual_norm(Y)
        checks["containment"] = {"max_residual": float(r.max()), "tol": CONTAIN_TOL,
                                 "pass": bool(r.max() < CONTAIN_TOL)}
        err = _pointwise_error(cmd, spec, g, L)
        rows = [[*map(float, x), e, float(v)] for x, e, v in zip(L.points, err, r)]
        header = [f"x{i + 1}" for i in range(L.dim)] + ["error", "residual"]
        if cmd == "approximate" and spec.get("map", {}).get("kind") == "circle":
            w = winding_number(g)
            checks["winding"] = {"winding": w, "expected": int(spec["map"]["d"]), "pass": w == int(spec["map"]["d"])}
    report = {"tool": "regulus", "version": __version__, "command": "verify", "verified": cmd,
              "seed": res.get("seed"), "checks": checks,
              "pass": all(bool(c.get("pass")) for c in checks.values())}
    return report, [header] + rows


def _pointwise_error(cmd, spec, g, L) -> list:
    """|g - f| per sample (max over components), f rebuilt from the stored job."""
    try:
        if cmd == "approximate":
            f, _ = map_from_spec(spec["map"], int(spec.get("l", 1)))
            target = f(L.points)
        else:
            xi = field_from_json(spec["field"])
            target = xi(L.points).reshape(len(L.points), -1)
    except (RegulusError, KeyError):
        return [float("nan")] * len(L.points)
    return [float(v) for v in np.max(np.abs(np.atleast_2d(g(L.points)) - target), axis=1)]


def _csv_text(rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regulus", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"regulus {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("bump", "approximate", "bundle"):
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True, help="job specification (JSON)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eps", type=float)
        p.add_argument("--l", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--out", help="result file (default: standard output)")
        p.add_argument("--tol-flat", type=float, dest="tol_flat")
        p.add_argument("--tol-seam", type=float, dest="tol_seam")
        p.add_argument("--grid-h", type=float, dest="grid_h")
    v = sub.add_parser("verify")
    v.add_argument("--result", required=True)
    v.add_argument("--out", help="report file (default: standard output)")
    v.add_argument("--csv", help="per-sample residuals")
    r = sub.add_parser("report")
    r.add_argument("--result", required=True)
    r.add_argument("--out", help="CSV plot data (default: standard output)")
    return ap


RUNNERS = {"bump": run_bump, "approximate": run_approximate, "bundle": run_bundle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in RUNNERS:
            res = RUNNERS[args.command](_load(args.spec), args.seed, args)
            _write(args.out, dumps(res))
            return EXIT_PASS if res["pass"] else EXIT_FAIL
        res = _load(args.result)
        report, rows = verify_result(res)
        if args.command == "verify":
            _write(args.out, dumps(report))
            if args.csv:
                _write(args.csv, _csv_text(rows))
            return EXIT_PASS if report["pass"] else EXIT_FAIL
        _write(args.out, _csv_text(rows))
        return EXIT_PASS
    except (RegulusError, OSError, ValueError) as exc:
        print(f"regulus: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
