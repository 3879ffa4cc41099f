"""Bump functions for K = [-a, a]^n inside U = (-1, 1)^n across n, k and seeds."""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from regulus.bump import boundary_derivatives, make_bump
from regulus.catalog import box_pair
from regulus.certify import certificate_equivalence
from regulus.sampling import make_region


@dataclass
class Config:
    dims: list = field(default_factory=lambda: [1, 2])
    orders: list = field(default_factory=lambda: [1, 2])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    k_half: float = 0.2
    range_samples: int = 100_000
    out: str = "bump_study.json"


def one(n: int, k: int, seed: int, cfg: Config) -> dict:
    job = box_pair(n, cfg.k_half)
    K, U = make_region(job["K"]), make_region(job["U"])
    t0 = time.perf_counter()
    beta, cert, pair = make_bump(K, U, k, seed=seed)
    seconds = time.perf_counter() - t0
    b = beta(np.random.default_rng(seed).uniform(U.lo, U.hi, size=(cfg.range_samples, n)))
    bnd = np.concatenate([pair.boundary1, pair.boundary2])
    return {"n": n, "k": k, "seed": seed, "seconds": seconds, "m": cert.m, "l": cert.l, "r": cert.r,
            "eps1": cert.eps1, "eps2": cert.eps2, "range": [float(b.min()), float(b.max())],
            "boundary_fd": float(np.max(boundary_derivatives(beta, bnd, k), initial=0.0)),
            "gap": certificate_equivalence(beta, U, cert.pieces)["max_gap"]}


def main(cfg: Config) -> list:
    rows = [one(n, k, s, cfg) for n in cfg.dims for k in cfg.orders for s in cfg.seeds]
    for r in rows:
        print(f"n={r['n']} k={r['k']} seed={r['seed']}: (m,l,r)=({r['m']},{r['l']},{r['r']}) "
              f"boundary FD {r['boundary_fd']:.1e} gap {r['gap']:.1e} {r['seconds']:.2f}s")
    with open(cfg.out, "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(cfg), "rows": rows}, fh, indent=1, sort_keys=True)
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=Config().seeds)
    ap.add_argument("--k-half", type=float, default=Config.k_half)
    ap.add_argument("--out", default=Config.out)
    a = ap.parse_args()
    main(Config(seeds=a.seeds, k_half=a.k_half, out=a.out))
