"""Approximate circle maps of several degrees and record error, winding and seam checks."""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field

from regulus.catalog import circle_map
from regulus.certify import certificate_equivalence, check_containment, check_smoothness, winding_number
from regulus.gluing import approximate, measured_error


@dataclass
class Config:
    degrees: list = field(default_factory=lambda: [1, 2, 3, 4])
    eps: list = field(default_factory=lambda: [0.1, 0.01])
    l: int = 1
    k: int = 2
    seed: int = 0
    out: str = "circle_study.json"


def main(cfg: Config) -> list:
    rows = []
    for d in cfg.degrees:
        f, atlas = circle_map(d, l=cfg.l)
        for eps in cfg.eps:
            t0 = time.perf_counter()
            g, rep = approximate(f, atlas, cfg.k, eps, seed=cfg.seed)
            row = {"d": d, "eps": eps, "seconds": time.perf_counter() - t0,
                   "error": measured_error(f, g, f.L, cfg.l), "winding": winding_number(g),
                   "residual": check_containment(g, f.L, atlas)["max_residual"],
                   "seam": check_smoothness(g, cfg.k)["max_discrepancy"],
                   "gap": certificate_equivalence(g, f.L)["max_gap"], "pieces": len(g.pieces().pieces)}
            rows.append(row)
            print(f"d={d} eps={eps}: error {row['error']:.1e} winding {row['winding']} seam {row['seam']:.1e} "
                  f"pieces {row['pieces']} {row['seconds']:.2f}s")
    with open(cfg.out, "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(cfg), "rows": rows}, fh, indent=1, sort_keys=True)
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degrees", type=int, nargs="+", default=Config().degrees)
    ap.add_argument("--eps", type=float, nargs="+", default=Config().eps)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ap.add_argument("--out", default=Config.out)
    a = ap.parse_args()
    main(Config(degrees=a.degrees, eps=a.eps, seed=a.seed, out=a.out))
