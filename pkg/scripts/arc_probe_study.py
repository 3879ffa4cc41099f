"""Rational arc probes along random lines through approximate() outputs.

The pass rate is a spot-check statistic: it is printed and written out, not asserted.
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from regulus.catalog import circle_map, sphere_patch_map
from regulus.certify import arc_probe, line_arc
from regulus.errors import NoInteriorWindow
from regulus.gluing import approximate


@dataclass
class Config:
    lines: int = 100
    seed: int = 0
    target: float = 0.95
    out: str = "arc_probe_study.json"


def probe_rate(g, lo, hi, cfg: Config, rng) -> dict:
    passed = skipped = 0
    worst = 0.0
    for _ in range(cfg.lines):
        p0, p1 = rng.uniform(lo, hi), rng.uniform(lo, hi)
        try:
            rep = arc_probe(g, line_arc(p0, p1))
        except NoInteriorWindow:
            skipped += 1
            continue
        passed += rep["pass"]
        worst = max(worst, rep["residual"])
    probed = cfg.lines - skipped
    return {"probed": probed, "skipped": skipped, "passed": passed,
            "rate": passed / probed if probed else float("nan"), "worst_residual": worst}


def main(cfg: Config) -> dict:
    rng = np.random.default_rng(cfg.seed)
    out = {"config": asdict(cfg), "maps": {}}
    for d in (1, 2, 3):
        f, atlas = circle_map(d)
        g, _ = approximate(f, atlas, 2, 0.1, seed=cfg.seed)
        out["maps"][f"circle{d}"] = probe_rate(g, [0.0], [2 * np.pi], cfg, rng)
    f, atlas = sphere_patch_map()
    g, _ = approximate(f, atlas, 1, 0.05, seed=cfg.seed)
    out["maps"]["sphere_patch"] = probe_rate(g, [0.0, 0.0], [1.0, 1.0], cfg, rng)
    for name, r in out["maps"].items():
        flag = "meets" if r["rate"] >= cfg.target else "below"
        print(f"{name}: {r['passed']}/{r['probed']} lines pass ({flag} {cfg.target:.0%}), "
              f"worst residual {r['worst_residual']:.1e}")
    with open(cfg.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lines", type=int, default=Config.lines)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ap.add_argument("--out", default=Config.out)
    a = ap.parse_args()
    main(Config(lines=a.lines, seed=a.seed, out=a.out))
