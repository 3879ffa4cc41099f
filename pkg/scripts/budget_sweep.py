"""C^l error of the polynomial fitter against the degree budget for a few targets."""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from regulus.sampling import make_region
from regulus.weierstrass import BUDGETS, budget_errors

TARGETS = {
    "exp": lambda X: np.exp(X),
    "sin5": lambda X: np.sin(5 * X),
    "runge": lambda X: 1 / (1 + 25 * (2 * X - 1) ** 2),
    "abs_smooth": lambda X: np.sqrt((X - 0.5) ** 2 + 1e-2),
}


@dataclass
class Config:
    l: int = 1
    h: float = 1 / 32
    basis: str = "chebyshev"
    out: str = "budget_sweep.json"


def main(cfg: Config) -> dict:
    L = make_region({"kind": "box", "lo": [0.0], "hi": [1.0], "h": cfg.h})
    table = {name: budget_errors(fn, L, cfg.l, basis=cfg.basis) for name, fn in TARGETS.items()}
    print("target      " + " ".join(f"{d:>9d}" for d in BUDGETS))
    for name, errs in table.items():
        print(f"{name:<11} " + " ".join(f"{e:9.1e}" for _, e in errs))
    with open(cfg.out, "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(cfg), "errors": table}, fh, indent=1, sort_keys=True)
    return table


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--l", type=int, default=Config.l)
    ap.add_argument("--h", type=float, default=Config.h)
    ap.add_argument("--basis", default=Config.basis, choices=["chebyshev", "bernstein"])
    ap.add_argument("--out", default=Config.out)
    a = ap.parse_args()
    main(Config(l=a.l, h=a.h, basis=a.basis, out=a.out))
