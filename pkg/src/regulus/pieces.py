"""Stratified representations: sign conditions plus one regular expression per piece.

A piece expression is built from polynomials by composition, products, sums
and rational chart maps, so it is regular wherever its denominators do not
vanish. Nothing here is expanded to monomials; composition chains keep the
degrees of individual factors small and evaluation well conditioned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadSpec, UnmatchedSample
from .poly import MultiPoly, PolyMap, RationalMap, scalar_from_json, scalar_to_json
from .sampling import make_region

# ---------------------------------------------------------------------------
# expressions


class Expr:
    kind = "expr"

    def __call__(self, X) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def to_json(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


class Poly(Expr):
    """A scalar polynomial (any of the poly.py forms) or a PolyMap."""

    kind = "poly"

    def __init__(self, p):
        self.p = p

    def __call__(self, X):
        return np.asarray(self.p(np.atleast_2d(X)), dtype=float)

    def to_json(self):
        if isinstance(self.p, PolyMap):
            return {"kind": "poly", "map": self.p.to_json()}
        return {"kind": "poly", "scalar": scalar_to_json(self.p)}


class Const(Expr):
    kind = "const"

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def __call__(self, X):
        n = len(np.atleast_2d(X))
        if self.value.ndim == 0:
            return np.full(n, float(self.value))
        return np.tile(self.value, (n, 1))

    def to_json(self):
        return {"kind": "const", "value": self.value.tolist()}


class Chain(Expr):
    """inner followed by univariate polynomial steps u -> s_1(u) -> s_2(...) ..."""

    kind = "chain"

    def __init__(self, inner: Expr, steps):
        self.inner = inner
        self.steps = list(steps)
        for s in self.steps:
            if s.nvars != 1:
                raise BadSpec("chain steps must be univariate")

    def __call__(self, X):
        u = self.inner(X)
        for s in self.steps:
            u = s(u[:, None])
        return u

    def then(self, *steps) -> "Chain":
        return Chain(self.inner, self.steps + list(steps))

    def to_json(self):
        return {"kind": "chain", "inner": self.inner.to_json(), "steps": [str(s) for s in self.steps]}


class Blend(Expr):
    """weight * a + (1 - weight) * b for a scalar weight."""

    kind = "blend"

    def __init__(self, weight: Expr, a: Expr, b: Expr):
        self.weight, self.a, self.b = weight, a, b

    def __call__(self, X):
        w = self.weight(X)
        a, b = self.a(X), self.b(X)
        if a.ndim == 2:
            w = w[:, None]
        return w * a + (1.0 - w) * b

    def to_json(self):
        return {"kind": "blend", "weight": self.weight.to_json(), "a": self.a.to_json(), "b": self.b.to_json()}


class Push(Expr):
    """A rational map applied to the output of an inner expression."""

    kind = "push"

    def __init__(self, rmap: RationalMap, inner: Expr):
        self.rmap, self.inner = rmap, inner

    def __call__(self, X):
        v = self.inner(X)
        if v.ndim == 1:
            v = v[:, None]
        return np.atleast_2d(self.rmap(v))

    def to_json(self):
        return {"kind": "push", "map": self.rmap.to_json(), "inner": self.inner.to_json()}


def expr_from_json(d: dict) -> Expr:
    k = d.get("kind")
    if k == "poly":
        return Poly(PolyMap.from_json(d["map"]) if "map" in d else scalar_from_json(d["scalar"]))
    if k == "const":
        return Const(d["value"])
    if k == "chain":
        return Chain(expr_from_json(d["inner"]), [MultiPoly.parse(s, 1) for s in d["steps"]])
    if k == "blend":
        return Blend(expr_from_json(d["weight"]), expr_from_json(d["a"]), expr_from_json(d["b"]))
    if k == "push":
        return Push(RationalMap.from_json(d["map"]), expr_from_json(d["inner"]))
    raise BadSpec(f"unknown expression kind {k!r}")


# ---------------------------------------------------------------------------
# conditions

_OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


@dataclass
class Sign:
    """expr <op> 0"""

    expr: Expr
    op: str
    name: str = ""

    def holds(self, X, ctx) -> np.ndarray:
        return _OPS[self.op](self.expr(X), 0.0)

    def to_json(self):
        return {"kind": "sign", "op": self.op, "name": self.name, "expr": self.expr.to_json()}


@dataclass
class InRegion:
    """Membership (or non-membership) in a named semialgebraic region."""

    region: str
    inside: bool = True

    def holds(self, X, ctx) -> np.ndarray:
        m = np.asarray(ctx.region(self.region).membership(np.atleast_2d(X)), dtype=bool)
        return m if self.inside else ~m

    def to_json(self):
        return {"kind": "region", "region": self.region, "inside": self.inside}


@dataclass
class Component:
    """Point lies in connected component ``label`` of a labeled sample (nearest sample rule)."""

    selector: str
    label: int

    def holds(self, X, ctx) -> np.ndarray:
        return ctx.selector(self.selector).labels_of(X) == self.label

    def to_json(self):
        return {"kind": "component", "selector": self.selector, "label": self.label}


def condition_from_json(d: dict):
    k = d.get("kind")
    if k == "sign":
        return Sign(expr_from_json(d["expr"]), d["op"], d.get("name", ""))
    if k == "region":
        return InRegion(d["region"], d["inside"])
    if k == "component":
        return Component(d["selector"], int(d["label"]))
    raise BadSpec(f"unknown condition kind {k!r}")


class ComponentSelector:
    """Connected-component label of arbitrary points via the nearest labeled sample."""

    def __init__(self, points, labels):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.labels = np.asarray(labels, dtype=int)
        self._tree = cKDTree(self.points)

    def labels_of(self, X) -> np.ndarray:
        _, i = self._tree.query(np.atleast_2d(X))
        return self.labels[i]

    def to_json(self):
        return {"points": self.points.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(d["points"], d["labels"])


@dataclass
class Context:
    """Named regions and component selectors referenced by conditions."""

    regions: dict = field(default_factory=dict)
    selectors: dict = field(default_factory=dict)
    _built: dict = field(default_factory=dict, repr=False)

    def region(self, name):
        if name not in self._built:
            self._built[name] = make_region(self.regions[name])
        return self._built[name]

    def selector(self, name) -> ComponentSelector:
        return self.selectors[name]

    def merge(self, other: "Context") -> "Context":
        for k, v in other.regions.items():
            if k in self.regions and self.regions[k] != v:
                raise BadSpec(f"conflicting region {k!r}")
            self.regions[k] = v
        for k, v in other.selectors.items():
            self.selectors[k] = v
        return self

    def to_json(self):
        return {"regions": self.regions, "selectors": {k: s.to_json() for k, s in self.selectors.items()}}

    @classmethod
    def from_json(cls, d):
        return cls(dict(d.get("regions", {})),
                   {k: ComponentSelector.from_json(v) for k, v in d.get("selectors", {}).items()})


# ---------------------------------------------------------------------------
# pieces


@dataclass
class Piece:
    conditions: list
    expr: Expr
    name: str = ""

    def holds(self, X, ctx) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = np.ones(len(X), dtype=bool)
        for c in self.conditions:
            if not ok.any():
                break
            idx = np.nonzero(ok)[0]
            ok[idx] = c.holds(X[idx], ctx)
        return ok

    def to_json(self):
        return {"name": self.name, "conditions": [c.to_json() for c in self.conditions],
                "expr": self.expr.to_json()}

    @classmethod
    def from_json(cls, d):
        return cls([condition_from_json(c) for c in d["conditions"]], expr_from_json(d["expr"]), d.get("name", ""))


class PieceList:
    """A finite list of pieces meant to partition the domain."""

    def __init__(self, pieces, ctx: Context | None = None):
        self.pieces = list(pieces)
        self.ctx = ctx or Context()

    def membership(self, X) -> np.ndarray:
        """Boolean matrix (points x pieces)."""
        X = np.atleast_2d(X)
        return np.stack([p.holds(X, self.ctx) for p in self.pieces], axis=1)

    def locate(self, X) -> np.ndarray:
        M = self.membership(X)
        counts = M.sum(axis=1)
        if np.any(counts != 1):
            bad = int(np.nonzero(counts != 1)[0][0])
            raise UnmatchedSample(f"sample {np.atleast_2d(X)[bad].tolist()} lies in {int(counts[bad])} pieces")
        return np.argmax(M, axis=1)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        which = self.locate(X)
        out = None
        for k, p in enumerate(self.pieces):
            sel = which == k
            if not sel.any():
                continue
            v = p.expr(X[sel])
            if out is None:
                out = np.zeros((len(X),) + v.shape[1:])
            out[sel] = v
        return out

    def to_json(self):
        return {"pieces": [p.to_json() for p in self.pieces], "context": self.ctx.to_json()}

    @classmethod
    def from_json(cls, d):
        return cls([Piece.from_json(p) for p in d["pieces"]], Context.from_json(d.get("context", {})))
