"""Sparse multivariate polynomials, rational maps and tensor Chebyshev polynomials.

Polynomials are immutable. Points are passed as arrays of shape ``(N, nvars)``
(a single point of shape ``(nvars,)`` is also accepted and gives a scalar).
"""
from __future__ import annotations

import re
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as Pw

from .errors import DegreeCapExceeded, DimensionMismatch, DomainViolation

DEGREE_CAP = 64
TINY_DENOMINATOR = 1e-300


def _as_points(x, nvars: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != nvars:
        raise DimensionMismatch(f"expected {nvars} coordinates, got {X.shape[1]}")
    return X, single


def _term_key(exps):
    return (-sum(exps), tuple(-e for e in exps))


class MultiPoly:
    """Polynomial in ``nvars`` variables stored as a sparse map exponent -> coefficient."""

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping | Iterable = ()):
        acc: dict[tuple[int, ...], float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for exps, coef in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise DimensionMismatch(f"multi-index {exps} has wrong length for {nvars} variables")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            if any(e > DEGREE_CAP for e in exps):
                raise DegreeCapExceeded(f"exponent {max(exps)} exceeds per-variable cap {DEGREE_CAP}")
            acc[exps] = acc.get(exps, 0.0) + float(coef)
        self.nvars = int(nvars)
        self._terms = tuple(sorted(((e, c) for e, c in acc.items() if c != 0.0),
                                   key=lambda t: _term_key(t[0])))

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, nvars: int, value: float) -> "MultiPoly":
        return cls(nvars, [((0,) * nvars, value)])

    @classmethod
    def variable(cls, nvars: int, index: int) -> "MultiPoly":
        e = [0] * nvars
        e[index] = 1
        return cls(nvars, [(tuple(e), 1.0)])

    @classmethod
    def univariate(cls, coeffs: Sequence[float]) -> "MultiPoly":
        """Univariate polynomial from ascending coefficients."""
        return cls(1, [((i,), c) for i, c in enumerate(coeffs)])

    # basic properties ---------------------------------------------------
    @property
    def terms(self) -> tuple:
        return self._terms

    def degree(self) -> int:
        return max((sum(e) for e, _ in self._terms), default=0)

    def degrees(self) -> tuple[int, ...]:
        """Maximal exponent per variable."""
        out = [0] * self.nvars
        for e, _ in self._terms:
            for i, a in enumerate(e):
                out[i] = max(out[i], a)
        return tuple(out)

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = MultiPoly.constant(self.nvars, other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, self._terms))

    # evaluation ---------------------------------------------------------
    def __call__(self, x):
        X, single = _as_points(x, self.nvars)
        out = np.zeros(X.shape[0])
        if self._terms:
            degs = self.degrees()
            pw = [X[:, i, None] ** np.arange(d + 1) for i, d in enumerate(degs)]
            for exps, coef in self._terms:
                t = np.full(X.shape[0], coef)
                for i, a in enumerate(exps):
                    if a:
                        t = t * pw[i][:, a]
                out += t
        return float(out[0]) if single else out

    def grad(self, x) -> np.ndarray:
        X, single = _as_points(x, self.nvars)
        G = np.stack([self.partial(i)(X) for i in range(self.nvars)], axis=1)
        return G[0] if single else G

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise DimensionMismatch(f"{self.nvars} vs {other.nvars} variables")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return MultiPoly.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return MultiPoly(self.nvars, list(self._terms) + list(other._terms))

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, [(e, -c) for e, c in self._terms])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = []
        for e1, c1 in self._terms:
            for e2, c2 in other._terms:
                acc.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return MultiPoly(self.nvars, acc)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self * (1.0 / float(scalar))

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise ValueError("only non-negative integer powers")
        result = MultiPoly.constant(self.nvars, 1.0)
        base = self
        n = int(n)
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def partial(self, axis: int) -> "MultiPoly":
        if not 0 <= axis < self.nvars:
            raise DimensionMismatch(f"axis {axis} out of range for {self.nvars} variables")
        acc = []
        for e, c in self._terms:
            if e[axis]:
                e2 = list(e)
                e2[axis] -= 1
                acc.append((tuple(e2), c * e[axis]))
        return MultiPoly(self.nvars, acc)

    def compose(self, maps: Sequence["MultiPoly"]) -> "MultiPoly":
        """Substitute ``maps[i]`` for variable ``i``."""
        if len(maps) != self.nvars:
            raise DimensionMismatch(f"need {self.nvars} substitutions, got {len(maps)}")
        m = maps[0].nvars if maps else 0
        if any(q.nvars != m for q in maps):
            raise DimensionMismatch("substituted polynomials disagree on nvars")
        cache: dict[tuple[int, int], MultiPoly] = {}

        def power(i, a):
            if (i, a) not in cache:
                cache[(i, a)] = maps[i] ** a
            return cache[(i, a)]

        out = MultiPoly(m)
        for e, c in self._terms:
            t = MultiPoly.constant(m, c)
            for i, a in enumerate(e):
                if a:
                    t = t * power(i, a)
            out = out + t
        return out

    # text / json --------------------------------------------------------
    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for e, c in self._terms:
            mono = " ".join(f"x{i + 1}" if a == 1 else f"x{i + 1}^{a}" for i, a in enumerate(e) if a)
            parts.append(f"{c!r} * {mono}" if mono else f"{c!r}")
        return " + ".join(parts)

    def __repr__(self):
        return f"MultiPoly({self.nvars}, '{self}')"

    def to_json(self) -> dict:
        return {"nvars": self.nvars, "terms": [[list(e), c] for e, c in self._terms]}

    @classmethod
    def from_json(cls, data: dict) -> "MultiPoly":
        return cls(data["nvars"], [(tuple(e), c) for e, c in data["terms"]])

    @classmethod
    def parse(cls, text: str, nvars: int) -> "MultiPoly":
        return parse_poly(text, nvars)


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf|nan)"
                    r"|(?P<var>x(?P<idx>\d+)(?:\^(?P<pow>\d+))?)|(?P<op>[-+*]))")


def parse_poly(text: str, nvars: int) -> MultiPoly:
    """Parse the canonical text form, e.g. ``"1.5 * x1^2 x2 + -3.0"``.

    Also accepts ``-`` between terms and ``*`` between factors.
    """
    pos = 0
    terms = []
    sign, coef, exps, started = 1.0, None, [0] * nvars, False
    text = text.strip()
    if text in ("", "0"):
        return MultiPoly(nvars)

    def flush():
        c = 1.0 if coef is None else coef
        terms.append((tuple(exps), sign * c))

    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse polynomial near {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.group("op") in ("+", "-"):
            if started:
                flush()
                sign, coef, exps, started = 1.0, None, [0] * nvars, False
            if m.group("op") == "-":
                sign = -sign
        elif m.group("op") == "*":
            continue
        elif m.group("num") is not None:
            coef = (1.0 if coef is None else coef) * float(m.group("num"))
            started = True
        else:
            i = int(m.group("idx")) - 1
            if not 0 <= i < nvars:
                raise DimensionMismatch(f"variable x{i + 1} outside {nvars} variables")
            exps[i] += int(m.group("pow") or 1)
            started = True
    if started:
        flush()
    return MultiPoly(nvars, terms)


def poly_eval(p: MultiPoly, x) -> float:
    return p(x)


def poly_partial(p: MultiPoly, axis: int) -> MultiPoly:
    return p.partial(axis)


def poly_arith(op: str, *args):
    """Dispatch ``add``, ``mul``, ``pow`` or ``compose`` on polynomials."""
    if op == "add":
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if op == "mul":
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    if op == "pow":
        return args[0] ** args[1]
    if op == "compose":
        return args[0].compose(args[1])
    raise ValueError(f"unknown op {op!r}")


class RationalMap:
    """Component-wise quotients ``num_i / den_i`` with guard polynomials that must be positive."""

    def __init__(self, components: Sequence[tuple[MultiPoly, MultiPoly]], guards: Sequence[MultiPoly] = ()):
        if not components:
            raise ValueError("rational map needs at least one component")
        self.nvars = components[0][0].nvars
        for num, den in components:
            if num.nvars != self.nvars or den.nvars != self.nvars:
                raise DimensionMismatch("components disagree on nvars")
        self.components = tuple((n, d) for n, d in components)
        self.guards = tuple(guards)

    @property
    def ncomp(self) -> int:
        return len(self.components)

    def valid(self, x) -> np.ndarray:
        X, _ = _as_points(x, self.nvars)
        ok = np.ones(X.shape[0], dtype=bool)
        for g in self.guards:
            ok &= g(X) > 0
        for _, den in self.components:
            ok &= np.abs(den(X)) >= TINY_DENOMINATOR
        return ok

    def __call__(self, x):
        X, single = _as_points(x, self.nvars)
        for g in self.guards:
            gv = g(X)
            if np.any(~(gv > 0)):
                raise DomainViolation(f"guard {g} not positive at {int(np.sum(~(gv > 0)))} point(s)")
        out = np.empty((X.shape[0], self.ncomp))
        for j, (num, den) in enumerate(self.components):
            dv = den(X)
            if np.any(~(np.abs(dv) >= TINY_DENOMINATOR)):
                raise DomainViolation("denominator vanishes")
            out[:, j] = num(X) / dv
        return out[0] if single else out

    def to_json(self) -> dict:
        return {"nvars": self.nvars,
                "components": [[str(n), str(d)] for n, d in self.components],
                "guards": [str(g) for g in self.guards]}

    @classmethod
    def from_json(cls, data: dict) -> "RationalMap":
        n = data["nvars"]
        comps = [(parse_poly(a, n), parse_poly(b, n)) for a, b in data["components"]]
        return cls(comps, [parse_poly(g, n) for g in data.get("guards", [])])

    @classmethod
    def polynomial(cls, polys: Sequence[MultiPoly]) -> "RationalMap":
        one = MultiPoly.constant(polys[0].nvars, 1.0)
        return cls([(p, one) for p in polys])


def rational_eval(r: RationalMap, x):
    return r(x)


class ChebPoly:
    """Tensor-product Chebyshev expansion on an axis-aligned box.

    This is an ordinary polynomial; the Chebyshev form only keeps evaluation
    well conditioned at high degree. ``to_multipoly`` gives the monomial form.
    """

    def __init__(self, coeffs, lo, hi):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.nvars = self.lo.size
        if self.coeffs.ndim != self.nvars:
            raise DimensionMismatch("coefficient tensor rank must equal nvars")
        if any(d - 1 > DEGREE_CAP for d in self.coeffs.shape):
            raise DegreeCapExceeded(f"degree {max(self.coeffs.shape) - 1} exceeds cap {DEGREE_CAP}")

    def degrees(self) -> tuple[int, ...]:
        return tuple(d - 1 for d in self.coeffs.shape)

    def _t(self, X):
        return (2.0 * X - (self.lo + self.hi)) / (self.hi - self.lo)

    def __call__(self, x):
        X, single = _as_points(x, self.nvars)
        T = self._t(X)
        letters = "abcdefgh"[: self.nvars]
        ops = [C.chebvander(T[:, i], self.coeffs.shape[i] - 1) for i in range(self.nvars)]
        spec = ",".join("n" + a for a in letters) + "," + letters + "->n"
        out = np.einsum(spec, *ops, self.coeffs, optimize=True)
        return float(out[0]) if single else np.asarray(out)

    def partial(self, axis: int, order: int = 1) -> "ChebPoly":
        scale = (2.0 / (self.hi[axis] - self.lo[axis])) ** order
        c = self.coeffs
        if c.shape[axis] <= order:
            shape = list(c.shape)
            shape[axis] = 1
            return ChebPoly(np.zeros(shape), self.lo, self.hi)
        d = C.chebder(c, m=order, axis=axis) * scale
        return ChebPoly(d, self.lo, self.hi)

    def grad(self, x) -> np.ndarray:
        X, single = _as_points(x, self.nvars)
        G = np.stack([self.partial(i)(X) for i in range(self.nvars)], axis=1)
        return G[0] if single else G

    def to_multipoly(self) -> MultiPoly:
        c = self.coeffs
        for axis in range(self.nvars):
            c = np.apply_along_axis(C.cheb2poly, axis, c)
        n = self.nvars
        t_terms = [(idx, c[idx]) for idx in product(*(range(s) for s in c.shape))]
        in_t = MultiPoly(n, t_terms)
        scaled = []
        for i in range(n):
            a = 2.0 / (self.hi[i] - self.lo[i])
            b = -(self.lo[i] + self.hi[i]) / (self.hi[i] - self.lo[i])
            scaled.append(MultiPoly.variable(n, i) * a + b)
        return in_t.compose(scaled)

    def to_json(self) -> dict:
        return {"kind": "cheb", "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "shape": list(self.coeffs.shape), "coeffs": self.coeffs.ravel().tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ChebPoly":
        return cls(np.asarray(data["coeffs"]).reshape(data["shape"]), data["lo"], data["hi"])


class SquaredPoly:
    """The square ``W**2`` of a polynomial, kept factored (nonnegative by construction)."""

    def __init__(self, base):
        self.base = base
        self.nvars = base.nvars

    def __call__(self, x):
        w = self.base(x)
        return w * w

    def grad(self, x) -> np.ndarray:
        X, single = _as_points(x, self.nvars)
        G = 2.0 * self.base(X)[:, None] * self.base.grad(X)
        return G[0] if single else G

    def partial(self, axis: int):
        raise NotImplementedError("expand with to_multipoly() for higher derivatives")

    def to_multipoly(self) -> MultiPoly:
        b = self.base if isinstance(self.base, MultiPoly) else self.base.to_multipoly()
        return b * b

    def to_json(self) -> dict:
        return {"kind": "square", "base": scalar_to_json(self.base)}


def scalar_from_json(data: dict):
    """Rebuild a scalar polynomial (monomial, Chebyshev or squared form)."""
    kind = data.get("kind")
    if kind == "cheb":
        return ChebPoly.from_json(data)
    if kind == "square":
        return SquaredPoly(scalar_from_json(data["base"]))
    return MultiPoly.from_json(data)


def scalar_to_json(p) -> dict:
    d = p.to_json()
    if isinstance(p, MultiPoly):
        d = {"kind": "mono", **d, "text": str(p)}
    return d


class PolyMap:
    """Polynomial map R^n -> R^m given by scalar polynomials (monomial or Chebyshev)."""

    def __init__(self, components: Sequence):
        self.components = tuple(components)
        self.nvars = self.components[0].nvars
        if any(c.nvars != self.nvars for c in self.components):
            raise DimensionMismatch("components disagree on nvars")

    @property
    def ncomp(self) -> int:
        return len(self.components)

    def __call__(self, x):
        X, single = _as_points(x, self.nvars)
        out = np.stack([c(X) for c in self.components], axis=1)
        return out[0] if single else out

    def to_json(self) -> dict:
        return {"components": [scalar_to_json(c) for c in self.components]}

    @classmethod
    def from_json(cls, data: dict) -> "PolyMap":
        return cls([scalar_from_json(c) for c in data["components"]])


def univariate_eval(coeffs: Sequence[float], u: np.ndarray) -> np.ndarray:
    return Pw.polyval(u, np.asarray(coeffs, dtype=float))
