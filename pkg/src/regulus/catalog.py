"""Built-in maps and job specifications shared by the command line, tests and scripts."""
from __future__ import annotations

import numpy as np

from .errors import BadSpec
from .gluing import MapSpec
from .poly import parse_poly
from .sampling import make_region
from .varieties import Atlas, atlas_from_json, sphere_atlas

CIRCLE_SAMPLES = 400
PATCH_H = 1 / 40


def circle_map(d: int, samples: int = CIRCLE_SAMPLES, l: int = 1) -> tuple[MapSpec, Atlas]:
    """theta -> (cos d theta, sin d theta) on [0, 2 pi]."""
    L = make_region({"kind": "box", "lo": [0.0], "hi": [2 * np.pi], "h": 2 * np.pi / samples})

    def f(X):
        t = d * np.atleast_2d(X)[:, 0]
        return np.stack([np.cos(t), np.sin(t)], axis=1)

    return MapSpec(f, L, l, None, f"circle map of degree {d}"), sphere_atlas(1)


def sphere_patch_map(h: float = PATCH_H, l: int = 1) -> tuple[MapSpec, Atlas]:
    """(u, v) in [0,1]^2 -> point of S^2 at polar angle 0.05 + 3.04 u and azimuth 2 v.

    The image runs from near the north pole to near the south pole, so neither
    stereographic chart covers it alone.
    """
    L = make_region({"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0], "h": h})

    def f(X):
        X = np.atleast_2d(X)
        a = 0.05 + 3.04 * X[:, 0]
        b = 2.0 * X[:, 1]
        return np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], axis=1)

    return MapSpec(f, L, l, None, "sphere patch"), sphere_atlas(2)


def map_from_spec(spec: dict, l: int = 1, grid_h: float | None = None) -> tuple[MapSpec, Atlas]:
    """Map and atlas from a job's ``map`` entry.

    Kinds: ``circle`` (``d``, ``samples``), ``sphere_patch`` (``h``) and ``custom``
    (polynomial ``components`` in text form, a ``domain`` region and an ``atlas``).
    """
    kind = spec.get("kind")
    if kind == "circle":
        samples = int(spec.get("samples", CIRCLE_SAMPLES))
        if grid_h:
            samples = int(np.ceil(2 * np.pi / grid_h))
        return circle_map(int(spec["d"]), samples, l)
    if kind == "sphere_patch":
        return sphere_patch_map(float(grid_h or spec.get("h", PATCH_H)), l)
    if kind == "custom":
        try:
            domain = dict(spec["domain"])
            if grid_h:
                domain["h"] = grid_h
            L = make_region(domain)
            polys = [parse_poly(t, L.dim) for t in spec["components"]]
            atlas = atlas_from_json(spec["atlas"])
        except KeyError as exc:
            raise BadSpec(f"custom map needs {exc}") from exc
        if len(polys) != atlas.ambient_dim:
            raise BadSpec(f"need {atlas.ambient_dim} components, got {len(polys)}")

        def f(X):
            X = np.atleast_2d(X)
            return np.stack([p(X) for p in polys], axis=1)

        return MapSpec(f, L, l, None, "custom"), atlas
    raise BadSpec(f"unknown map kind {kind!r}")


def box_pair(n: int, k_half: float = 0.2, u_half: float = 1.0, h: float | None = None) -> dict:
    """Bump job for K = [-k_half, k_half]^n inside U = (-u_half, u_half)^n."""
    h = h or (2 * u_half / 400 if n == 1 else 2 * u_half / 100)
    return {"K": {"kind": "box", "lo": [-k_half] * n, "hi": [k_half] * n, "h": h},
            "U": {"kind": "box", "lo": [-u_half] * n, "hi": [u_half] * n, "h": h}}
