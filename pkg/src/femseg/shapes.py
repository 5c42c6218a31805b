"""Convex transition-shape algebra: supports, projections, Dykstra cycling.

A transition shape prices a unit of label interface as a function of the
interface normal through its support function.  Shapes compose: Minkowski
sums add supports, intersections are projected onto by Dykstra cycling.
All primitives here contain the origin, so supports are nonnegative and the
induced interface costs are well defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedShape


class Shape:
    """Base class; subclasses implement support and project."""

    def support(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def project(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.linalg.norm(y - self.project(y)))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class Ball(Shape):
    radius: float

    def support(self, y):
        return self.radius * float(np.linalg.norm(y))

    def project(self, y):
        y = np.asarray(y, dtype=float)
        n = np.linalg.norm(y)
        if n <= self.radius:
            return y.copy()
        if self.radius == 0.0:
            return np.zeros_like(y)
        return y * (self.radius / n)

    def to_dict(self):
        return {"type": "ball", "radius": self.radius}


@dataclass
class Box(Shape):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return float(np.sum(np.maximum(self.lo * y, self.hi * y)))

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lo, self.hi)

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass
class Segment(Shape):
    """Centered segment {t*u : |t| <= h} with unit direction u."""

    direction: np.ndarray
    half_length: float

    def __post_init__(self):
        u = np.asarray(self.direction, dtype=float)
        self.direction = u / np.linalg.norm(u)

    def support(self, y):
        return self.half_length * abs(float(np.dot(self.direction, y)))

    def project(self, y):
        t = float(np.dot(self.direction, np.asarray(y, dtype=float)))
        t = max(-self.half_length, min(self.half_length, t))
        return t * self.direction

    def to_dict(self):
        return {
            "type": "segment",
            "direction": self.direction.tolist(),
            "half_length": self.half_length,
        }


@dataclass
class HalfSpaceCut(Shape):
    """Half space {x : <n, x> <= b} with unit normal; meant for intersections."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        self.normal = n / np.linalg.norm(n)

    def support(self, y):
        raise UnsupportedShape("support of a half space is unbounded")

    def project(self, y):
        y = np.asarray(y, dtype=float)
        excess = float(np.dot(self.normal, y)) - self.offset
        if excess <= 0:
            return y.copy()
        return y - excess * self.normal

    def to_dict(self):
        return {
            "type": "halfspace",
            "normal": self.normal.tolist(),
            "offset": self.offset,
        }


@dataclass
class MinkowskiSum(Shape):
    children: list

    def support(self, y):
        return sum(c.support(y) for c in self.children)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        balls = [c for c in self.children if isinstance(c, Ball)]
        rest = [c for c in self.children if not isinstance(c, Ball)]
        kappa = sum(b.radius for b in balls)
        if not rest:
            return Ball(kappa).project(y)
        if len(rest) == 1 and kappa > 0:
            base = rest[0].project(y)
            gap = y - base
            dist = float(np.linalg.norm(gap))
            if dist <= kappa:
                return y.copy()
            return base + gap * (kappa / dist)
        if len(rest) == 1:
            return rest[0].project(y)
        # General sum: block descent on ||sum_k a_k - y||^2 with a_k in child_k.
        parts = rest + ([Ball(kappa)] if kappa > 0 else [])
        a = [np.zeros_like(y) for _ in parts]
        prev = np.zeros_like(y)
        for _ in range(500):
            for k, c in enumerate(parts):
                others = sum(a[j] for j in range(len(parts)) if j != k)
                a[k] = c.project(y - others)
            cur = sum(a)
            if np.linalg.norm(cur - prev) < 1e-13:
                break
            prev = cur
        return sum(a)

    def to_dict(self):
        return {"type": "minkowski", "children": [c.to_dict() for c in self.children]}


@dataclass
class Intersection(Shape):
    children: list

    def support(self, y):
        raise UnsupportedShape(
            "support of an intersection requires its own maximization"
        )

    def project(self, y):
        return dykstra_project(self.children, y)

    def to_dict(self):
        return {
            "type": "intersection",
            "children": [c.to_dict() for c in self.children],
        }


def support(shape: Shape, y) -> float:
    return shape.support(np.asarray(y, dtype=float))


def project(shape: Shape, y) -> np.ndarray:
    return shape.project(np.asarray(y, dtype=float))


def dykstra_project(
    shapes, y, max_cycles: int = 200, tol: float = 1e-10, return_info: bool = False
):
    """Projection onto the intersection of convex sets by Dykstra cycling.

    Stops when the per-cycle displacement falls below ``tol``.  On hitting
    ``max_cycles`` the best iterate is returned with ``converged=False`` in
    the info dict.
    """
    x = np.asarray(y, dtype=float).copy()
    corrections = [np.zeros_like(x) for _ in shapes]
    converged = False
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        x_start = x.copy()
        for k, shape in enumerate(shapes):
            z = x + corrections[k]
            x = shape.project(z)
            corrections[k] = z - x
        if np.linalg.norm(x - x_start) < tol:
            converged = True
            break
    if return_info:
        return x, {"converged": converged, "cycles": cycles}
    return x


def prox_support(shape: Shape, y, sigma: float = 1.0) -> np.ndarray:
    """Prox of sigma * support(shape, .) via the Moreau identity."""
    y = np.asarray(y, dtype=float)
    return y - sigma * shape.project(y / sigma)


def project_simplex(x) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1}, row-wise for 2D input."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    m = rows.shape[1]
    srt = np.sort(rows, axis=1)[:, ::-1]
    csum = np.cumsum(srt, axis=1) - 1.0
    ks = np.arange(1, m + 1)
    cond = srt - csum / ks > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = csum[np.arange(len(rows)), rho] / (rho + 1)
    out = np.maximum(rows - theta[:, None], 0.0)
    return out[0] if single else out


def scale_shape(shape: Shape, c: float) -> Shape:
    """Shape scaled by c >= 0 (scales every size parameter)."""
    if isinstance(shape, Ball):
        return Ball(shape.radius * c)
    if isinstance(shape, Box):
        return Box(shape.lo * c, shape.hi * c)
    if isinstance(shape, Segment):
        return Segment(shape.direction, shape.half_length * c)
    if isinstance(shape, HalfSpaceCut):
        return HalfSpaceCut(shape.normal, shape.offset * c)
    if isinstance(shape, MinkowskiSum):
        return MinkowskiSum([scale_shape(ch, c) for ch in shape.children])
    if isinstance(shape, Intersection):
        return Intersection([scale_shape(ch, c) for ch in shape.children])
    raise UnsupportedShape(f"cannot scale {type(shape).__name__}")


def shape_from_dict(data: dict) -> Shape:
    kind = data["type"]
    if kind == "ball":
        return Ball(float(data["radius"]))
    if kind == "box":
        return Box(data["lo"], data["hi"])
    if kind == "segment":
        return Segment(data["direction"], float(data["half_length"]))
    if kind == "halfspace":
        return HalfSpaceCut(data["normal"], float(data["offset"]))
    if kind == "minkowski":
        return MinkowskiSum([shape_from_dict(c) for c in data["children"]])
    if kind == "intersection":
        return Intersection([shape_from_dict(c) for c in data["children"]])
    raise UnsupportedShape(f"unknown shape tag {kind!r}")


# ---------------------------------------------------------------------------
# Transition tables
# ---------------------------------------------------------------------------

# Label palette of the synthetic benchmark: 1 free space, 2 building,
# 3 ground, 4 roof.  Pairs preferring flat horizontal interfaces get a shape
# elongated along the horizontal axis (cheap vertical normals); pairs
# preferring vertical walls get the vertical elongation.
HORIZONTAL_PAIRS = frozenset({(1, 3), (1, 4), (2, 3), (2, 4)})
VERTICAL_PAIRS = frozenset({(1, 2)})


class WulffTable:
    """Transition shapes keyed by unordered label pair (i < j, 1-based)."""

    def __init__(self, m: int, shapes: dict):
        self.m = m
        self.shapes = dict(shapes)
        for i in range(1, m + 1):
            for j in range(i + 1, m + 1):
                if (i, j) not in self.shapes:
                    raise UnsupportedShape(f"missing shape for pair ({i},{j})")

    def get(self, i: int, j: int) -> Shape:
        return self.shapes[(min(i, j), max(i, j))]

    def pairs(self):
        return sorted(self.shapes.keys())

    def scaled(self, c: float) -> "WulffTable":
        return WulffTable(
            self.m, {k: scale_shape(v, c) for k, v in self.shapes.items()}
        )

    def to_json(self) -> str:
        return json.dumps(
            {f"{i},{j}": s.to_dict() for (i, j), s in sorted(self.shapes.items())},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "WulffTable":
        raw = json.loads(text)
        shapes = {}
        m = 0
        for key, val in raw.items():
            i, j = (int(t) for t in key.split(","))
            shapes[(i, j)] = shape_from_dict(val)
            m = max(m, j)
        return cls(m, shapes)


def isotropic_table(m: int, kappa: float) -> WulffTable:
    shapes = {
        (i, j): Ball(kappa) for i in range(1, m + 1) for j in range(i + 1, m + 1)
    }
    return WulffTable(m, shapes)


def benchmark_table(
    m: int = 4,
    segment_half_length: float = 1.0,
    ball_radius: float = 0.1,
    dim: int = 2,
    up_axis: int = 1,
) -> WulffTable:
    """Anisotropic preset for the 4-label benchmark palette.

    Unlisted pairs fall back to a ball of radius ``ball_radius +
    segment_half_length / 2`` so every transition has a comparable price.
    """
    horiz = np.zeros(dim)
    horiz[0 if up_axis != 0 else 1] = 1.0
    vert = np.zeros(dim)
    vert[up_axis] = 1.0
    shapes = {}
    for i in range(1, m + 1):
        for j in range(i + 1, m + 1):
            if (i, j) in HORIZONTAL_PAIRS:
                psi = Segment(horiz, segment_half_length)
                shapes[(i, j)] = MinkowskiSum([psi, Ball(ball_radius)])
            elif (i, j) in VERTICAL_PAIRS:
                psi = Segment(vert, segment_half_length)
                shapes[(i, j)] = MinkowskiSum([psi, Ball(ball_radius)])
            else:
                shapes[(i, j)] = Ball(ball_radius + segment_half_length / 2.0)
    return WulffTable(m, shapes)
