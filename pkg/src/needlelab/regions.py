"""Region specs as signed level functions (<= 0 inside).

Regions are used as integration windows and as mass test sets.  Each one
evaluates a continuous signed function on arrays of points, which lets the
ray code find ray/region intersections by root bracketing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Region:
    def signed(self, space, pts) -> np.ndarray:
        raise NotImplementedError

    def contains(self, space, pts) -> np.ndarray:
        return self.signed(space, pts) <= 0

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


@dataclass(frozen=True)
class Everything(Region):
    def signed(self, space, pts):
        return -np.ones(np.shape(pts)[:-1])


@dataclass(frozen=True)
class Nothing(Region):
    def signed(self, space, pts):
        return np.ones(np.shape(pts)[:-1])


@dataclass(frozen=True)
class Ball(Region):
    """Closed metric ball."""

    center: tuple
    radius: float

    def signed(self, space, pts):
        return space.distance(pts, np.asarray(self.center, dtype=float)) - self.radius

    def describe(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Annulus(Region):
    center: tuple
    r0: float
    r1: float

    def signed(self, space, pts):
        d = space.distance(pts, np.asarray(self.center, dtype=float))
        return np.maximum(self.r0 - d, d - self.r1)

    def describe(self):
        return {"kind": "annulus", "center": list(self.center), "r0": self.r0, "r1": self.r1}


@dataclass(frozen=True)
class Box(Region):
    """Chart-aligned box lo <= x <= hi (use +-inf for unbounded sides)."""

    lo: tuple
    hi: tuple

    def signed(self, space, pts):
        pts = np.asarray(pts, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.maximum(lo - pts, pts - hi)
        out = np.where(np.isnan(out), -np.inf, out)
        return out.max(axis=-1)

    def describe(self):
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


def band(axis: int, lo: float, hi: float, dim: int) -> Box:
    """The slab lo <= x[axis] <= hi in a ``dim``-dimensional chart."""
    lows = [-np.inf] * dim
    highs = [np.inf] * dim
    lows[axis], highs[axis] = lo, hi
    return Box(tuple(lows), tuple(highs))


@dataclass(frozen=True)
class HalfSpace(Region):
    """{x : normal . x <= offset} in chart/ambient coordinates."""

    normal: tuple
    offset: float = 0.0

    def signed(self, space, pts):
        return np.asarray(pts, dtype=float) @ np.asarray(self.normal, dtype=float) - self.offset

    def describe(self):
        return {"kind": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Intersection(Region):
    parts: tuple

    def signed(self, space, pts):
        return np.max([p.signed(space, pts) for p in self.parts], axis=0)

    def describe(self):
        return {"kind": "intersection", "parts": [p.describe() for p in self.parts]}


def region_from_spec(spec: dict | None, dim: int) -> Region:
    """Build a region from a config mapping."""
    if spec is None:
        return Everything()
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind in ("everything", "all"):
        return Everything()
    if kind in ("nothing", "empty"):
        return Nothing()
    if kind == "ball":
        return Ball(tuple(spec["center"]), float(spec["radius"]))
    if kind == "annulus":
        return Annulus(tuple(spec["center"]), float(spec["r0"]), float(spec["r1"]))
    if kind == "box":
        return Box(tuple(float(v) for v in spec["lo"]), tuple(float(v) for v in spec["hi"]))
    if kind == "band":
        return band(int(spec["axis"]), float(spec["lo"]), float(spec["hi"]), dim)
    if kind == "halfspace":
        return HalfSpace(tuple(spec["normal"]), float(spec.get("offset", 0.0)))
    raise ValueError(f"unknown region kind {kind!r}")
