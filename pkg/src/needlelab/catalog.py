"""The catalog of (space, base) pairs used by the sweeps and the suite.

Every entry fixes a window, the CurvatureDim the space certifies, a
library of test bumps and the closed-form oracle of the regular part of
Delta u as a function of u (the logarithmic derivative of the model
Jacobian).  Bumps of level-set entries stay away from {v = 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CurvatureDim
from .density_1d import ClosedForm
from .laplacian import ChartBump, LevelBump, TestFunction
from .model_spaces import (FlatCylinder, LevelSet, Line, Point, ProductLine, SpaceForm,
                           WeightedInterval)
from .ray_disintegration import Disintegration, Resolution, disintegrate
from .regions import Ball, Box, Everything, Region, band

PRIMARY_KIND = {"point": "d_p", "level": "d_v", "line": "busemann"}
KINDS_BY_VARIANT = {
    "point": ("d_p", "d_p_sq"),
    "level": ("d_v", "abs_d_v", "d_v_sq"),
    "line": ("busemann",),
}


@dataclass(eq=False)
class CatalogEntry:
    name: str
    space: object
    base: object
    window: Region
    kd: CurvatureDim
    bumps: tuple
    oracle: object  # u -> regular part of Delta u (first-order kind)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def variant(self) -> str:
        return self.base.variant

    @property
    def kinds(self) -> tuple:
        return KINDS_BY_VARIANT[self.variant]

    def disintegration(self, resolution: Resolution | None = None) -> Disintegration:
        res = resolution or Resolution()
        if res not in self._cache:
            self._cache[res] = disintegrate(self.space, self.base, self.window, res)
        return self._cache[res]

    def describe(self) -> dict:
        return {"name": self.name, "space": self.space.describe(),
                "base": repr(self.base), "window": self.window.describe(),
                "K": self.kd.K, "N": self.kd.N,
                "bumps": [b.describe() for b in self.bumps]}


def _sphere_point(space: SpaceForm, r: float, phi: float = 0.0) -> tuple:
    """Ambient point at distance r from the default point (first tangent plane)."""
    R = space.R
    x = np.zeros(space.chart_dim)
    if space.K > 0:
        x[0] = R * math.sin(r / R) * math.cos(phi)
        x[1] = R * math.sin(r / R) * math.sin(phi)
        x[-1] = R * math.cos(r / R)
    elif space.K < 0:
        x[0] = R * math.sinh(r / R) * math.cos(phi)
        x[1] = R * math.sinh(r / R) * math.sin(phi)
        x[-1] = R * math.cosh(r / R)
    else:
        x[0] = r * math.cos(phi)
        x[1] = r * math.sin(phi)
    return tuple(float(v) for v in x)


def _p(space: SpaceForm) -> tuple:
    return tuple(float(v) for v in space.default_point())


def _cot(u):
    return 1.0 / np.tan(u)


def _entries() -> list:
    out = []
    pi = math.pi

    def add(*args):
        out.append(CatalogEntry(*args))

    # -- distance from a point ---------------------------------------------
    s2 = SpaceForm(2, 1.0)
    add("sphere2_dp", s2, Point(_p(s2)), Everything(), CurvatureDim(1.0, 2.0),
        (ChartBump(_sphere_point(s2, 1.0), 0.4), ChartBump(_sphere_point(s2, pi), 0.5),
         ChartBump(_p(s2), 0.3), LevelBump(1.5, 0.4)),
        _cot)
    s3 = SpaceForm(3, 2.0)
    add("sphere3_dp", s3, Point(_p(s3)), Everything(), CurvatureDim(2.0, 3.0),
        (ChartBump(_sphere_point(s3, 1.2, 0.5), 0.5), ChartBump(_sphere_point(s3, pi), 0.5),
         LevelBump(2.0, 0.5)),
        lambda u: 2.0 * _cot(u))
    e2 = SpaceForm(2, 0.0)
    add("plane_dp", e2, Point((0.0, 0.0)), Ball((0.0, 0.0), 5.0), CurvatureDim(0.0, 2.0),
        (ChartBump((1.0, 0.5), 0.6), ChartBump((0.0, 0.0), 0.5), LevelBump(2.0, 0.5)),
        lambda u: 1.0 / u)
    e3 = SpaceForm(3, 0.0)
    add("space3_dp", e3, Point((0.0, 0.0, 0.0)), Ball((0.0, 0.0, 0.0), 4.0),
        CurvatureDim(0.0, 3.0),
        (ChartBump((1.0, 0.5, -0.5), 0.7), LevelBump(2.0, 0.5)),
        lambda u: 2.0 / u)
    h2 = SpaceForm(2, -1.0)
    add("hyperbolic2_dp", h2, Point(_p(h2)), Ball(_p(h2), 3.0), CurvatureDim(-1.0, 2.0),
        (ChartBump(_sphere_point(h2, 1.0), 0.5), LevelBump(1.5, 0.5)),
        lambda u: 1.0 / np.tanh(u))
    h3 = SpaceForm(3, -2.0)
    add("hyperbolic3_dp", h3, Point(_p(h3)), Ball(_p(h3), 3.0), CurvatureDim(-2.0, 3.0),
        (ChartBump(_sphere_point(h3, 1.0, 0.3), 0.5), LevelBump(1.5, 0.5)),
        lambda u: 2.0 / np.tanh(u))
    cyl = FlatCylinder(2 * pi)
    add("cylinder_dp", cyl, Point((0.0, 0.0)), band(1, -2.0, 2.0, 2), CurvatureDim(0.0, 2.0),
        (ChartBump((pi, 0.0), 0.5), ChartBump((1.0, 0.5), 0.5), ChartBump((0.0, 0.0), 0.4),
         LevelBump(1.0, 0.4)),
        lambda u: 1.0 / u)
    sin1 = WeightedInterval(ClosedForm("sin_pow", 0.0, pi, p=1.0), 2.0, 1.0)
    add("interval_sin_dp", sin1, Point((0.0,)), Everything(), CurvatureDim(1.0, 2.0),
        (ChartBump((1.0,), 0.5), ChartBump((pi,), 0.6), ChartBump((0.0,), 0.5)),
        _cot)
    pw = WeightedInterval(ClosedForm("power", 0.0, 3.0, p=2.0), 3.0, 0.0)
    add("interval_power_dp", pw, Point((0.0,)), Everything(), CurvatureDim(0.0, 3.0),
        (ChartBump((1.5,), 0.5), ChartBump((3.0,), 0.5), ChartBump((0.0,), 0.4)),
        lambda u: 2.0 / u)

    # -- signed distance from a level set ----------------------------------
    add("plane_hyperplane", e2, LevelSet("hyperplane", normal=(1.0, 0.0), extent=3.0),
        Box((-3.0, -3.0), (3.0, 3.0)), CurvatureDim(0.0, 2.0),
        (ChartBump((1.0, 0.0), 0.5), ChartBump((-1.5, 1.0), 0.6), LevelBump(1.5, 0.5)),
        lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    add("sphere_equator", s2, LevelSet("sphere", radius=pi / 2), Everything(),
        CurvatureDim(1.0, 2.0),
        (ChartBump(_sphere_point(s2, 0.8), 0.3), LevelBump(0.7, 0.4), LevelBump(-0.8, 0.5)),
        lambda u: -np.tan(u))
    add("plane_circle", e2, LevelSet("sphere", center=(0.0, 0.0), radius=1.0),
        Ball((0.0, 0.0), 4.0), CurvatureDim(0.0, 2.0),
        (ChartBump((2.0, 0.0), 0.5), LevelBump(-0.5, 0.3), LevelBump(1.5, 0.5)),
        lambda u: 1.0 / (u + 1.0))
    add("hyperbolic_circle", h2, LevelSet("sphere", radius=1.0), Ball(_p(h2), 3.0),
        CurvatureDim(-1.0, 2.0),
        (LevelBump(1.0, 0.4), LevelBump(-0.5, 0.3)),
        lambda u: 1.0 / np.tanh(u + 1.0))
    add("cylinder_generators", cyl, LevelSet("generators", theta0=0.0, extent=2.0),
        band(1, -2.0, 2.0, 2), CurvatureDim(0.0, 2.0),
        (ChartBump((pi / 2, 0.3), 0.5), ChartBump((1.0, -0.5), 0.4),
         ChartBump((-1.2, 0.5), 0.5), ChartBump((3 * pi / 2, 0.0), 0.5)),
        lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    add("interval_sin_level", sin1, LevelSet("point", center=(pi / 2,)), Everything(),
        CurvatureDim(1.0, 2.0),
        (ChartBump((0.6,), 0.4), ChartBump((2.5,), 0.5), ChartBump((3.0,), 0.3)),
        lambda u: -np.tan(u))
    ch = WeightedInterval(ClosedForm("cosh_pow", -2.0, 2.0, p=1.0), 2.0, -1.0)
    add("interval_cosh_level", ch, LevelSet("point", center=(0.0,)), Everything(),
        CurvatureDim(-1.0, 2.0),
        (ChartBump((1.0,), 0.5), ChartBump((-1.5,), 0.6), ChartBump((1.8,), 0.4)),
        np.tanh)

    # -- Busemann functions of lines -----------------------------------------
    add("plane_line", e2, Line(origin=(0.0, 0.0), direction=(1.0, 0.0), extent=3.0),
        Box((-3.0, -3.0), (3.0, 3.0)), CurvatureDim(0.0, 2.0),
        (ChartBump((0.5, 0.5), 1.0), LevelBump(0.0, 1.0)),
        lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    add("cylinder_line", cyl, Line(theta0=0.0), band(1, -2.0, 2.0, 2), CurvatureDim(0.0, 2.0),
        (ChartBump((1.0, 0.0), 0.8), ChartBump((pi, 1.0), 0.6)),
        lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    prod = ProductLine(sin1)
    add("product_line", prod, Line(x0=pi / 2), Box((0.0, -3.0), (pi, 3.0)),
        CurvatureDim(0.0, 3.0),
        (ChartBump((1.5, 0.0), 0.8), ChartBump((0.3, 1.0), 0.5)),
        lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    return out


CATALOG = _entries()
BY_NAME = {e.name: e for e in CATALOG}


def entry(name: str) -> CatalogEntry:
    try:
        return BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown catalog entry {name!r}") from None


def names() -> list:
    return [e.name for e in CATALOG]


def bump_is_nonneg(f: TestFunction) -> bool:
    return isinstance(f, (ChartBump, LevelBump))
