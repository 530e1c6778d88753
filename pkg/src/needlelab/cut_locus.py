"""Transport Minkowski content of the cut locus of a point.

For u = d_p every ray runs from its initial point a (on the cut locus)
to p.  T_eps moves each point a fraction eps of the way to p, so on one
ray X \\ T_eps(X) is the initial segment [a, a + eps |X|).  Its measure
is a sum of one-dimensional integrals of the ray densities, which is
how every quantity here is computed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .density_1d import CheckReport
from .laplacian import laplacian_dp_squared
from .quadrature import fsum, gauss_legendre
from .ray_disintegration import Disintegration, ray_intervals, ray_profiles
from .regions import Everything, Region

PANELS = 4
ORDER = 16
DEFAULT_EPS = tuple(2.0 ** -k for k in range(6, 15))
DEFAULT_SLACK = 0.02
DEFAULT_TOL = 1e-8


@dataclass
class MinkowskiSeries:
    """Ratios m((X \\ T_eps X) cap W) / eps along a decreasing eps sequence."""

    eps_values: tuple
    ratios: tuple
    window: dict
    limit_estimate: float
    excluded_q_mass: float = 0.0
    increments: tuple = field(default=())

    def __post_init__(self):
        e = np.asarray(self.eps_values, dtype=float)
        if e.size and (np.any(e <= 0) or np.any(np.diff(e) >= 0)):
            raise ValueError("eps values must be positive and strictly decreasing")
        if np.any(np.asarray(self.ratios, dtype=float) < 0):
            raise ValueError("ratios must be non-negative")

    def to_dict(self) -> dict:
        return {"eps": list(self.eps_values), "ratio": list(self.ratios),
                "window": self.window, "limit_estimate": self.limit_estimate,
                "excluded_q_mass": self.excluded_q_mass,
                "increments": list(self.increments)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "ratio"])
            for e, r in zip(self.eps_values, self.ratios):
                w.writerow([f"{e:.17g}", f"{r:.17g}"])


def richardson(eps, values) -> float:
    """Two-step Richardson limit from the last three values of a dyadic sequence.

    Assumes values(eps) = L + c1 eps + c2 eps^2 + ...; with fewer than three
    values the last one (or the one-step estimate) is returned.
    """
    v = np.asarray(values, dtype=float)
    e = np.asarray(eps, dtype=float)
    if v.size == 0:
        return 0.0
    if v.size == 1:
        return float(v[-1])
    if not np.allclose(e[1:] / e[:-1], 0.5, rtol=1e-12):
        raise ValueError("Richardson extrapolation needs a dyadic eps sequence")
    if v.size == 2:
        return float(2.0 * v[-1] - v[-2])
    r1 = 2.0 * v[-2] - v[-3]
    r2 = 2.0 * v[-1] - v[-2]
    return float((4.0 * r2 - r1) / 3.0)


def _segments_mass(dis: Disintegration, rays, s0, s1, window: Region) -> list:
    """Per ray: q-weight times int of h over [s0_i, s1_i] cap window."""
    if not rays:
        return []
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    alpha = np.array([r.alpha for r in rays])
    ivs = ray_intervals(dis.family, alpha, -s1, -s0, window, dis.resolution.max_step)
    owner, lo, hi = [], [], []
    for i, iv in enumerate(ivs):
        for u0, u1 in iv:
            owner.append(i)
            lo.append(-u1)
            hi.append(-u0)
    out = [0.0] * len(rays)
    if not owner:
        return out
    lo = np.array(lo)[:, None]
    hi = np.array(hi)[:, None]
    x, w = gauss_legendre(ORDER)
    edges = np.linspace(0.0, 1.0, PANELS + 1)
    ref = (edges[:-1, None] + (x[None, :] + 1.0) * 0.5 / PANELS).ravel()
    wref = np.tile(w * 0.5 / PANELS, PANELS)
    T = lo + (hi - lo) * ref[None, :]
    h = ray_profiles(dis, [rays[i] for i in owner], T)[0]
    masses = np.sum(h * wref, axis=1) * (hi - lo)[:, 0]
    parts = {}
    for i, m in zip(owner, masses):
        parts.setdefault(i, []).append(float(m))
    for i, ms in parts.items():
        out[i] = rays[i].weight * fsum(ms)
    return out


def _finite_rays(dis: Disintegration):
    if dis.variant != "point":
        raise ValueError("the cut-locus content is defined for point bases")
    finite = [r for r in dis.rays if r.has_a]
    excluded = fsum([r.weight for r in dis.rays if not r.has_a])
    return finite, excluded


def transport_complement_mass(dis: Disintegration, window: Region | None, eps: float):
    """(m((X \\ T_eps X) cap W), excluded q-mass of rays without initial point)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    window = window if window is not None else dis.window
    rays, excluded = _finite_rays(dis)
    s0 = [r.t_start for r in rays]
    s1 = [r.t_start + eps * r.length for r in rays]
    return fsum(_segments_mass(dis, rays, s0, s1, window)), excluded


def minkowski_ratio(dis: Disintegration, window: Region | None, eps: float) -> float:
    """m((X \\ T_eps X) cap W) / eps; rays without initial point contribute nothing."""
    return transport_complement_mass(dis, window, eps)[0] / eps


def minkowski_series(dis: Disintegration, window: Region | None = None,
                     eps_sequence=DEFAULT_EPS) -> MinkowskiSeries:
    window = window if window is not None else dis.window
    eps = tuple(float(e) for e in eps_sequence)
    vals = [transport_complement_mass(dis, window, e) for e in eps]
    ratios = tuple(m / e for (m, _), e in zip(vals, eps))
    excluded = vals[0][1] if vals else 0.0
    inc = tuple(float(abs(b - a)) for a, b in zip(ratios[:-1], ratios[1:]))
    return MinkowskiSeries(eps, ratios, window.describe(), richardson(eps, ratios),
                           excluded, inc)


def minkowski_vs_singular(dis: Disintegration, window: Region | None = None,
                          eps_sequence=DEFAULT_EPS, slack: float = DEFAULT_SLACK,
                          tolerance: float = DEFAULT_TOL) -> CheckReport:
    """Extrapolated Minkowski ratio against the singular mass of Delta d_p^2 on W.

    Margin: ((1 + slack) TV - limit) / max(TV, 1).
    """
    window = window if window is not None else dis.window
    series = minkowski_series(dis, window, eps_sequence)
    tv = laplacian_dp_squared(dis, window).singular_tv()
    limit = series.limit_estimate
    margin = ((1.0 + slack) * tv - limit) / max(tv, 1.0)
    inc = np.asarray(series.increments)
    monotone = bool(inc.size < 2 or np.all(np.diff(inc[-3:]) <= 0))
    return CheckReport(
        "minkowski_vs_singular", float(margin), tolerance,
        witness={"limit_estimate": limit, "singular_tv": tv},
        grid_spec=f"eps = {list(series.eps_values)}",
        details={"series": series.to_dict(), "slack": slack,
                 "ratio_over_tv": limit / tv if tv > 0 else (0.0 if limit == 0 else math.inf),
                 "increments_shrinking": monotone,
                 "excluded_q_mass": series.excluded_q_mass})


def endpoint_tv_bound(dis: Disintegration, r_sequence=DEFAULT_EPS, tolerance: float = 1e-6) -> CheckReport:
    """||sum h(a) delta_a q|| <= liminf m(U_alpha [a, a + r]) / r.

    The disintegration's window plays the role of the ambient space: each
    ray is cut to its window clip, so where a ray enters the window that point is its
    initial point.  The liminf is estimated by Richardson extrapolation on
    the dyadic r sequence (the raw series is attached).  Margin:
    (liminf - TV) / max(TV, 1).
    """
    rays = dis.active()
    starts = np.array([[r.clip[0]] for r in rays])
    h = ray_profiles(dis, rays, starts)[0][:, 0]
    w = np.array([r.weight for r in rays])
    tv = fsum(np.abs(h) * w)
    rs = tuple(float(r) for r in r_sequence)
    ratios = []
    for r in rs:
        s0 = [ray.clip[0] for ray in rays]
        s1 = [min(ray.clip[0] + r, ray.clip[1]) for ray in rays]
        ratios.append(fsum(_segments_mass(dis, rays, s0, s1, Everything())) / r)
    beta = richardson(rs, ratios)
    margin = (beta - tv) / max(tv, 1.0)
    return CheckReport(
        "endpoint_tv_bound", float(margin), tolerance,
        witness={"tv": tv, "liminf_estimate": beta},
        grid_spec=f"r = {list(rs)}",
        details={"r": list(rs), "ratio": ratios, "window": dis.window.describe(),
                 "initial_points": "window-clip starts"})
