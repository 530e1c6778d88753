"""Transport rays, disintegration, the flow g_t and the maps T_t.

A ray is parametrized by t with u(gamma(t)) = -t, so u decreases along
increasing t.  The ray's initial point a (max of u) sits at t_start and
its final point b (min of u) at t_end; an infinite end means the
endpoint is missing.  Every ray carries its conditional density in t.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import ExtReal
from .density_1d import Density1D, Pullback
from .model_spaces import ModelSpace, PolarFactorization, polar_factorization
from .quadrature import composite_gl, fsum
from .regions import Everything, Region

FORMAT_VERSION = "1.0"


@dataclass(frozen=True)
class Resolution:
    """Grid resolution for disintegrations.

    ``rays``: number of chart grid rays; ``per_unit``: trapezoid panels per
    unit length along rays; ``r_max``: truncation of infinite rays;
    ``max_step``: sampling step for ray/region intersection search.
    """

    rays: int = 4096
    per_unit: float = 256.0
    r_max: float = 50.0
    max_step: float = 0.05
    sampled: int = 0  # >0: store ray densities as grids with this many nodes

    def refined(self, factor: float) -> "Resolution":
        return Resolution(self.rays, self.per_unit * factor, self.r_max, self.max_step, self.sampled)


@dataclass(frozen=True, eq=False)
class TransportRay:
    index: int
    alpha: np.ndarray
    weight: float
    t_start: float
    t_end: float
    density: Density1D
    family: PolarFactorization = field(repr=False)
    clip: tuple | None = None

    @property
    def has_a(self) -> bool:
        return math.isfinite(self.t_start)

    @property
    def has_b(self) -> bool:
        return math.isfinite(self.t_end)

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    def point(self, t):
        """gamma(t), shape t.shape + (dim,)."""
        t = np.asarray(t, dtype=float)
        return self.family.point(self.alpha[None, :], -np.atleast_1d(t)[None, :])[0].reshape(t.shape + (-1,))

    def velocity(self, t):
        """d gamma / dt (the flow direction)."""
        t = np.asarray(t, dtype=float)
        v = self.family.velocity(self.alpha[None, :], -np.atleast_1d(t)[None, :])[0]
        return -v.reshape(t.shape + (-1,))

    @staticmethod
    def u(t):
        return -np.asarray(t, dtype=float)

    @property
    def endpoint_a(self):
        return self.point(self.t_start) if self.has_a else None

    @property
    def endpoint_b(self):
        return self.point(self.t_end) if self.has_b else None


@dataclass(frozen=True)
class RayPoint:
    """A point-on-ray handle."""

    ray: int
    t: float


class RayExhausted(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Disintegration:
    space: ModelSpace
    base: object
    family: PolarFactorization
    rays: tuple
    window: Region
    resolution: Resolution

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.rays])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.rays])

    @property
    def variant(self) -> str:
        return self.family.variant

    def u_of(self, pts):
        return self.family.level(pts)

    def active(self):
        """Rays meeting the window."""
        return [r for r in self.rays if r.clip is not None]

    def handle(self, ray: int, t: float) -> RayPoint:
        r = self.rays[ray]
        if not r.t_start <= t <= r.t_end:
            raise RayExhausted(f"t={t} outside ray {ray} ({r.t_start}, {r.t_end})")
        return RayPoint(ray, float(t))

    def point(self, h: RayPoint):
        return self.rays[h.ray].point(h.t)

    def describe(self) -> dict:
        return {"space": self.space.describe(), "family": self.family.describe(),
                "window": self.window.describe(), "rays": len(self.rays),
                "resolution": dataclasses.asdict(self.resolution)}


# --------------------------------------------------------------------------
# ray / region intersection


def ray_intervals(family: PolarFactorization, alpha, lo, hi, region: Region,
                  max_step: float = 0.05, iters: int = 60):
    """Intervals of u in [lo_i, hi_i] where ray i lies in ``region``.

    Sampling with step <= max_step locates sign changes of the region's
    signed function; each is refined by vectorized bisection.
    """
    alpha = np.asarray(alpha, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(alpha)
    out = [[] for _ in range(n)]
    if isinstance(region, Everything):
        for i in range(n):
            if hi[i] > lo[i]:
                out[i].append((float(lo[i]), float(hi[i])))
        return out
    span = np.max(hi - lo) if n else 0.0
    m = int(min(20000, max(65, math.ceil(span / max_step) + 1)))
    s = np.linspace(0.0, 1.0, m)
    U = lo[:, None] + (hi - lo)[:, None] * s[None, :]
    inside = region.signed(family.space, family.point(alpha, U)) <= 0
    # transitions between consecutive samples
    ti, tj = np.nonzero(inside[:, 1:] != inside[:, :-1])
    a = U[ti, tj].copy()
    b = U[ti, tj + 1].copy()
    ins_a = inside[ti, tj]
    al = alpha[ti]
    for _ in range(iters):
        mid = 0.5 * (a + b)
        ins_m = region.signed(family.space, family.point(al, mid[:, None]))[:, 0] <= 0
        same = ins_m == ins_a
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    cross = 0.5 * (a + b)
    per_ray = {}
    for k, i in enumerate(ti):
        per_ray.setdefault(int(i), []).append(float(cross[k]))
    for i in range(n):
        if hi[i] <= lo[i]:
            continue
        pts = [float(lo[i])] + per_ray.get(i, []) + [float(hi[i])]
        state = bool(inside[i, 0])
        for x0, x1 in zip(pts[:-1], pts[1:]):
            if state and x1 > x0:
                out[i].append((x0, x1))
            state = not state
    return out


def _truncated_range(family, alpha, r_max):
    lo, hi = family.u_range(alpha)
    return np.maximum(lo, -r_max), np.minimum(hi, r_max), lo, hi


# --------------------------------------------------------------------------
# construction


def disintegrate(space: ModelSpace, base, window: Region | None = None,
                 resolution: Resolution | None = None,
                 family: PolarFactorization | None = None) -> Disintegration:
    """Rays, quotient weights and conditional densities of the base's u.

    ``family`` overrides the catalog polar factorization (used for
    engineered ray families).
    """
    window = window or Everything()
    res = resolution or Resolution()
    family = family or polar_factorization(space, base)
    alpha, weights = family.index_grid(res.rays)
    ulo_t, uhi_t, ulo, uhi = _truncated_range(family, alpha, res.r_max)
    inter = ray_intervals(family, alpha, ulo_t, uhi_t, window, res.max_step)
    rays = []
    for i in range(len(alpha)):
        dens_u = family.ray_density(alpha[i])
        dens = Pullback(dens_u, 0.0, -1)
        if res.sampled:
            from .density_1d import GridDensity
            t0 = max(-float(uhi_t[i]), dens.interval.a)
            t1 = min(-float(ulo_t[i]), dens.interval.b)
            grid = np.linspace(t0, t1, res.sampled)
            # nudge the ends off zeros of h so the grid stays positive
            vals = np.asarray(dens.value(grid), dtype=float)
            if vals[0] <= 0:
                grid[0] = grid[0] + 1e-9 * (t1 - t0)
            if vals[-1] <= 0:
                grid[-1] = grid[-1] - 1e-9 * (t1 - t0)
            grid = np.linspace(grid[0], grid[-1], res.sampled)
            dens = GridDensity(grid, dens.value(grid))
        clip = None
        if inter[i]:
            u0 = min(x for x, _ in inter[i])
            u1 = max(y for _, y in inter[i])
            clip = (-u1, -u0)
        rays.append(TransportRay(i, alpha[i].copy(), float(weights[i]),
                                 -float(uhi[i]), -float(ulo[i]), dens, family, clip))
    if all(r.clip is None for r in rays):
        raise ValueError("empty window: no ray meets it")
    return Disintegration(space, base, family, tuple(rays), window, res)


# --------------------------------------------------------------------------
# flows


def flow_g(dis: Disintegration, x: RayPoint, t: float) -> RayPoint:
    """g_t(x): move by t along the ray, so u drops by exactly t."""
    r = dis.rays[x.ray]
    s = x.t + t
    if not r.t_start <= s <= r.t_end:
        raise RayExhausted(f"ray exhausted: {s} outside ({r.t_start}, {r.t_end})")
    return RayPoint(x.ray, s)


def transport_map_T(dis: Disintegration, x: RayPoint, t: float) -> RayPoint:
    """T_t(x): the point a fraction t of the way from x to p along its ray."""
    if dis.variant != "point":
        raise ValueError("T_t is defined for point bases")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if x.t == 0.0:
        raise ValueError("x must differ from p")
    return RayPoint(x.ray, (1.0 - t) * x.t)


# --------------------------------------------------------------------------
# mass and reciprocal length


def ray_mass(ray: TransportRay, intervals_t, panels: int = 8) -> float:
    """int of h over a list of t-intervals on one ray (Gauss-Legendre)."""
    total = []
    for t0, t1 in intervals_t:
        if t1 <= t0:
            continue
        total.append(float(composite_gl(lambda s: np.asarray(ray.density.value(s)),
                                        np.array(t0), np.array(t1), panels=panels)))
    return fsum(total)


def region_mass(dis: Disintegration, region: Region) -> float:
    """sum_alpha q_alpha m_alpha(region), with m_alpha = h_alpha dt on ray alpha."""
    fam, res = dis.family, dis.resolution
    alpha = dis.alphas
    ulo_t, uhi_t, _, _ = _truncated_range(fam, alpha, res.r_max)
    inter = ray_intervals(fam, alpha, ulo_t, uhi_t, region, res.max_step)
    parts = []
    for r, ivs in zip(dis.rays, inter):
        if ivs:
            parts.append(r.weight * ray_mass(r, [(-u1, -u0) for u0, u1 in ivs]))
    return fsum(parts)


def verify_mass(dis: Disintegration, test_sets) -> float:
    """max relative error of the disintegrated mass against the space's oracle."""
    worst = 0.0
    for region in test_sets:
        oracle = dis.space.reference_measure(region)
        if oracle == 0.0:
            got = region_mass(dis, region) if not _is_nothing(region) else 0.0
            worst = max(worst, abs(got))
            continue
        got = region_mass(dis, region)
        worst = max(worst, abs(got - oracle) / oracle)
    return worst


def _is_nothing(region) -> bool:
    from .regions import Nothing
    return isinstance(region, Nothing)


def reciprocal_length_integral(lengths_at, n0: int = 64, levels: int = 9,
                               stall: float = 0.9) -> ExtReal:
    """int 1/|X_alpha| dq on refining chart grids, with divergence detection.

    ``lengths_at(n)`` returns ray lengths and quotient weights on an n-ray
    grid.  Successive increments that stop shrinking (ratio >= ``stall``
    twice in a row) flag divergence; otherwise the last value is returned
    with a geometric tail correction.
    """
    values = []
    for k in range(levels):
        lengths, w = lengths_at(n0 * 2 ** k)
        with np.errstate(divide="ignore"):
            inv = np.where(np.isinf(lengths), 0.0, 1.0 / np.asarray(lengths, dtype=float))
        if not np.all(np.isfinite(inv)):
            return ExtReal.inf()
        values.append(fsum(inv * w))
    inc = np.abs(np.diff(values))
    scale = max(1.0, abs(values[-1]))
    if inc[-1] <= 1e-12 * scale:
        return ExtReal(values[-1])
    ratios = inc[1:] / np.maximum(inc[:-1], 1e-300)
    if ratios[-1] >= stall and ratios[-2] >= stall:
        return ExtReal.inf()
    r = ratios[-1]
    return ExtReal(values[-1] + math.copysign(inc[-1], values[-1] - values[-2]) * r / (1 - r))


def ray_length_reciprocal_integral(dis: Disintegration) -> ExtReal:
    fam = dis.family

    def lengths_at(n):
        alpha, w = fam.index_grid(n)
        lo, hi = fam.u_range(alpha)
        return hi - lo, w

    if len(fam.index_grid(2)[0]) == len(fam.index_grid(4)[0]):
        # finite quotient: nothing to refine
        lengths, w = lengths_at(1)
        with np.errstate(divide="ignore"):
            inv = np.where(np.isinf(lengths), 0.0, 1.0 / lengths)
        return ExtReal(fsum(inv * w))
    return reciprocal_length_integral(lengths_at)


# --------------------------------------------------------------------------
# export


def export_rays(dis: Disintegration, path, samples: int = 33) -> None:
    """Columnar text dump: ray, alpha..., q_weight, t, u, h, endpoint flags."""
    k = dis.alphas.shape[1]
    header = (["ray"] + [f"alpha{j}" for j in range(k)]
              + ["q_weight", "t", "u", "h", "has_a", "has_b"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# needlelab ray export, format_version={FORMAT_VERSION}\n")
        fh.write("# quotient: probability weights on a deterministic chart grid; "
                 f"scale={dis.family.scale!r}\n")
        fh.write(",".join(header) + "\n")
        for r in dis.rays:
            if r.clip is None:
                continue
            ts = np.linspace(r.clip[0], r.clip[1], samples)
            hs = np.asarray(r.density.value(ts))
            for t, h in zip(ts, hs):
                row = ([str(r.index)] + [f"{a:.17g}" for a in r.alpha]
                       + [f"{r.weight:.17g}", f"{t:.17g}", f"{-t:.17g}", f"{h:.17g}",
                          str(int(r.has_a)), str(int(r.has_b))])
                fh.write(",".join(row) + "\n")


# --------------------------------------------------------------------------
# batched ray profiles


def ray_profiles(dis: Disintegration, rays, T):
    """h and dh/dt at parameters ``T`` (shape (len(rays), m)) on ``rays``.

    Uses the family's vectorized Jacobian when the rays carry closed-form
    densities, else evaluates each ray's density.
    """
    T = np.asarray(T, dtype=float)
    fam = dis.family
    if not dis.resolution.sampled and len(rays):
        alpha = np.array([r.alpha for r in rays])
        try:
            J = np.asarray(fam.jacobian(alpha, -T), dtype=float)
            Ju = np.asarray(fam.jacobian_du(alpha, -T), dtype=float)
        except NotImplementedError:
            pass
        else:
            shape = np.broadcast_shapes(J.shape, T.shape)
            return (np.broadcast_to(fam.scale * J, shape),
                    np.broadcast_to(-fam.scale * Ju, shape))
    h = np.empty_like(T)
    dh = np.empty_like(T)
    for i, r in enumerate(rays):
        h[i] = r.density.value(T[i])
        dh[i] = r.density.deriv(T[i])
    return h, dh


def ray_points(dis: Disintegration, rays, T):
    """gamma(t) and d gamma/dt for a batch of rays, shape (len(rays), m, dim)."""
    alpha = np.array([r.alpha for r in rays])
    U = -np.asarray(T, dtype=float)
    return dis.family.point(alpha, U), -dis.family.velocity(alpha, U)
