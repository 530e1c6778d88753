"""Distributional Laplacians of distance-type functions, assembled per ray.

Along a ray (parameter t, u = -t, conditional density h) the canonical
representative of the Laplacian of u is the regular density -(log h)'
plus signed atoms at the ray endpoints.  The variants differ only in an
affine rewrite of the regular part and in which endpoint atoms survive:

    kind        regular              atom at a           atom at b
    d_p, d_v    -g                   -h(a)               +h(b)
    abs_d_v     -sgn(u) g            -h(a) if u(a) > 0   -h(b) if u(b) < 0
    d_v_sq      2 (1 - u g)          -2 h(a) u(a)        +2 h(b) u(b)

with g = (log h)' in t and every atom weighted by the ray's q-weight.
Integrals against test functions are evaluated ray by ray with composite
Simpson rules on the support of the test function.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .coefficients import CurvatureDim, s_ratio
from .density_1d import CheckReport
from .model_spaces import FlatCylinder
from .quadrature import composite_gl, fsum
from .ray_disintegration import (Disintegration, RayPoint, TransportRay, ray_intervals,
                                 ray_length_reciprocal_integral, ray_points, ray_profiles,
                                 region_mass)
from .regions import Ball, Everything, Nothing, Region

FIRST_ORDER = ("d_p", "d_v", "busemann", "general")
KINDS = FIRST_ORDER + ("abs_d_v", "d_v_sq", "d_p_sq")
ON_LEVEL_SET = 1e-12  # |u| below this counts as a point of {v = 0}
MERGE_DISTANCE = 1e-9
SUSPENSION_TOL = 1e-6
MIN_PANELS = 4
CHUNK = 256  # rays per batch; fixed so results do not depend on the thread count


def _kind_family(kind: str) -> str:
    if kind in FIRST_ORDER:
        return "first"
    if kind == "abs_d_v":
        return "abs"
    if kind in ("d_v_sq", "d_p_sq"):
        return "square"
    raise ValueError(f"unknown Laplacian kind {kind!r}")


def _coefficients(kind: str, u):
    """(A, B) with regular = A + B g and g = (log h)'."""
    u = np.asarray(u, dtype=float)
    fam = _kind_family(kind)
    if fam == "first":
        return np.zeros_like(u), -np.ones_like(u)
    if fam == "abs":
        return np.zeros_like(u), -np.sign(u)
    return 2.0 * np.ones_like(u), -2.0 * u


def _chain_factor(kind: str, u):
    """psi'(u) for the function psi(u) whose Laplacian the kind represents."""
    u = np.asarray(u, dtype=float)
    fam = _kind_family(kind)
    if fam == "first":
        return np.ones_like(u)
    if fam == "abs":
        return np.sign(u)
    return 2.0 * u


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class Atom:
    """A per-ray endpoint atom (already multiplied by the q-weight)."""

    ray: int
    end: str
    location: tuple
    mass: float


@dataclass(frozen=True, eq=False)
class DistributionalLaplacian:
    """Regular density plus endpoint atoms of Delta psi(u).

    ``regular(ray, t)`` evaluates the density of the absolutely continuous
    part at a point on a ray; ``atoms`` lists (location, mass) pairs
    aggregated over coincident endpoints and restricted to ``window``.
    """

    dis: Disintegration
    kind: str
    window: Region
    atoms_raw: tuple = field(repr=False)

    def _ray(self, ray) -> TransportRay:
        return ray if isinstance(ray, TransportRay) else self.dis.rays[int(ray)]

    def _guard(self, t):
        if self.kind in ("d_v", "abs_d_v") and np.any(np.abs(np.asarray(t)) <= ON_LEVEL_SET):
            raise ValueError("evaluation requested on {v = 0}")

    def regular(self, ray, t):
        r = self._ray(ray)
        t = np.asarray(t, dtype=float)
        self._guard(t)
        A, B = _coefficients(self.kind, -t)
        return A + B * np.asarray(r.density.log_deriv(t))

    def regular_at(self, x: RayPoint) -> float:
        return float(self.regular(x.ray, x.t))

    def regular_h(self, ray, t):
        """regular * h, written with h' so it stays finite where h vanishes."""
        r = self._ray(ray)
        t = np.asarray(t, dtype=float)
        A, B = _coefficients(self.kind, -t)
        return A * np.asarray(r.density.value(t)) + B * np.asarray(r.density.deriv(t))

    def regular_h_batch(self, rays, T, h, dh):
        A, B = _coefficients(self.kind, -np.asarray(T))
        return A * h + B * dh

    @property
    def atoms(self) -> list:
        return aggregate_atoms(self.atoms_raw)

    def singular_mass(self) -> float:
        return fsum([a.mass for a in self.atoms_raw])

    def singular_tv(self, window: Region | None = None) -> float:
        atoms = self.atoms_raw
        if window is not None:
            atoms = [a for a in atoms
                     if bool(window.contains(self.dis.space, np.asarray(a.location)))]
        return fsum([abs(m) for _, m in aggregate_atoms(atoms)])

    def regular_samples(self, samples: int = 64) -> dict:
        """Regular part at midpoint nodes of every active ray's window clip."""
        rays = self.dis.active()
        if not rays:
            return {k: np.empty(0) for k in ("ray", "t", "u", "value", "point")}
        clips = np.array([r.clip for r in rays])
        frac = (np.arange(samples) + 0.5) / samples
        T = clips[:, :1] + (clips[:, 1:] - clips[:, :1]) * frac
        keep = np.ones(T.shape, dtype=bool)
        if self.kind in ("d_v", "abs_d_v"):
            keep = np.abs(T) > ON_LEVEL_SET
        vals = np.empty_like(T)
        for i, r in enumerate(rays):
            vals[i] = self.regular(r, np.where(keep[i], T[i], 1.0))
        pts, _ = ray_points(self.dis, rays, T)
        idx = np.repeat([r.index for r in rays], samples).reshape(T.shape)
        return {"ray": idx[keep], "t": T[keep], "u": -T[keep], "value": vals[keep],
                "point": pts[keep]}

    def decomposition(self, panels: int = 8) -> dict:
        """Masses of the positive and negative regular parts and of the atoms."""
        plus, minus = [], []
        for r in self.dis.active():
            t0, t1 = r.clip

            def pos(s, r=r):
                return np.maximum(self.regular_h(r, s), 0.0)

            def neg(s, r=r):
                return np.minimum(self.regular_h(r, s), 0.0)

            plus.append(r.weight * float(composite_gl(pos, np.array(t0), np.array(t1), panels)))
            minus.append(r.weight * float(composite_gl(neg, np.array(t0), np.array(t1), panels)))
        masses = [a.mass for a in self.atoms_raw]
        return {"reg_plus": fsum(plus), "reg_minus": fsum(minus), "sing": fsum(masses),
                "sing_tv": self.singular_tv()}

    def describe(self) -> dict:
        return {"kind": self.kind, "window": self.window.describe(),
                "representative": "canonical ray representative (regular density + endpoint atoms)",
                "atoms": len(self.atoms_raw)}


def aggregate_atoms(atoms) -> list:
    """Merge atoms whose locations lie within MERGE_DISTANCE; masses add."""
    atoms = list(atoms)
    if not atoms:
        return []
    pts = np.array([np.atleast_1d(a.location) for a in atoms], dtype=float)
    pairs = cKDTree(pts).query_pairs(MERGE_DISTANCE, p=np.inf, output_type="ndarray")
    n = len(atoms)
    if len(pairs):
        from scipy.sparse import coo_matrix
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
    else:
        labels = np.arange(n)
    out = {}
    for i, lab in enumerate(labels):
        out.setdefault(int(lab), []).append(i)
    merged = []
    for members in sorted(out.values(), key=lambda m: m[0]):
        loc = tuple(float(v) for v in pts[members[0]])
        merged.append((loc, fsum([atoms[i].mass for i in members])))
    return merged


# --------------------------------------------------------------------------
# construction


def _endpoint_atoms(dis: Disintegration, kind: str, window: Region) -> tuple:
    fam = _kind_family(kind)
    out = []
    for end in ("a", "b"):
        rays = [r for r in dis.rays if (r.has_a if end == "a" else r.has_b)]
        if not rays:
            continue
        T = np.array([[r.t_start if end == "a" else r.t_end] for r in rays])
        h = ray_profiles(dis, rays, T)[0][:, 0]
        pts = ray_points(dis, rays, T)[0][:, 0, :]
        u = -T[:, 0]
        w = np.array([r.weight for r in rays])
        if fam == "first":
            mass = -h if end == "a" else h
            keep = np.ones(len(rays), dtype=bool)
        elif fam == "abs":
            mass = -h
            keep = u > 0 if end == "a" else u < 0
        else:
            mass = (-2.0 if end == "a" else 2.0) * h * u
            keep = np.ones(len(rays), dtype=bool)
        if kind in ("d_v", "abs_d_v"):
            keep &= np.abs(u) > ON_LEVEL_SET  # endpoints on {v = 0} are out of scope
        keep &= np.asarray(window.contains(dis.space, pts), dtype=bool)
        for i in np.nonzero(keep)[0]:
            out.append(Atom(rays[i].index, end, tuple(float(v) for v in pts[i]),
                            float(w[i] * mass[i])))
    out.sort(key=lambda a: (a.ray, a.end))
    return tuple(out)


def _build(dis: Disintegration, kind: str, window: Region | None) -> DistributionalLaplacian:
    window = window if window is not None else dis.window
    return DistributionalLaplacian(dis, kind, window, _endpoint_atoms(dis, kind, window))


def laplacian_general(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    """Delta u for a 1-Lipschitz u whose rays have integrable reciprocal length."""
    inv = ray_length_reciprocal_integral(dis)
    if inv.infinite:
        raise ValueError("the reciprocal ray length is not q-integrable (refining "
                         "quadratures of int 1/|X_alpha| dq keep growing); the "
                         "representation needs long rays")
    kind = {"point": "d_p", "level": "d_v", "line": "busemann"}.get(dis.variant, "general")
    return _build(dis, kind, window)


def laplacian_dp(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "point":
        raise ValueError("d_p needs a point base")
    return _build(dis, "d_p", window)


def laplacian_dv(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "level":
        raise ValueError("d_v needs a level-set base")
    return _build(dis, "d_v", window)


def laplacian_abs_dv(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "level":
        raise ValueError("|d_v| needs a level-set base")
    return _build(dis, "abs_d_v", window)


def laplacian_dv_squared(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "level":
        raise ValueError("d_v^2 needs a level-set base")
    return _build(dis, "d_v_sq", window)


def laplacian_dp_squared(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "point":
        raise ValueError("d_p^2 needs a point base")
    return _build(dis, "d_p_sq", window)


def laplacian_busemann(dis: Disintegration, window: Region | None = None) -> DistributionalLaplacian:
    if dis.variant != "line":
        raise ValueError("Busemann Laplacians need a line base")
    return _build(dis, "busemann", window)


# --------------------------------------------------------------------------
# comparison bounds


def endpoint_distances(ray: TransportRay, t):
    """(d(x, a), d(x, b)) along a ray; +inf for a missing endpoint."""
    t = np.asarray(t, dtype=float)
    return t - ray.t_start, ray.t_end - t


def log_derivative_window(ray: TransportRay, t, kd: CurvatureDim):
    """Bounds on (log h)' in t forced by MCP(K, N): [-(N-1) R(d_b), (N-1) R(d_a)]."""
    da, db = endpoint_distances(ray, t)
    k = kd.kappa
    return -(kd.N - 1) * np.asarray(s_ratio(k, db)), (kd.N - 1) * np.asarray(s_ratio(k, da))


def comparison_bounds(kind: str, ray: TransportRay, t, kd: CurvatureDim):
    """(lower, upper) bounds on the regular part at ray points."""
    t = np.asarray(t, dtype=float)
    glo, ghi = log_derivative_window(ray, t, kd)
    A, B = _coefficients(kind, -t)
    x, y = A + B * glo, A + B * ghi
    return np.minimum(x, y), np.maximum(x, y)


_VARIANT_KINDS = {
    "d_p": ("d_p",),
    "d_v": ("d_v", "busemann"),
    "busemann": ("busemann",),
    "abs_d_v": ("abs_d_v",),
    "d_v_sq": ("d_v_sq", "d_p_sq"),
    "d_p_sq": ("d_p_sq",),
}


def _positive_atoms_allowed(kind: str, atom: Atom, dis: Disintegration) -> bool:
    """Atoms that the upper bound itself carries (b-endpoints in {v < 0} for d_v)."""
    if kind in ("d_v", "busemann") and atom.end == "b":
        return -dis.rays[atom.ray].t_end < 0
    return False


def comparison_check(lap: DistributionalLaplacian, kd: CurvatureDim, variant: str | None = None,
                     samples: int = 64, tolerance: float = 1e-6) -> CheckReport:
    """Upper bound on the full Laplacian and lower bound on its regular part.

    Margins are relative: (bound - value) / max(|bound|, 1).  Atoms must be
    non-positive unless the bound carries them.
    """
    variant = variant or lap.kind
    if variant not in _VARIANT_KINDS or lap.kind not in _VARIANT_KINDS[variant]:
        raise ValueError(f"variant mismatch: {variant!r} check on a {lap.kind!r} Laplacian")
    worst = {"upper": (math.inf, None), "lower": (math.inf, None), "atoms": (math.inf, None)}
    count = 0
    for r in lap.dis.active():
        t0, t1 = r.clip
        t = t0 + (t1 - t0) * (np.arange(samples) + 0.5) / samples
        if lap.kind in ("d_v", "abs_d_v"):
            t = t[np.abs(t) > ON_LEVEL_SET]
        if t.size == 0:
            continue
        count += t.size
        val = np.asarray(lap.regular(r, t), dtype=float)
        lo, hi = comparison_bounds(lap.kind, r, t, kd)
        with np.errstate(invalid="ignore"):
            up = np.where(np.isposinf(hi), np.inf, (hi - val) / np.maximum(np.abs(hi), 1.0))
            dn = np.where(np.isneginf(lo), np.inf, (val - lo) / np.maximum(np.abs(lo), 1.0))
        for side, m in (("upper", up), ("lower", dn)):
            m = np.where(np.isnan(m), -np.inf, m)
            j = int(np.argmin(m))
            if m[j] < worst[side][0]:
                worst[side] = (float(m[j]), {"ray": r.index, "t": float(t[j]), "u": float(-t[j]),
                                             "value": float(val[j]),
                                             "bound": float(hi[j] if side == "upper" else lo[j])})
    for a in lap.atoms_raw:
        if _positive_atoms_allowed(lap.kind, a, lap.dis):
            continue
        m = -a.mass
        if m < worst["atoms"][0]:
            worst["atoms"] = (m, {"ray": a.ray, "end": a.end, "location": list(a.location),
                                  "mass": a.mass})
    overall = min(worst.values(), key=lambda w: w[0])
    return CheckReport(
        f"comparison[{variant}]", overall[0], tolerance,
        witness=overall[1] or {},
        grid_spec=f"{samples} midpoints per active ray, {count} points",
        details={"upper_worst": worst["upper"][0], "lower_worst": worst["lower"][0],
                 "atoms_worst": worst["atoms"][0], "K": kd.K, "N": kd.N,
                 "note": "canonical representative; satisfies the weak Laplacian "
                         "inequality by construction"})


# --------------------------------------------------------------------------
# nu


@dataclass(frozen=True, eq=False)
class NuMeasure:
    """The absolutely continuous comparison measure for Delta d_v^2."""

    dis: Disintegration
    kd: CurvatureDim
    case_tag: str
    suspension_poles: tuple | None = None
    atoms_raw: tuple = ()

    @property
    def kind(self) -> str:
        return "nu"

    @property
    def window(self) -> Region:
        return self.dis.window

    def density(self, ray, t):
        r = ray if isinstance(ray, TransportRay) else self.dis.rays[int(ray)]
        t = np.asarray(t, dtype=float)
        da, db = endpoint_distances(r, t)
        return _nu_density(self.kd, t, da, db)

    def regular_h(self, ray, t):
        r = ray if isinstance(ray, TransportRay) else self.dis.rays[int(ray)]
        return self.density(r, t) * np.asarray(r.density.value(t))

    def regular_h_batch(self, rays, T, h, dh):
        ts = np.array([[r.t_start] for r in rays])
        te = np.array([[r.t_end] for r in rays])
        return _nu_density(self.kd, T, T - ts, te - T) * h

    def describe(self) -> dict:
        return {"kind": "nu", "case": self.case_tag,
                "poles": None if self.suspension_poles is None
                else [list(p) for p in self.suspension_poles]}


def _nu_density(kd: CurvatureDim, t, da, db):
    """2 (1 + |u| (N-1) R(d)), d = d_b on {u >= 0} and d_a on {u < 0}."""
    u = -np.asarray(t, dtype=float)
    d = np.where(u >= 0, db, da)
    d = np.where(u == 0, 1.0, d)  # the |u| factor kills the ratio on {u = 0}
    with np.errstate(invalid="ignore", divide="ignore"):
        term = np.where(u == 0, 0.0, np.abs(u) * (kd.N - 1) * np.asarray(s_ratio(kd.kappa, d)))
    return 2.0 * (1.0 + term)


def nu_measure(dis: Disintegration, kd: CurvatureDim) -> NuMeasure:
    """nu with the flat-limit conventions for missing endpoints."""
    if kd.K == 0:
        return NuMeasure(dis, kd, "K_zero")
    if kd.K < 0:
        return NuMeasure(dis, kd, "K_neg")
    lengths = np.array([r.length for r in dis.rays])
    if abs(np.max(lengths) - kd.diameter) <= SUSPENSION_TOL:
        a = np.array([r.endpoint_a for r in dis.rays])
        b = np.array([r.endpoint_b for r in dis.rays])
        poles = (tuple(float(v) for v in a[0]), tuple(float(v) for v in b[0]))
        if np.max(np.abs(a - a[0])) > 1e-6 or np.max(np.abs(b - b[0])) > 1e-6:
            poles = None
        return NuMeasure(dis, kd, "K_pos_suspension", poles)
    return NuMeasure(dis, kd, "K_pos_bounded")


# --------------------------------------------------------------------------
# test functions


def _phi(s):
    """(1 - s)^4_+ and its derivative: a C^3 profile in s = |x - c|^2 / rho^2."""
    s = np.asarray(s, dtype=float)
    w = np.clip(1.0 - s, 0.0, None)
    return w ** 4, -4.0 * w ** 3


class _Support(Region):
    def __init__(self, fn):
        self.fn = fn

    def signed(self, space, pts):
        return self.fn(space, pts)

    def describe(self):
        return {"kind": "test-function support"}


class TestFunction:
    """A compactly supported Lipschitz test function on a disintegrated space."""

    name = "test function"

    def values(self, dis: Disintegration, pts):
        raise NotImplementedError

    def along(self, ray: TransportRay, t):
        """(f, d/dt f) at gamma(t)."""
        t = np.asarray(t, dtype=float)
        return self.along_batch(ray.family.space, ray.point(t), ray.velocity(t), t)

    def along_batch(self, space, pts, vel, t):
        """(f, d/dt f) from points, flow velocities and ray parameters."""
        raise NotImplementedError

    def support(self, dis: Disintegration) -> Region:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class ZeroFunction(TestFunction):
    name = "zero"

    def values(self, dis, pts):
        return np.zeros(np.shape(pts)[:-1])

    def along_batch(self, space, pts, vel, t):
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t), np.zeros_like(t)

    def support(self, dis):
        return Nothing()


def _displacement(space, pts, center):
    d = np.asarray(pts, dtype=float) - np.asarray(center, dtype=float)
    if isinstance(space, FlatCylinder):
        d = d.copy()
        d[..., 0] = np.mod(d[..., 0] + space.L / 2, space.L) - space.L / 2
    return d


@dataclass(frozen=True)
class ChartBump(TestFunction):
    """(1 - |x - c|^2 / rho^2)^4_+ in chart (ambient) coordinates."""

    center: tuple
    radius: float

    @property
    def name(self):
        return f"chart bump at {list(self.center)}, radius {self.radius}"

    def _s(self, space, pts):
        d = _displacement(space, pts, self.center)
        return np.sum(d * d, axis=-1) / self.radius ** 2, d

    def values(self, dis, pts):
        return _phi(self._s(dis.space, pts)[0])[0]

    def along_batch(self, space, pts, vel, t):
        s, d = self._s(space, pts)
        f, df = _phi(s)
        return f, df * 2.0 * np.sum(d * vel, axis=-1) / self.radius ** 2

    def support(self, dis):
        return _Support(lambda space, pts: self._s(space, pts)[0] - 1.0)

    def describe(self):
        return {"name": "chart_bump", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class LevelBump(TestFunction):
    """(1 - (u - u0)^2 / rho^2)^4_+: radial / level-set bumps."""

    u0: float
    radius: float

    @property
    def name(self):
        return f"level bump at u={self.u0}, radius {self.radius}"

    def values(self, dis, pts):
        return _phi(((dis.u_of(pts) - self.u0) / self.radius) ** 2)[0]

    def along_batch(self, space, pts, vel, t):
        u = -np.asarray(t, dtype=float)
        f, df = _phi(((u - self.u0) / self.radius) ** 2)
        # du/dt = -1
        return f, df * (-2.0 * (u - self.u0) / self.radius ** 2)

    def support(self, dis):
        return _Support(lambda space, pts: ((dis.u_of(pts) - self.u0) / self.radius) ** 2 - 1.0)

    def describe(self):
        return {"name": "level_bump", "u0": self.u0, "radius": self.radius}


class LevelFunction(TestFunction):
    """u itself (not compactly supported; used to check the flow derivative)."""

    name = "u"

    def values(self, dis, pts):
        return dis.u_of(pts)

    def along_batch(self, space, pts, vel, t):
        t = np.asarray(t, dtype=float)
        return -t, -np.ones_like(t)

    def support(self, dis):
        return Everything()


@dataclass(frozen=True)
class DirectionalDerivative:
    """f'(x) = lim (f(g_t x) - f(x)) / t along the flow.

    Closed form when the test function provides one; with ``step`` set, a
    central finite difference along the ray instead.
    """

    f: TestFunction
    step: float | None = None

    def __call__(self, dis: Disintegration, ray, t):
        r = ray if isinstance(ray, TransportRay) else dis.rays[int(ray)]
        t = np.asarray(t, dtype=float)
        if self.step is None:
            return self.f.along(r, t)[1]
        h = self.step
        fp = self.f.values(dis, r.point(t + h))
        fm = self.f.values(dis, r.point(t - h))
        return (fp - fm) / (2 * h)


# --------------------------------------------------------------------------
# pairings


def _support_intervals(dis: Disintegration, f: TestFunction):
    """Per active ray: t-intervals where f may be nonzero, inside the clip."""
    active = dis.active()
    if not active:
        return active, []
    alpha = np.array([r.alpha for r in active])
    lo = np.array([-r.clip[1] for r in active])
    hi = np.array([-r.clip[0] for r in active])
    region = f.support(dis)
    if isinstance(region, Nothing):
        return active, [[] for _ in active]
    iv = ray_intervals(dis.family, alpha, lo, hi, region, dis.resolution.max_step)
    return active, [[(-u1, -u0) for u0, u1 in reversed(ivs)] for ivs in iv]


def _is_true_end(ray: TransportRay, t: float) -> bool:
    scale = max(1.0, abs(t))
    if ray.has_a and abs(t - ray.t_start) <= 1e-12 * scale:
        return True
    return ray.has_b and abs(t - ray.t_end) <= 1e-12 * scale


def _check_edges(f: TestFunction, jobs, kind):
    """Support must not touch artificial clip ends (or {v = 0} for d_v kinds)."""
    edges = []
    for r, s0, s1 in jobs:
        for e in (s0, s1):
            if e in r.clip and not _is_true_end(r, e):
                edges.append((r, e))
        if kind in ("d_v", "abs_d_v") and s0 < 0.0 < s1:
            raise ValueError("test function support meets {v = 0}")
        if kind in ("d_v", "abs_d_v") and 0.0 in (s0, s1):
            edges.append((r, 0.0))
    for r, e in edges:
        if f.along(r, np.array([e]))[0][0] > 0:
            if e == 0.0 and kind in ("d_v", "abs_d_v"):
                raise ValueError("test function support meets {v = 0}")
            raise ValueError(f"test function support leaks outside window (ray {r.index}, t={e:.6g})")


def _chunk_terms(measure, f, jobs, n, window, kind):
    dis = measure.dis
    rays = [j[0] for j in jobs]
    s0 = np.array([j[1] for j in jobs])[:, None]
    s1 = np.array([j[2] for j in jobs])[:, None]
    T = s0 + (s1 - s0) * np.linspace(0.0, 1.0, n + 1)[None, :]
    pts, vel = ray_points(dis, rays, T)
    fv, ft = f.along_batch(dis.space, pts, vel, T)
    if not isinstance(window, Everything):
        pos = fv > 0
        if np.any(pos) and not np.all(window.contains(dis.space, pts[pos])):
            raise ValueError("test function support leaks outside window")
    h, dh = ray_profiles(dis, rays, T)
    w = np.array([r.weight for r in rays])
    dt = (s1 - s0)[:, 0] / n
    # composite Simpson (n even)
    simpson = np.ones(n + 1)
    simpson[1:-1:2] = 4.0
    simpson[2:-1:2] = 2.0
    simpson /= 3.0

    def integrate(y):
        # numpy's row reductions depend only on the row data, and chunks are
        # fixed, so these sums do not depend on the thread count
        return list(np.sum(y * simpson, axis=1) * (dt * w))

    pair = integrate(fv * measure.regular_h_batch(rays, T, h, dh))
    ibp = integrate(_chain_factor(kind, -T) * ft * h) if kind is not None else [0.0] * len(jobs)
    return pair, ibp


def _pair_all(measure, f: TestFunction, window: Region | None, per_unit: float | None,
              threads: int, with_ibp: bool):
    dis = measure.dis
    window = window if window is not None else measure.window
    per_unit = per_unit or dis.resolution.per_unit
    kind = measure.kind if with_ibp else None
    active, ivs = _support_intervals(dis, f)
    jobs = [(r, s0, s1) for r, iv in zip(active, ivs) for s0, s1 in iv if s1 > s0]
    _check_edges(f, jobs, measure.kind)
    pair, ibp = [], []
    if jobs:
        longest = max(s1 - s0 for _, s0, s1 in jobs)
        n = max(MIN_PANELS, 2 * int(math.ceil(0.5 * longest * per_unit)))
        chunks = [jobs[i:i + CHUNK] for i in range(0, len(jobs), CHUNK)]

        def run(chunk):
            return _chunk_terms(measure, f, chunk, n, window, kind)

        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(c) for c in chunks]
        for p, q in parts:
            pair.extend(p)
            ibp.extend(q)
    atom_terms = []
    if measure.atoms_raw:
        locs = np.array([a.location for a in measure.atoms_raw], dtype=float)
        vals = np.asarray(f.values(dis, locs), dtype=float)
        atom_terms = [v * a.mass for v, a in zip(vals, measure.atoms_raw) if v != 0.0]
    return fsum(pair) + fsum(atom_terms), fsum(ibp)


def pairing(measure, f: TestFunction, window: Region | None = None,
            per_unit: float | None = None, threads: int = 1) -> float:
    """int f d(measure): regular part by per-ray Simpson rules, atoms exactly."""
    return _pair_all(measure, f, window, per_unit, threads, with_ibp=False)[0]


def ibp_residual(lap: DistributionalLaplacian, dis: Disintegration | None, f: TestFunction,
                 window: Region | None = None, per_unit: float | None = None,
                 threads: int = 1) -> float:
    """|pairing(lap, f) - int psi'(u) f' dm|, the integration-by-parts defect."""
    if dis is not None and dis is not lap.dis:
        raise ValueError("the Laplacian was built from a different disintegration")
    p, q = _pair_all(lap, f, window, per_unit, threads, with_ibp=True)
    return abs(p - q)


def ibp_convergence(lap: DistributionalLaplacian, f: TestFunction, per_units=(32.0, 64.0, 128.0),
                    floor: float = 1e-12, threads: int = 1) -> dict:
    """Residuals on a refinement ladder and the fitted log-log decay slope.

    Residuals at or below ``floor`` are at roundoff level; if the ladder
    reaches it the slope is reported as +inf (converged).
    """
    res = np.array([ibp_residual(lap, None, f, per_unit=p, threads=threads) for p in per_units])
    steps = 1.0 / np.asarray(per_units, dtype=float)
    above = res > floor
    at_floor = bool(res[-1] <= floor or np.count_nonzero(above) < 2)
    if at_floor:
        slope = math.inf
    else:
        slope = float(np.polyfit(np.log(steps[above]), np.log(res[above]), 1)[0])
    return {"per_unit": list(per_units), "residuals": res.tolist(), "slope": slope,
            "at_roundoff_floor": at_floor}


# --------------------------------------------------------------------------
# endpoint vanishing


def endpoint_vanishing_check(dis: Disintegration, p=None, s: float = 2.0, r0: float = 0.5,
                             levels: int = 10, tolerance: float = 1e-9) -> CheckReport:
    """If liminf m(B_r(p)) / r^s < inf for some s > 1, then h(p) = 0 on every ray."""
    if dis.variant != "point":
        raise ValueError("endpoint vanishing needs a point base")
    if not s > 1:
        raise ValueError("s must exceed 1")
    p = np.atleast_1d(np.asarray(dis.base.p if p is None else p, dtype=float))
    rs = r0 * 0.5 ** np.arange(levels)
    masses = []
    for r in rs:
        ball = Ball(tuple(p), float(r))
        try:
            masses.append(dis.space.reference_measure(ball))
        except NotImplementedError:
            masses.append(region_mass(dis, ball))
    ratios = np.asarray(masses) / rs ** s
    growth = ratios[1:] / np.maximum(ratios[:-1], 1e-300)
    diverges = bool(np.all(growth[-3:] >= 1.5))
    series = {"r": rs.tolist(), "ratio": ratios.tolist()}
    if diverges:
        return CheckReport("endpoint_vanishing", 0.0, tolerance,
                           grid_spec=f"dyadic r from {r0}, {levels} levels",
                           details={"status": "hypothesis fails", "s": s, **series})
    hb = [(float(r.density.value(r.t_end)), r.index) for r in dis.rays if r.has_b]
    worst, idx = max(hb) if hb else (0.0, -1)
    return CheckReport("endpoint_vanishing", -worst, tolerance,
                       witness={"ray": idx, "h_at_p": worst},
                       grid_spec=f"dyadic r from {r0}, {levels} levels",
                       details={"status": "hypothesis holds", "s": s,
                                "liminf_estimate": float(np.min(ratios[-3:])), **series})
