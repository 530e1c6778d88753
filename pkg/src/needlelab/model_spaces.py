"""Catalog of model metric measure spaces and their ray factorizations.

Every space has a closed-form distance and reference measure.  For each
supported base (a point, a level set, a line) :func:`polar_factorization`
returns the family of transport rays of the generating distance-type
function u, written in the coordinate u itself: ray alpha is
``u -> point(alpha, u)``, unit speed, with Jacobian ``J_alpha(u)``, so that

    m(B) = scale * sum_alpha q_alpha * int_{point(alpha, u) in B} J_alpha(u) du.

The quotient weights q_alpha form a probability vector on a deterministic
chart grid; ``scale`` carries the remaining normalization (for space forms
the area of the unit sphere S^{N-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .coefficients import CurvatureDim, s_kappa, s_kappa_prime
from .density_1d import (ClosedForm, Density1D, Pullback, Restricted, Scaled)
from .quadrature import gauss_legendre
from .regions import Annulus, Ball, Box, Everything, HalfSpace, Nothing, Region

UNIT_SPHERE_AREA = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


# --------------------------------------------------------------------------
# spaces


class ModelSpace:
    kind: str
    N: float
    K: float
    chart_dim: int

    @property
    def curvature(self) -> CurvatureDim:
        return CurvatureDim(self.K, self.N)

    def distance(self, x, y):
        raise NotImplementedError

    def reference_measure(self, region: Region) -> float:
        raise NotImplementedError(f"no measure oracle for {region!r} on {self.kind}")

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.N, "K": self.K}


def _arr(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class SpaceForm(ModelSpace):
    """Simply connected constant-curvature space of dimension N in {2, 3}.

    Points are ambient coordinates: the sphere of radius R = sqrt((N-1)/K)
    in R^{N+1}, flat R^N, or the upper hyperboloid -x_{N+1}^2 + |x|^2 = -R^2.
    """

    N: int
    K: float
    kind: str = field(default="SpaceForm", init=False)

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ValueError("SpaceForm point geometry is implemented for N in {2, 3}")

    @property
    def chart_dim(self) -> int:
        return self.N if self.K == 0 else self.N + 1

    @property
    def kappa(self) -> float:
        return self.K / (self.N - 1)

    @property
    def R(self) -> float:
        return math.inf if self.K == 0 else math.sqrt((self.N - 1) / abs(self.K))

    @property
    def diameter(self) -> float:
        return math.pi * self.R if self.K > 0 else math.inf

    @property
    def eta(self) -> np.ndarray:
        e = np.ones(self.chart_dim)
        if self.K < 0:
            e[-1] = -1.0
        return e

    def inner(self, x, y):
        return np.sum(self.eta * _arr(x) * _arr(y), axis=-1)

    def default_point(self) -> np.ndarray:
        p = np.zeros(self.chart_dim)
        if self.K != 0:
            p[-1] = self.R
        return p

    def antipode(self, p):
        if self.K <= 0:
            raise ValueError("only spheres have antipodes")
        return -_arr(p)

    def validate(self, x):
        x = _arr(x)
        if x.shape[-1] != self.chart_dim:
            raise ValueError(f"points need {self.chart_dim} coordinates")
        if self.K != 0:
            err = np.abs(self.inner(x, x) - math.copysign(self.R ** 2, self.K))
            if np.any(err > 1e-8 * np.maximum(self.R ** 2, np.sum(x * x, axis=-1))) or (self.K < 0 and np.any(x[..., -1] <= 0)):
                raise ValueError("out-of-chart point")
        return x

    def distance(self, x, y):
        x, y = self.validate(x), self.validate(y)
        if self.K == 0:
            return np.linalg.norm(x - y, axis=-1)
        R = self.R
        if self.K > 0:
            c = np.linalg.norm(x - y, axis=-1) / (2 * R)
            s = np.linalg.norm(x + y, axis=-1) / (2 * R)
            near = 2 * np.arcsin(np.minimum(c, 1.0))
            far = math.pi - 2 * np.arcsin(np.minimum(s, 1.0))
            return R * np.where(c <= s, near, far)
        dz = x - y
        c2 = np.maximum(self.inner(dz, dz), 0.0)
        return 2 * R * np.arcsinh(np.sqrt(c2) / (2 * R))

    def tangent_basis(self, p) -> np.ndarray:
        """Orthonormal basis (rows) of the tangent space at p."""
        p = self.validate(p)
        vecs = []
        for v in np.eye(self.chart_dim):
            if self.K != 0:
                v = v - self.inner(v, p) / self.inner(p, p) * p
            for w in vecs:
                v = v - self.inner(v, w) * w
            nrm2 = self.inner(v, v)
            if nrm2 > 1e-10:
                vecs.append(v / math.sqrt(nrm2))
            if len(vecs) == self.N:
                break
        return np.array(vecs)

    def geodesic(self, p, e, t):
        """exp_p(t e) for unit tangent e; broadcasting over leading axes."""
        p, e, t = _arr(p), _arr(e), _arr(t)[..., None]
        if self.K == 0:
            return p + t * e
        R = self.R
        if self.K > 0:
            return np.cos(t / R) * p + R * np.sin(t / R) * e
        return np.cosh(t / R) * p + R * np.sinh(t / R) * e

    def geodesic_velocity(self, p, e, t):
        p, e, t = _arr(p), _arr(e), _arr(t)[..., None]
        if self.K == 0:
            return np.broadcast_to(e, np.broadcast_shapes(p.shape, e.shape, t.shape)).copy()
        R = self.R
        if self.K > 0:
            return -np.sin(t / R) / R * p + np.cos(t / R) * e
        return np.sinh(t / R) / R * p + np.cosh(t / R) * e

    def ball_volume(self, r: float) -> float:
        """Closed-form volume of a metric ball of radius r."""
        r = min(r, self.diameter)
        R = self.R
        if self.N == 2:
            if self.K == 0:
                return math.pi * r * r
            if self.K > 0:
                return 2 * math.pi * R * R * (1 - math.cos(r / R))
            return 2 * math.pi * R * R * (math.cosh(r / R) - 1)
        if self.K == 0:
            return 4.0 / 3.0 * math.pi * r ** 3
        if self.K > 0:
            return math.pi * R ** 3 * (2 * r / R - math.sin(2 * r / R))
        return math.pi * R ** 3 * (math.sinh(2 * r / R) - 2 * r / R)

    def reference_measure(self, region: Region) -> float:
        if isinstance(region, Nothing):
            return 0.0
        if isinstance(region, Everything):
            return self.ball_volume(self.diameter) if self.K > 0 else math.inf
        if isinstance(region, Ball):
            self.validate(region.center)
            return self.ball_volume(region.radius)
        if isinstance(region, Annulus):
            self.validate(region.center)
            return self.ball_volume(region.r1) - self.ball_volume(region.r0)
        if isinstance(region, HalfSpace) and self.K > 0 and region.offset == 0.0:
            return 0.5 * self.ball_volume(self.diameter)
        if isinstance(region, Box) and self.K == 0:
            lengths = np.asarray(region.hi) - np.asarray(region.lo)
            return float(np.prod(lengths))
        return super().reference_measure(region)

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.N, "K": self.K}


@dataclass(frozen=True, eq=False)
class FlatCylinder(ModelSpace):
    """S^1_L x R with chart (theta, z), theta taken mod L."""

    L: float = 2 * math.pi
    kind: str = field(default="FlatCylinder", init=False)
    N: float = field(default=2, init=False)
    K: float = field(default=0.0, init=False)
    chart_dim: int = field(default=2, init=False)

    def wrap(self, theta):
        return np.mod(theta, self.L)

    def distance(self, x, y):
        x, y = _arr(x), _arr(y)
        d = np.mod(x[..., 0] - y[..., 0], self.L)
        w = np.minimum(d, self.L - d)
        return np.hypot(w, x[..., 1] - y[..., 1])

    def ball_volume(self, r: float) -> float:
        h = self.L / 2
        if r <= h:
            return math.pi * r * r
        return 2 * (h * math.sqrt(r * r - h * h) + r * r * math.asin(h / r))

    def reference_measure(self, region: Region) -> float:
        if isinstance(region, Nothing):
            return 0.0
        if isinstance(region, Ball):
            return self.ball_volume(region.radius)
        if isinstance(region, Annulus):
            return self.ball_volume(region.r1) - self.ball_volume(region.r0)
        if isinstance(region, Box):
            dtheta = min(region.hi[0] - region.lo[0], self.L)
            return float(dtheta * (region.hi[1] - region.lo[1]))
        return super().reference_measure(region)

    def describe(self) -> dict:
        return {"kind": self.kind, "L": self.L}


@dataclass(frozen=True, eq=False)
class WeightedInterval(ModelSpace):
    """An interval with reference measure w(x) dx, declared to certify CD(K, N)."""

    density: Density1D
    N: float = 2.0
    K: float = 0.0
    kind: str = field(default="WeightedInterval", init=False)
    chart_dim: int = field(default=1, init=False)

    @property
    def a(self) -> float:
        return self.density.interval.a

    @property
    def b(self) -> float:
        return self.density.interval.b

    def distance(self, x, y):
        return np.abs(_arr(x)[..., 0] - _arr(y)[..., 0])

    def _mass(self, lo, hi) -> float:
        lo, hi = max(lo, self.a), min(hi, self.b)
        if not lo < hi:
            return 0.0
        val, _ = integrate.quad(lambda s: float(self.density.value(s)), lo, hi,
                                limit=400, epsabs=1e-14, epsrel=1e-13)
        return val

    def reference_measure(self, region: Region) -> float:
        if isinstance(region, Nothing):
            return 0.0
        if isinstance(region, Everything):
            return self._mass(self.a, self.b)
        if isinstance(region, Box):
            return self._mass(region.lo[0], region.hi[0])
        if isinstance(region, Ball):
            c = region.center[0]
            return self._mass(c - region.radius, c + region.radius)
        if isinstance(region, Annulus):
            c = region.center[0]
            return (self._mass(c - region.r1, c - region.r0)
                    + self._mass(c + region.r0, c + region.r1))
        return super().reference_measure(region)

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.N, "K": self.K, "density": self.density.describe()}


@dataclass(frozen=True, eq=False)
class WeightedHalfLine(WeightedInterval):
    """[0, inf) with reference measure w(x) dx."""

    kind: str = field(default="WeightedHalfLine", init=False)

    def __post_init__(self):
        if self.density.interval.a != 0 or self.density.interval.b != math.inf:
            raise ValueError("half-line density must live on (0, inf)")


@dataclass(frozen=True, eq=False)
class ProductLine(ModelSpace):
    """fiber x R with measure w(x) dx dz, optionally with a z-weight.

    Without ``z_weight`` this is a genuine product and certifies
    CD(0, fiber.N + 1) when the fiber certifies CD(0, fiber.N).  A z-weight
    turns it into the deliberately broken input used by the splitting
    checks.
    """

    fiber: WeightedInterval
    z_weight: Density1D | None = None
    window: float = 10.0
    kind: str = field(default="ProductLine", init=False)
    chart_dim: int = field(default=2, init=False)

    @property
    def N(self) -> float:
        return self.fiber.N + 1

    @property
    def K(self) -> float:
        # the line factor is flat, so the product cannot beat K = 0
        return min(self.fiber.K, 0.0)

    @property
    def fiber_window(self) -> tuple[float, float]:
        a, b = self.fiber.a, self.fiber.b
        return a, (b if math.isfinite(b) else a + self.window)

    def distance(self, x, y):
        x, y = _arr(x), _arr(y)
        return np.hypot(x[..., 0] - y[..., 0], x[..., 1] - y[..., 1])

    def _z_mass(self, lo, hi) -> float:
        if self.z_weight is None:
            return hi - lo
        val, _ = integrate.quad(lambda s: float(self.z_weight.value(s)), lo, hi,
                                limit=400, epsabs=1e-14, epsrel=1e-13)
        return val

    def reference_measure(self, region: Region) -> float:
        if isinstance(region, Nothing):
            return 0.0
        if isinstance(region, Box):
            return (self.fiber._mass(region.lo[0], region.hi[0])
                    * self._z_mass(region.lo[1], region.hi[1]))
        return super().reference_measure(region)

    def describe(self) -> dict:
        return {"kind": self.kind, "fiber": self.fiber.describe(),
                "z_weight": None if self.z_weight is None else self.z_weight.describe()}


# --------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class Point:
    """u = d_p."""

    p: tuple
    variant: str = field(default="point", init=False)


@dataclass(frozen=True)
class LevelSet:
    """u = d_v for one of the closed-form level sets.

    shape:
      ``sphere``     v = d_p - radius            (SpaceForm)
      ``hyperplane`` v = normal . x - offset     (flat SpaceForm; feet in [-extent, extent]^{N-1})
      ``generators`` v = sin(2 pi (theta - theta0) / L)   (FlatCylinder; |z| <= extent)
      ``point``      v = x - center              (WeightedInterval)
    """

    shape: str
    center: tuple | None = None
    radius: float = 0.0
    normal: tuple | None = None
    offset: float = 0.0
    theta0: float = 0.0
    extent: float = 5.0
    variant: str = field(default="level", init=False)


@dataclass(frozen=True)
class Line:
    """u = b+ for a line.

    SpaceForm(K=0): gamma(s) = origin + s direction (feet in [-extent, extent]^{N-1}).
    FlatCylinder: the generator theta = theta0, gamma(s) = (theta0, s).
    ProductLine: {x0} x R, gamma(s) = (x0, s).
    """

    origin: tuple = (0.0, 0.0)
    direction: tuple = (1.0, 0.0)
    theta0: float = 0.0
    x0: float = 0.0
    extent: float = 5.0
    variant: str = field(default="line", init=False)

    def point(self, space: ModelSpace, s):
        s = _arr(s)
        if isinstance(space, SpaceForm):
            return _arr(self.origin) + s[..., None] * _arr(self.direction)
        if isinstance(space, FlatCylinder):
            return np.stack(np.broadcast_arrays(np.full_like(s, self.theta0), s), axis=-1)
        if isinstance(space, ProductLine):
            return np.stack(np.broadcast_arrays(np.full_like(s, self.x0), s), axis=-1)
        raise ValueError(f"lines are not declared on {space.kind}")

    def validate(self, space: ModelSpace, samples: int = 17) -> None:
        """Check that s -> point(s) is an isometric embedding on samples."""
        s = np.linspace(-8.0, 8.0, samples)
        pts = self.point(space, s)
        d = space.distance(pts[:, None, :], pts[None, :, :])
        if np.max(np.abs(d - np.abs(s[:, None] - s[None, :]))) > 1e-10:
            raise ValueError("line validation failure: not an isometric embedding")


# --------------------------------------------------------------------------
# ray families


def _midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


class PolarFactorization:
    """A family of unit-speed rays parametrized by the value of u.

    Subclasses implement the geometry; all methods are vectorized with
    ``alpha`` of shape (n, k) and ``u`` broadcastable to (n, m).
    """

    space: ModelSpace
    base: object
    scale: float
    chart: str
    variant: str

    def index_grid(self, n: int):
        raise NotImplementedError

    def u_range(self, alpha):
        raise NotImplementedError

    def jacobian(self, alpha, u):
        raise NotImplementedError

    def jacobian_du(self, alpha, u):
        """d/du of the Jacobian (vectorized like :meth:`jacobian`)."""
        raise NotImplementedError

    def ray_density(self, alpha_row) -> Density1D:
        """scale * J_alpha as a density in the u coordinate."""
        raise NotImplementedError

    def point(self, alpha, u):
        raise NotImplementedError

    def velocity(self, alpha, u):
        """d point / du (the flow moves along minus this vector)."""
        raise NotImplementedError

    def level(self, pts):
        """The generating function u, evaluated from the closed-form metric."""
        raise NotImplementedError

    def cut_time(self, alpha):
        lo, hi = self.u_range(alpha)
        return hi

    def describe(self) -> dict:
        return {"chart": self.chart, "scale": self.scale, "variant": self.variant,
                "quotient": "probability weights on a deterministic chart grid"}


def _sphere_directions(N: int, n: int):
    """Direction chart for S^{N-1}: alpha rows and probability weights."""
    if N == 2:
        phi = _midpoints(0.0, 2 * math.pi, n)
        return phi[:, None], np.full(n, 1.0 / n)
    nc = max(2, int(round(math.sqrt(n / 2.0))))
    nphi = 2 * nc
    c, wc = gauss_legendre(nc)
    phi = _midpoints(0.0, 2 * math.pi, nphi)
    C, P = np.meshgrid(c, phi, indexing="ij")
    W = np.outer(wc / 2.0, np.full(nphi, 1.0 / nphi))
    return np.stack([C.ravel(), P.ravel()], axis=1), W.ravel()


def _unit_vectors(N: int, alpha):
    alpha = _arr(alpha)
    if N == 2:
        phi = alpha[:, 0]
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    c, phi = alpha[:, 0], alpha[:, 1]
    s = np.sqrt(np.maximum(1 - c * c, 0.0))
    return np.stack([s * np.cos(phi), s * np.sin(phi), c], axis=1)


class RadialFamily(PolarFactorization):
    """Geodesics from p in a space form, u = d_p - offset."""

    def __init__(self, space: SpaceForm, p, offset: float = 0.0, base=None):
        self.space = space
        self.p = space.validate(p)
        self.offset = float(offset)
        self.base = base
        self.frame = space.tangent_basis(self.p)
        self.scale = UNIT_SPHERE_AREA[space.N]
        self.variant = "point" if offset == 0.0 else "level"
        self.chart = "angle phi" if space.N == 2 else "(cos theta, phi)"
        if not 0 <= offset < space.diameter:
            raise ValueError("level-set radius must lie in [0, diameter)")

    def index_grid(self, n: int):
        return _sphere_directions(self.space.N, n)

    def directions(self, alpha):
        return _unit_vectors(self.space.N, alpha) @ self.frame

    def u_range(self, alpha):
        n = len(alpha)
        return np.full(n, -self.offset), np.full(n, self.space.diameter - self.offset)

    def jacobian(self, alpha, u):
        r = _arr(u) + self.offset
        return np.asarray(s_kappa(self.space.kappa, r, closed=True)) ** (self.space.N - 1)

    def jacobian_du(self, alpha, u):
        r = np.broadcast_to(_arr(u) + self.offset, np.broadcast_shapes((len(alpha), 1), np.shape(u)))
        k, n = self.space.kappa, self.space.N
        s = np.asarray(s_kappa(k, r, closed=True))
        return (n - 1) * s ** (n - 2) * np.asarray(s_kappa_prime(k, r))

    def ray_density(self, alpha_row) -> Density1D:
        sp = self.space
        return ClosedForm("skappa_pow", -self.offset, sp.diameter - self.offset,
                          c=self.scale, p=sp.N - 1, kappa=sp.kappa, x0=-self.offset)

    def point(self, alpha, u):
        e = self.directions(alpha)[:, None, :]
        return self.space.geodesic(self.p, e, _arr(u) + self.offset)

    def velocity(self, alpha, u):
        e = self.directions(alpha)[:, None, :]
        return self.space.geodesic_velocity(self.p, e, _arr(u) + self.offset)

    def level(self, pts):
        return self.space.distance(pts, self.p) - self.offset


class CylinderPointFamily(PolarFactorization):
    """Straight rays from p on the flat cylinder, alpha = angle to the axis."""

    variant = "point"
    chart = "angle to the axis"

    def __init__(self, space: FlatCylinder, p, base=None):
        self.space = space
        self.p = _arr(p)
        self.base = base
        self.scale = 2 * math.pi

    def index_grid(self, n: int):
        return _midpoints(0.0, 2 * math.pi, n)[:, None], np.full(n, 1.0 / n)

    def u_range(self, alpha):
        s = np.abs(np.sin(_arr(alpha)[:, 0]))
        with np.errstate(divide="ignore"):
            hi = np.where(s > 0, self.space.L / (2 * s), np.inf)
        return np.zeros(len(alpha)), hi

    def jacobian(self, alpha, u):
        return np.broadcast_to(_arr(u), np.broadcast_shapes((len(alpha), 1), np.shape(u))).copy()

    def jacobian_du(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def ray_density(self, alpha_row) -> Density1D:
        hi = self.u_range(np.atleast_2d(alpha_row))[1][0]
        return ClosedForm("power", 0.0, hi, c=self.scale, p=1.0)

    def _dir(self, alpha):
        a = _arr(alpha)[:, 0]
        return np.stack([np.sin(a), np.cos(a)], axis=1)[:, None, :]

    def point(self, alpha, u):
        q = self.p + _arr(u)[..., None] * self._dir(alpha)
        return np.stack([self.space.wrap(q[..., 0]), q[..., 1]], axis=-1)

    def velocity(self, alpha, u):
        d = self._dir(alpha)
        return np.broadcast_to(d, np.broadcast_shapes(d.shape, np.shape(u) + (2,))).copy()

    def level(self, pts):
        return self.space.distance(pts, self.p)


class HyperplaneFamily(PolarFactorization):
    """Normal lines to the hyperplane normal . x = offset in flat space."""

    variant = "level"

    def __init__(self, space: SpaceForm, normal, offset: float, extent: float, base=None):
        if space.K != 0:
            raise ValueError("hyperplane level sets need a flat space form")
        n = _arr(normal)
        self.space, self.base = space, base
        self.n = n / np.linalg.norm(n)
        self.offset, self.extent = float(offset), float(extent)
        basis = [self.n]
        for v in np.eye(space.N):
            for w in basis:
                v = v - (v @ w) * w
            if np.linalg.norm(v) > 1e-8:
                basis.append(v / np.linalg.norm(v))
        self.tangents = np.array(basis[1:space.N])
        self.scale = (2 * self.extent) ** (space.N - 1)
        self.chart = "foot coordinates in [-extent, extent]^(N-1)"

    def index_grid(self, n: int):
        if self.space.N == 2:
            return _midpoints(-self.extent, self.extent, n)[:, None], np.full(n, 1.0 / n)
        m = max(1, int(round(math.sqrt(n))))
        s = _midpoints(-self.extent, self.extent, m)
        A, B = np.meshgrid(s, s, indexing="ij")
        return np.stack([A.ravel(), B.ravel()], axis=1), np.full(m * m, 1.0 / (m * m))

    def u_range(self, alpha):
        k = len(alpha)
        return np.full(k, -np.inf), np.full(k, np.inf)

    def jacobian(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def jacobian_du(self, alpha, u):
        return np.zeros(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def ray_density(self, alpha_row) -> Density1D:
        return ClosedForm("constant", -np.inf, np.inf, c=self.scale)

    def point(self, alpha, u):
        foot = self.offset * self.n + _arr(alpha) @ self.tangents
        return foot[:, None, :] + _arr(u)[..., None] * self.n

    def velocity(self, alpha, u):
        return np.broadcast_to(self.n, np.broadcast_shapes((len(alpha), 1), np.shape(u)) + (self.space.N,)).copy()

    def level(self, pts):
        return _arr(pts) @ self.n - self.offset


class GeneratorPairFamily(PolarFactorization):
    """d_v for v = sin(2 pi (theta - theta0)/L) on the flat cylinder.

    {v = 0} is the pair of generators theta0 and theta0 + L/2.  Rays run
    horizontally from theta' = L/4 (initial point) to theta' = -L/4 or
    3L/4 (final point) through one of the two generators; alpha = (side,
    z) with side = +1 through theta0 and -1 through theta0 + L/2.
    """

    variant = "level"
    chart = "(side, z) with |z| <= extent"

    def __init__(self, space: FlatCylinder, theta0: float, extent: float, base=None):
        self.space, self.base = space, base
        self.theta0, self.extent = float(theta0), float(extent)
        self.scale = 4.0 * self.extent

    def index_grid(self, n: int):
        m = max(1, n // 2)
        z = _midpoints(-self.extent, self.extent, m)
        side = np.repeat([1.0, -1.0], m)
        return np.stack([side, np.tile(z, 2)], axis=1), np.full(2 * m, 1.0 / (2 * m))

    def u_range(self, alpha):
        k = len(alpha)
        q = self.space.L / 4
        return np.full(k, -q), np.full(k, q)

    def jacobian(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def jacobian_du(self, alpha, u):
        return np.zeros(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def ray_density(self, alpha_row) -> Density1D:
        q = self.space.L / 4
        return ClosedForm("constant", -q, q, c=self.scale)

    def point(self, alpha, u):
        side = _arr(alpha)[:, 0:1]
        z = _arr(alpha)[:, 1:2]
        u = _arr(u)
        theta = np.where(side > 0, self.theta0 + u, self.theta0 + self.space.L / 2 - u)
        theta, z = np.broadcast_arrays(theta, z)
        return np.stack([self.space.wrap(theta), z], axis=-1)

    def velocity(self, alpha, u):
        side = _arr(alpha)[:, 0:1]
        side, _ = np.broadcast_arrays(side, _arr(u))
        return np.stack([side, np.zeros_like(side)], axis=-1)

    def level(self, pts):
        L = self.space.L
        th = np.mod(_arr(pts)[..., 0] - self.theta0, L)
        upper = th <= L / 2
        return np.where(upper, np.minimum(th, L / 2 - th), -np.minimum(th - L / 2, L - th))


class IntervalPointFamily(PolarFactorization):
    """d_p on a weighted interval: one or two rays out of p."""

    variant = "point"
    chart = "side in {+1, -1}"

    def __init__(self, space: WeightedInterval, p: float, base=None):
        self.space, self.base = space, base
        self.p = float(p)
        if not space.a <= self.p < space.b:
            raise ValueError("base point outside the interval")
        self.sides = (1.0,) if self.p == space.a else (1.0, -1.0)
        self.scale = float(len(self.sides))

    def index_grid(self, n: int):
        k = len(self.sides)
        return np.array(self.sides)[:, None], np.full(k, 1.0 / k)

    def u_range(self, alpha):
        side = _arr(alpha)[:, 0]
        hi = np.where(side > 0, self.space.b - self.p, self.p - self.space.a)
        return np.zeros(len(alpha)), hi

    def jacobian(self, alpha, u):
        x = self.p + _arr(alpha)[:, 0:1] * _arr(u)
        return np.asarray(self.space.density.value(x))

    def jacobian_du(self, alpha, u):
        side = _arr(alpha)[:, 0:1]
        return side * np.asarray(self.space.density.deriv(self.p + side * _arr(u)))

    def ray_density(self, alpha_row) -> Density1D:
        side = int(np.atleast_1d(alpha_row)[0])
        hi = self.u_range(np.array([[side]]))[1][0]
        return Scaled(Restricted(Pullback(self.space.density, self.p, side), 0.0, hi), self.scale)

    def point(self, alpha, u):
        return (self.p + _arr(alpha)[:, 0:1] * _arr(u))[..., None]

    def velocity(self, alpha, u):
        side, _ = np.broadcast_arrays(_arr(alpha)[:, 0:1], _arr(u))
        return side[..., None].copy()

    def level(self, pts):
        return np.abs(_arr(pts)[..., 0] - self.p)


class IntervalLevelFamily(PolarFactorization):
    """d_v for v = x - center on a weighted interval: a single ray."""

    variant = "level"
    chart = "single ray"
    scale = 1.0

    def __init__(self, space: WeightedInterval, center: float, base=None):
        self.space, self.base = space, base
        self.center = float(center)
        if not space.a < self.center < space.b:
            raise ValueError("level point must be interior")

    def index_grid(self, n: int):
        return np.zeros((1, 1)), np.ones(1)

    def u_range(self, alpha):
        k = len(alpha)
        return np.full(k, self.space.a - self.center), np.full(k, self.space.b - self.center)

    def jacobian(self, alpha, u):
        u = np.broadcast_to(_arr(u), np.broadcast_shapes((len(alpha), 1), np.shape(u)))
        return np.asarray(self.space.density.value(self.center + u))

    def jacobian_du(self, alpha, u):
        u = np.broadcast_to(_arr(u), np.broadcast_shapes((len(alpha), 1), np.shape(u)))
        return np.asarray(self.space.density.deriv(self.center + u))

    def ray_density(self, alpha_row) -> Density1D:
        return Pullback(self.space.density, self.center, 1)

    def point(self, alpha, u):
        u = np.broadcast_to(_arr(u), np.broadcast_shapes((len(alpha), 1), np.shape(u)))
        return (self.center + u)[..., None]

    def velocity(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)) + (1,))

    def level(self, pts):
        return _arr(pts)[..., 0] - self.center


class FlatLineFamily(PolarFactorization):
    """Busemann rays of a straight line in flat space: parallel lines."""

    variant = "line"

    def __init__(self, space: SpaceForm, line: Line, base=None):
        if space.K != 0:
            raise ValueError("lines are only declared in flat space forms")
        self.space, self.base, self.line = space, base or line, line
        self.o = _arr(line.origin)
        e = _arr(line.direction)
        self.e = e / np.linalg.norm(e)
        hp = HyperplaneFamily(space, self.e, 0.0, line.extent)
        self.tangents = hp.tangents
        self.extent = line.extent
        self.scale = hp.scale
        self._grid = hp.index_grid
        self.chart = "foot coordinates across the line"

    def index_grid(self, n: int):
        return self._grid(n)

    def u_range(self, alpha):
        k = len(alpha)
        return np.full(k, -np.inf), np.full(k, np.inf)

    def jacobian(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def jacobian_du(self, alpha, u):
        return np.zeros(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def ray_density(self, alpha_row) -> Density1D:
        return ClosedForm("constant", -np.inf, np.inf, c=self.scale)

    def point(self, alpha, u):
        foot = self.o + _arr(alpha) @ self.tangents
        return foot[:, None, :] - _arr(u)[..., None] * self.e

    def velocity(self, alpha, u):
        return np.broadcast_to(-self.e, np.broadcast_shapes((len(alpha), 1), np.shape(u)) + (self.space.N,)).copy()

    def level(self, pts):
        return -(_arr(pts) - self.o) @ self.e

    def locate(self, pts):
        d = _arr(pts) - self.o
        return d @ self.tangents.T, -(d @ self.e)


class CylinderLineFamily(PolarFactorization):
    """Busemann rays of a generator: the vertical lines, u = -z."""

    variant = "line"
    chart = "theta in [0, L)"

    def __init__(self, space: FlatCylinder, line: Line, base=None):
        self.space, self.line, self.base = space, line, base or line
        self.scale = space.L

    def index_grid(self, n: int):
        return _midpoints(0.0, self.space.L, n)[:, None], np.full(n, 1.0 / n)

    def u_range(self, alpha):
        k = len(alpha)
        return np.full(k, -np.inf), np.full(k, np.inf)

    def jacobian(self, alpha, u):
        return np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def jacobian_du(self, alpha, u):
        return np.zeros(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def ray_density(self, alpha_row) -> Density1D:
        return ClosedForm("constant", -np.inf, np.inf, c=self.scale)

    def point(self, alpha, u):
        th, z = np.broadcast_arrays(_arr(alpha)[:, 0:1], -_arr(u))
        return np.stack([th, z], axis=-1)

    def velocity(self, alpha, u):
        shape = np.broadcast_shapes((len(alpha), 1), np.shape(u))
        out = np.zeros(shape + (2,))
        out[..., 1] = -1.0
        return out

    def level(self, pts):
        return -_arr(pts)[..., 1]

    def locate(self, pts):
        pts = _arr(pts)
        return self.space.wrap(pts[..., 0])[..., None], -pts[..., 1]


class ProductLineFamily(PolarFactorization):
    """Busemann rays of {x0} x R in fiber x R: vertical lines, u = -z."""

    variant = "line"
    chart = "fiber coordinate x"

    def __init__(self, space: ProductLine, line: Line, base=None):
        self.space, self.line, self.base = space, line, base or line
        lo, hi = space.fiber_window
        self.lo, self.hi = lo, hi
        self.scale = hi - lo

    def index_grid(self, n: int):
        return _midpoints(self.lo, self.hi, n)[:, None], np.full(n, 1.0 / n)

    def u_range(self, alpha):
        k = len(alpha)
        return np.full(k, -np.inf), np.full(k, np.inf)

    def jacobian(self, alpha, u):
        w = np.asarray(self.space.fiber.density.value(_arr(alpha)[:, 0:1]))
        zw = self.space.z_weight
        zf = 1.0 if zw is None else np.asarray(zw.value(-_arr(u)))
        return w * zf * np.ones(np.broadcast_shapes((len(alpha), 1), np.shape(u)))

    def jacobian_du(self, alpha, u):
        shape = np.broadcast_shapes((len(alpha), 1), np.shape(u))
        zw = self.space.z_weight
        if zw is None:
            return np.zeros(shape)
        w = np.asarray(self.space.fiber.density.value(_arr(alpha)[:, 0:1]))
        return -w * np.asarray(zw.deriv(-_arr(u))) * np.ones(shape)

    def ray_density(self, alpha_row) -> Density1D:
        c = self.scale * float(self.space.fiber.density.value(float(np.atleast_1d(alpha_row)[0])))
        zw = self.space.z_weight
        if zw is None:
            return ClosedForm("constant", -np.inf, np.inf, c=c)
        return Scaled(Pullback(zw, 0.0, -1), c)

    def point(self, alpha, u):
        x, z = np.broadcast_arrays(_arr(alpha)[:, 0:1], -_arr(u))
        return np.stack([x, z], axis=-1)

    def velocity(self, alpha, u):
        shape = np.broadcast_shapes((len(alpha), 1), np.shape(u))
        out = np.zeros(shape + (2,))
        out[..., 1] = -1.0
        return out

    def level(self, pts):
        return -_arr(pts)[..., 1]

    def locate(self, pts):
        pts = _arr(pts)
        return pts[..., 0:1], -pts[..., 1]


def polar_factorization(space: ModelSpace, base) -> PolarFactorization:
    """The ray family of the distance-type function defined by ``base``."""
    if isinstance(base, Point):
        if isinstance(space, SpaceForm):
            return RadialFamily(space, base.p, 0.0, base)
        if isinstance(space, FlatCylinder):
            return CylinderPointFamily(space, base.p, base)
        if isinstance(space, WeightedInterval):
            return IntervalPointFamily(space, float(np.atleast_1d(base.p)[0]), base)
    elif isinstance(base, LevelSet):
        if base.shape == "sphere" and isinstance(space, SpaceForm):
            center = space.default_point() if base.center is None else base.center
            return RadialFamily(space, center, base.radius, base)
        if base.shape == "hyperplane" and isinstance(space, SpaceForm):
            return HyperplaneFamily(space, base.normal, base.offset, base.extent, base)
        if base.shape == "generators" and isinstance(space, FlatCylinder):
            return GeneratorPairFamily(space, base.theta0, base.extent, base)
        if base.shape == "point" and isinstance(space, WeightedInterval):
            return IntervalLevelFamily(space, float(np.atleast_1d(base.center)[0]), base)
    elif isinstance(base, Line):
        base.validate(space)
        if isinstance(space, SpaceForm):
            return FlatLineFamily(space, base)
        if isinstance(space, FlatCylinder):
            return CylinderLineFamily(space, base)
        if isinstance(space, ProductLine):
            return ProductLineFamily(space, base)
    raise ValueError(f"unsupported (space, base) combination: {space.kind}, {base!r}")


def cut_locus_description(space: ModelSpace, p) -> dict:
    """Where the rays of d_p start, per catalog space."""
    if isinstance(space, SpaceForm):
        if space.K > 0:
            return {"kind": "point", "points": [space.antipode(p).tolist()],
                    "t_cut": space.diameter}
        return {"kind": "empty", "t_cut": math.inf}
    if isinstance(space, FlatCylinder):
        theta = float(space.wrap(_arr(p)[0] + space.L / 2))
        return {"kind": "line", "theta": theta,
                "parametrization": "z -> (theta, z)",
                "t_cut": "L / (2 |sin angle-to-axis|)"}
    if isinstance(space, WeightedInterval):
        x = float(np.atleast_1d(p)[0])
        ends = [e for e in (space.a, space.b) if math.isfinite(e) and e != x]
        return {"kind": "points", "points": [[e] for e in ends]}
    raise ValueError(f"no cut-locus description for {space.kind}")


def space_from_spec(spec: dict) -> ModelSpace:
    """Build a catalog space from a config mapping."""
    from .density_1d import density_from_spec

    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "SpaceForm":
        return SpaceForm(int(spec["N"]), float(spec["K"]))
    if kind == "FlatCylinder":
        return FlatCylinder(float(spec.get("L", 2 * math.pi)))
    if kind == "WeightedInterval":
        return WeightedInterval(density_from_spec(spec["density"]),
                                float(spec.get("N", 2.0)), float(spec.get("K", 0.0)))
    if kind == "WeightedHalfLine":
        return WeightedHalfLine(density_from_spec(spec["density"]),
                                float(spec.get("N", 2.0)), float(spec.get("K", 0.0)))
    if kind == "ProductLine":
        fiber = space_from_spec(spec["fiber"])
        zw = spec.get("z_weight")
        return ProductLine(fiber, None if zw is None else density_from_spec(zw),
                           float(spec.get("window", 10.0)))
    raise ValueError(f"unknown space kind {kind!r}")


def base_from_spec(spec: dict, space: ModelSpace):
    """Build a base descriptor from a config mapping."""
    spec = dict(spec)
    variant = spec.pop("variant")
    if variant == "point":
        p = spec.get("p")
        if p is None:
            p = space.default_point() if isinstance(space, SpaceForm) else [0.0] * space.chart_dim
        return Point(tuple(float(v) for v in np.atleast_1d(p)))
    if variant == "level":
        if "center" in spec and spec["center"] is not None:
            spec["center"] = tuple(float(v) for v in np.atleast_1d(spec["center"]))
        if "normal" in spec:
            spec["normal"] = tuple(float(v) for v in spec["normal"])
        return LevelSet(**spec)
    if variant == "line":
        for k in ("origin", "direction"):
            if k in spec:
                spec[k] = tuple(float(v) for v in spec[k])
        return Line(**spec)
    raise ValueError(f"unknown base variant {variant!r}")
