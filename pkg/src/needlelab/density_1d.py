"""One-dimensional MCP/CD densities.

A :class:`Density1D` is a positive function on an interval; it is both the
object of the 1-D comparison calculus and the per-ray payload of every
disintegration.  The ``check_*`` functions scan grids of test tuples and
return a :class:`CheckReport` with the worst signed margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .coefficients import CurvatureDim, _sigma_array, s_kappa, s_kappa_prime, s_ratio
from .quadrature import composite_gl, gauss_legendre

CLOSED_FORM_TOL = 1e-9
GRID_TOL = 1e-4


# --------------------------------------------------------------------------
# plumbing


@dataclass(frozen=True)
class Interval:
    """An open interval (a, b) with possibly infinite ends."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"degenerate interval ({self.a}, {self.b})")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.a) and math.isfinite(self.b)

    @property
    def length(self) -> float:
        return self.b - self.a

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.a) & (x < self.b)


@dataclass
class CheckReport:
    """Verdict of a certified inequality.

    ``worst_violation`` is the smallest signed margin found (negative means
    the inequality failed there); the verdict is pass iff it is at least
    ``-tolerance``.
    """

    name: str
    worst_violation: float
    tolerance: float
    witness: dict = field(default_factory=dict)
    grid_spec: str = ""
    details: dict = field(default_factory=dict)
    verdict_override: bool | None = None

    @property
    def passed(self) -> bool:
        if self.verdict_override is not None:
            return self.verdict_override
        return bool(self.worst_violation >= -self.tolerance)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "worst_violation": _jsonable(self.worst_violation),
            "tolerance": self.tolerance,
            "witness": {k: _jsonable(v) for k, v in self.witness.items()},
            "grid_spec": self.grid_spec,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


@dataclass(frozen=True)
class Grid:
    """Resolution of a 1-D scan.

    ``n_points`` interior points, excluding the ends, and ``n_t`` interior
    interpolation parameters.  Infinite intervals are scanned inside
    ``window``.
    """

    n_points: int = 48
    n_t: int = 15
    window: float = 20.0

    def span(self, iv: Interval) -> tuple[float, float]:
        lo = iv.a if math.isfinite(iv.a) else -self.window
        hi = iv.b if math.isfinite(iv.b) else self.window
        lo = max(lo, iv.a)
        hi = min(hi, iv.b)
        if not lo < hi:
            raise ValueError("scan window misses the interval")
        return lo, hi

    def points(self, iv: Interval) -> np.ndarray:
        lo, hi = self.span(iv)
        k = np.arange(1, self.n_points + 1)
        return lo + (hi - lo) * k / (self.n_points + 1)

    def ts(self) -> np.ndarray:
        return np.arange(1, self.n_t + 1) / (self.n_t + 1)

    def describe(self, iv: Interval) -> str:
        lo, hi = self.span(iv)
        return (f"{self.n_points} interior points of [{lo:.6g}, {hi:.6g}], {self.n_t} interior t, "
                f"fine chords of {list(FINE_CHORDS)} cells")


def _rel(diff, ref):
    return diff / (np.abs(ref) + 1e-12)


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------
# densities


class Density1D:
    """Base class: a positive density on an interval."""

    interval: Interval
    closed_form: bool = True

    def value(self, x):
        raise NotImplementedError

    def log_deriv(self, x):
        raise NotImplementedError

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.asarray(self.value(x)) * np.asarray(self.log_deriv(x)))

    def __call__(self, x):
        return self.value(x)

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "interval": [self.interval.a, self.interval.b]}

    @property
    def default_tolerance(self) -> float:
        return CLOSED_FORM_TOL if self.closed_form else GRID_TOL

    @cached_property
    def mass(self) -> float:
        iv = self.interval
        if not iv.finite:
            return math.inf
        val, _ = integrate.quad(lambda s: float(self.value(s)), iv.a, iv.b,
                                limit=400, epsabs=1e-14, epsrel=1e-13)
        return val

    def scaled(self, c: float) -> "Density1D":
        return Scaled(self, c)

    def normalized(self) -> "Density1D":
        return Scaled(self, 1.0 / self.mass)


# name -> (value(x, **p), log_deriv(x, **p))
def _power(x, c=1.0, p=1.0, x0=0.0):
    return c * np.abs(x - x0) ** p


def _power_d(x, c=1.0, p=1.0, x0=0.0):
    return p / (x - x0)


def _sin_pow(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return c * np.abs(np.sin(omega * (x - x0))) ** p


def _sin_pow_d(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return p * omega / np.tan(omega * (x - x0))


def _cosh_pow(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return c * np.cosh(omega * (x - x0)) ** p


def _cosh_pow_d(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return p * omega * np.tanh(omega * (x - x0))


def _sinh_pow(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return c * np.abs(np.sinh(omega * (x - x0))) ** p


def _sinh_pow_d(x, c=1.0, p=1.0, omega=1.0, x0=0.0):
    return p * omega / np.tanh(omega * (x - x0))


def _exp(x, c=1.0, rate=1.0, x0=0.0):
    return c * np.exp(rate * (x - x0))


def _exp_d(x, c=1.0, rate=1.0, x0=0.0):
    return np.full_like(np.asarray(x, dtype=float), rate)


def _constant(x, c=1.0):
    return np.full_like(np.asarray(x, dtype=float), c)


def _constant_d(x, c=1.0):
    return np.zeros_like(np.asarray(x, dtype=float))


def _skappa_pow(x, c=1.0, p=1.0, kappa=0.0, x0=0.0):
    return c * np.asarray(s_kappa(kappa, np.abs(x - x0), closed=True)) ** p


def _skappa_pow_d(x, c=1.0, p=1.0, kappa=0.0, x0=0.0):
    d = np.asarray(x - x0, dtype=float)
    return p * np.sign(d) * np.asarray(s_ratio(kappa, np.abs(d)))


FORMULAS = {
    "constant": (_constant, _constant_d),
    "power": (_power, _power_d),
    "sin_pow": (_sin_pow, _sin_pow_d),
    "cosh_pow": (_cosh_pow, _cosh_pow_d),
    "sinh_pow": (_sinh_pow, _sinh_pow_d),
    "exp": (_exp, _exp_d),
    "skappa_pow": (_skappa_pow, _skappa_pow_d),
}


class ClosedForm(Density1D):
    """A named closed-form density, e.g. ``ClosedForm("sin_pow", 0, pi, p=1)``."""

    def __init__(self, kind: str, a: float, b: float, **params):
        if kind not in FORMULAS:
            raise ValueError(f"unknown closed form {kind!r}; known: {sorted(FORMULAS)}")
        self.kind = kind
        self.params = dict(params)
        self.interval = Interval(float(a), float(b))
        self._f, self._df = FORMULAS[kind]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self._f(x, **self.params))

    def log_deriv(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = self._df(x, **self.params)
        return _scalar_or_array(x, np.asarray(out, dtype=float))

    def deriv(self, x):
        """Analytic h'; at a closed end sitting on x0 the one-sided value is returned."""
        x = np.asarray(x, dtype=float)
        p = self.params
        c, q = p.get("c", 1.0), p.get("p", 1.0)
        d = x - p.get("x0", 0.0)
        sgn = np.sign(d)
        inner = 1.0 if p.get("x0", 0.0) <= self.interval.a else (
            -1.0 if p.get("x0", 0.0) >= self.interval.b else 0.0)
        sgn = np.where(d == 0, inner, sgn)
        ad = np.abs(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "constant":
                out = np.zeros_like(x)
            elif self.kind == "exp":
                out = p.get("rate", 1.0) * self._f(x, **p)
            elif self.kind == "power":
                out = c * q * _safe_pow(ad, q - 1) * sgn
            elif self.kind == "skappa_pow":
                k = p.get("kappa", 0.0)
                s = np.asarray(s_kappa(k, ad, closed=True))
                out = c * q * _safe_pow(s, q - 1) * np.asarray(s_kappa_prime(k, ad)) * sgn
            else:
                w = p.get("omega", 1.0)
                arg = w * d
                if self.kind == "sin_pow":
                    s, ds = np.sin(arg), np.cos(arg)
                    s = np.where(d == 0, 0.0, s)
                    sgn_s = np.where(s == 0, inner, np.sign(s))
                elif self.kind == "cosh_pow":
                    s, ds, sgn_s = np.cosh(arg), np.sinh(arg), 1.0
                else:
                    s, ds = np.sinh(arg), np.cosh(arg)
                    sgn_s = np.where(s == 0, inner, np.sign(s))
                out = c * q * w * _safe_pow(np.abs(s), q - 1) * ds * sgn_s
        return _scalar_or_array(x, out)

    def describe(self) -> dict:
        return {"kind": self.kind, "interval": [self.interval.a, self.interval.b],
                **{k: float(v) for k, v in self.params.items()}}


def _safe_pow(base, e):
    """base**e with 0**0 = 1 (the p = 1 case at the vertex)."""
    return np.where(base == 0, 1.0 if e == 0 else (0.0 if e > 0 else np.inf), np.abs(base) ** e)


class Scaled(Density1D):
    """c * base."""

    def __init__(self, base: Density1D, c: float):
        if not c > 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.c = float(c)
        self.interval = base.interval
        self.closed_form = base.closed_form

    def value(self, x):
        return self.c * self.base.value(x)

    def log_deriv(self, x):
        return self.base.log_deriv(x)

    def deriv(self, x):
        return self.c * self.base.deriv(x)

    def describe(self) -> dict:
        return {"kind": "scaled", "c": self.c, "base": self.base.describe()}


class Pullback(Density1D):
    """h(t) = base(origin + sign * t): a density read along a reparametrized line."""

    def __init__(self, base: Density1D, origin: float, sign: int):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.base, self.origin, self.sign = base, float(origin), sign
        ends = sorted(((base.interval.a - origin) * sign, (base.interval.b - origin) * sign))
        self.interval = Interval(*ends)
        self.closed_form = base.closed_form

    def value(self, t):
        return self.base.value(self.origin + self.sign * np.asarray(t, dtype=float))

    def log_deriv(self, t):
        return self.sign * self.base.log_deriv(self.origin + self.sign * np.asarray(t, dtype=float))

    def deriv(self, t):
        return self.sign * self.base.deriv(self.origin + self.sign * np.asarray(t, dtype=float))

    def describe(self) -> dict:
        return {"kind": "pullback", "origin": self.origin, "sign": self.sign,
                "base": self.base.describe()}


class Restricted(Density1D):
    """base restricted to a sub-interval."""

    def __init__(self, base: Density1D, a: float, b: float):
        if a < base.interval.a or b > base.interval.b:
            raise ValueError("restriction must lie inside the base interval")
        self.base = base
        self.interval = Interval(float(a), float(b))
        self.closed_form = base.closed_form

    def value(self, x):
        return self.base.value(x)

    def log_deriv(self, x):
        return self.base.log_deriv(x)

    def deriv(self, x):
        return self.base.deriv(x)

    def describe(self) -> dict:
        return {"kind": "restricted", "interval": [self.interval.a, self.interval.b],
                "base": self.base.describe()}


class Product(Density1D):
    """Pointwise product of densities on a common interval."""

    def __init__(self, *factors: Density1D):
        self.factors = factors
        a = max(f.interval.a for f in factors)
        b = min(f.interval.b for f in factors)
        self.interval = Interval(a, b)
        self.closed_form = all(f.closed_form for f in factors)

    def value(self, x):
        out = 1.0
        for f in self.factors:
            out = out * np.asarray(f.value(x))
        return _scalar_or_array(x, out)

    def log_deriv(self, x):
        out = 0.0
        for f in self.factors:
            out = out + np.asarray(f.log_deriv(x))
        return _scalar_or_array(x, out)

    def describe(self) -> dict:
        return {"kind": "product", "factors": [f.describe() for f in self.factors]}


class Perturbed(Density1D):
    """log h = log base + amplitude * sum_k c_k sin(k pi (x - a) / D)."""

    def __init__(self, base: Density1D, amplitude: float, coeffs):
        self.base = base
        self.amplitude = float(amplitude)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.interval = base.interval
        if not self.interval.finite:
            raise ValueError("perturbations need a finite interval")
        self.closed_form = base.closed_form
        self._k = np.arange(1, self.coeffs.size + 1) * math.pi / self.interval.length

    def _phase(self, x):
        return (np.asarray(x, dtype=float) - self.interval.a)[..., None] * self._k

    def value(self, x):
        pert = self.amplitude * np.sin(self._phase(x)) @ self.coeffs
        return _scalar_or_array(x, np.asarray(self.base.value(x)) * np.exp(pert))

    def log_deriv(self, x):
        pert = self.amplitude * (np.cos(self._phase(x)) * self._k) @ self.coeffs
        return _scalar_or_array(x, np.asarray(self.base.log_deriv(x)) + pert)

    def describe(self) -> dict:
        return {"kind": "perturbed", "amplitude": self.amplitude,
                "coeffs": self.coeffs.tolist(), "base": self.base.describe()}


class CallableDensity(Density1D):
    """A user-supplied evaluator; (log h)' by a 5-point stencil unless given."""

    def __init__(self, fn, a: float, b: float, log_deriv=None, name: str = "callable"):
        self.fn = fn
        self._dlog = log_deriv
        self.interval = Interval(float(a), float(b))
        self.name = name

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.asarray(self.fn(x), dtype=float))

    def log_deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self._dlog is not None:
            return _scalar_or_array(x, np.asarray(self._dlog(x), dtype=float))
        step = 1e-3 * max(1.0, float(np.max(np.abs(x)))) if x.size else 1e-3
        lg = lambda s: np.log(np.asarray(self.fn(s), dtype=float))  # noqa: E731
        out = (-lg(x + 2 * step) + 8 * lg(x + step) - 8 * lg(x - step) + lg(x - 2 * step)) / (12 * step)
        return _scalar_or_array(x, out)

    def describe(self) -> dict:
        return {"kind": self.name, "interval": [self.interval.a, self.interval.b]}


class GridDensity(Density1D):
    """Samples on a uniform grid, interpolated linearly in log h.

    (log h)' is estimated at the nodes by central differences (one-sided at
    the first and last node) and interpolated linearly between nodes.
    """

    closed_form = False

    def __init__(self, x, h):
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        if x.ndim != 1 or x.size < 3 or x.shape != h.shape:
            raise ValueError("grid density needs matching 1-D arrays of length >= 3")
        steps = np.diff(x)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(x[-1] - x[0])):
            raise ValueError("grid must be uniform and increasing")
        if np.any(h <= 0) or not np.all(np.isfinite(h)):
            raise ValueError("grid samples must be strictly positive")
        self.x, self.h = x, h
        self._logh = np.log(h)
        self._dlog = np.gradient(self._logh, x)
        self.interval = Interval(x[0], x[-1])

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.exp(np.interp(x, self.x, self._logh)))

    def log_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.interp(x, self.x, self._dlog))

    @cached_property
    def mass(self) -> float:
        return float(integrate.simpson(self.h, x=self.x))

    def describe(self) -> dict:
        return {"kind": "custom_grid", "interval": [self.interval.a, self.interval.b],
                "n": int(self.x.size)}

    @classmethod
    def sample(cls, h: Density1D, a: float, b: float, n: int) -> "GridDensity":
        x = np.linspace(a, b, n)
        return cls(x, h.value(x))

    @classmethod
    def load(cls, path) -> "GridDensity":
        data = np.loadtxt(path, dtype=float, ndmin=2, delimiter=None)
        if data.shape[1] != 2:
            raise ValueError("grid density file must have two columns (x, h)")
        return cls(data[:, 0], data[:, 1])


def _psi(y):
    """Mollifier profile (35/32)(1 - y^2)^3 on [-1, 1]; unit mass."""
    return 35.0 / 32.0 * (1.0 - y * y) ** 3


class LogConvolved(Density1D):
    """log h^eps = (log h) * psi_eps on the shrunk interval (a+eps, b-eps)."""

    def __init__(self, base: Density1D, eps: float, order: int = 64):
        iv = base.interval
        if not eps > 0:
            raise ValueError("eps must be positive")
        if iv.finite and not eps < iv.length / 2:
            raise ValueError("eps too large for interval")
        self.base, self.eps = base, float(eps)
        self.interval = Interval(iv.a + eps, iv.b - eps)
        self.closed_form = base.closed_form
        y, w = gauss_legendre(order)
        wy = w * _psi(y)
        self._y = y
        self._w = wy / wy.sum()

    def _shifted(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., None] - self.eps * self._y

    def value(self, x):
        lg = np.log(np.asarray(self.base.value(self._shifted(x))))
        return _scalar_or_array(x, np.exp(lg @ self._w))

    def log_deriv(self, x):
        d = np.asarray(self.base.log_deriv(self._shifted(x)))
        return _scalar_or_array(x, d @ self._w)

    def describe(self) -> dict:
        return {"kind": "log_convolved", "eps": self.eps, "base": self.base.describe()}


def log_convolve(h: Density1D, eps: float, mollifier: str = "poly3") -> Density1D:
    """Regularize h by convolving log h with the rescaled bump (1-y^2)^3."""
    if mollifier != "poly3":
        raise ValueError(f"unknown mollifier {mollifier!r}")
    return LogConvolved(h, eps)


def density_from_spec(spec: dict) -> Density1D:
    """Build a density from a config mapping (see README for the schema)."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "custom_grid":
        if "path" in spec:
            return GridDensity.load(spec["path"])
        return GridDensity(spec["x"], spec["h"])
    interval = spec.pop("interval")
    a, b = (float(v) for v in interval)
    amp = spec.pop("amplitude", None)
    coeffs = spec.pop("coeffs", None)
    h = ClosedForm(kind, a, b, **{k: float(v) for k, v in spec.items()})
    if amp is not None:
        h = Perturbed(h, amp, coeffs)
    return h


# --------------------------------------------------------------------------
# checks


FINE_CHORDS = (1, 4, 16)  # short chord lengths, in fine-grid cells


def _fine_grid(xs, grid: Grid):
    """Nodes between the outermost scan points at the spacing of the t-grid."""
    return np.linspace(xs[0], xs[-1], (xs.size - 1) * (grid.n_t + 1) + 1)


def _triples(h: Density1D, grid: Grid):
    """All (x0, x1, t) on the coarse grid, plus short chords on the fine grid."""
    xs = grid.points(h.interval)
    ts = grid.ts()
    x0, x1, t = np.meshgrid(xs, xs, ts, indexing="ij")
    parts = [(x0.ravel(), x1.ravel(), t.ravel())]
    xf = _fine_grid(xs, grid)
    for k in FINE_CHORDS:
        if k < xf.size:
            a, tt = np.meshgrid(xf[:-k], ts, indexing="ij")
            a = a.ravel()
            parts.append((a, a + (xf[k] - xf[0]), tt.ravel()))
    return tuple(np.concatenate(p) for p in zip(*parts))


def _worst(margins, names, arrays):
    i = int(np.argmin(margins))
    return float(margins[i]), {n: float(a[i]) for n, a in zip(names, arrays)}


def check_mcp_density(h: Density1D, kd: CurvatureDim, grid: Grid | None = None,
                      tolerance: float | None = None) -> CheckReport:
    """Scan h(t x1 + (1-t) x0) >= sigma^{(1-t)}_{K,N-1}(|x1-x0|)^{N-1} h(x0).

    Margins are relative to h(x0).  Pairs at distance beyond the model
    diameter (the infinite branch of sigma) count as violations.
    """
    grid = grid or Grid()
    tol = h.default_tolerance if tolerance is None else tolerance
    x0, x1, t = _triples(h, grid)
    h0 = np.asarray(h.value(x0))
    if np.any(h0 <= 0):
        raise ValueError("non-positive density sample")
    sig = _sigma_array(kd.K, kd.N - 1, 1.0 - t, np.abs(x1 - x0))
    inf = np.isinf(sig)
    rhs = np.where(inf, 0.0, sig) ** (kd.N - 1) * h0
    lhs = np.asarray(h.value(t * x1 + (1 - t) * x0))
    margin = (lhs - rhs) / h0
    margin[inf] = -np.inf
    worst, wit = _worst(margin, ("x0", "x1", "t"), (x0, x1, t))
    return CheckReport("mcp_density", worst, tol, wit, grid.describe(h.interval),
                       {"K": kd.K, "N": kd.N, "density": h.describe(),
                        "diameter_pairs": int(inf.sum())})


def check_cd_density(h: Density1D, kd: CurvatureDim, grid: Grid | None = None,
                     tolerance: float | None = None) -> CheckReport:
    """Scan sigma-concavity of h^{1/(N-1)} along the interval."""
    grid = grid or Grid()
    tol = h.default_tolerance if tolerance is None else tolerance
    x0, x1, t = _triples(h, grid)
    e = 1.0 / (kd.N - 1)
    h0 = np.asarray(h.value(x0))
    h1 = np.asarray(h.value(x1))
    if np.any(h0 <= 0) or np.any(h1 <= 0):
        raise ValueError("non-positive density sample")
    theta = np.abs(x1 - x0)
    s0 = _sigma_array(kd.K, kd.N - 1, 1.0 - t, theta)
    s1 = _sigma_array(kd.K, kd.N - 1, t, theta)
    inf = np.isinf(s0) | np.isinf(s1)
    rhs = h0 ** e * np.where(inf, 0.0, s0) + h1 ** e * np.where(inf, 0.0, s1)
    lhs = np.asarray(h.value((1 - t) * x0 + t * x1)) ** e
    margin = _rel(lhs - rhs, rhs)
    margin[inf] = -np.inf
    worst, wit = _worst(margin, ("x0", "x1", "t"), (x0, x1, t))
    return CheckReport("cd_density", worst, tol, wit, grid.describe(h.interval),
                       {"K": kd.K, "N": kd.N, "density": h.describe(),
                        "diameter_pairs": int(inf.sum())})


def ratio_bounds(h: Density1D, kd: CurvatureDim, x0: float, x1: float):
    """Two-sided bound on h(x1)/h(x0) from the model Jacobians at the ends."""
    a, b = h.interval.a, h.interval.b
    if not h.interval.finite:
        raise ValueError("ratio_bounds needs a finite interval")
    if not (a < x0 <= x1 < b):
        raise ValueError(f"need a < x0 <= x1 < b, got {x0}, {x1} in ({a}, {b})")
    k, p = kd.kappa, kd.N - 1
    lower = (s_kappa(k, b - x1) / s_kappa(k, b - x0)) ** p
    upper = (s_kappa(k, x1 - a) / s_kappa(k, x0 - a)) ** p
    observed = float(h.value(x1)) / float(h.value(x0))
    return lower, upper, observed


def log_derivative_bounds(h: Density1D, kd: CurvatureDim, x: float):
    """The sandwich -(N-1)s'/s(b-x) <= (log h)'(x) <= (N-1)s'/s(x-a).

    Infinite ends use the flat limit of s'/s (see ``s_ratio``).
    """
    a, b = h.interval.a, h.interval.b
    if not a < x < b:
        raise ValueError("log-derivative bounds are evaluated at interior points only")
    k, p = kd.kappa, kd.N - 1
    upper = p * s_ratio(k, x - a)
    lower = -p * s_ratio(k, b - x)
    return float(lower), float(upper), float(h.log_deriv(x))


def _sup_bound_value(D: float, kd: CurvatureDim) -> float:
    if kd.K >= 0:
        return kd.N / D
    p = kd.N - 1
    val, _ = integrate.quad(
        lambda t: _sigma_array(kd.K, p, t, D) ** p, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 1.0 / (D * val)


def _observed_sup(h: Density1D) -> float:
    a, b = h.interval.a, h.interval.b
    xs = np.linspace(a, b, 4097)
    with np.errstate(all="ignore"):
        vals = np.asarray(h.value(xs), dtype=float)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
    if 0 < i < xs.size - 1:
        res = optimize.minimize_scalar(lambda s: -float(h.value(s)), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def sup_bound(h: Density1D, kd: CurvatureDim):
    """A-priori bound on sup h for a normalized MCP(K,N) density."""
    if not h.interval.finite:
        raise ValueError("sup_bound needs a finite interval")
    if abs(h.mass - 1.0) > 1e-8:
        raise ValueError(f"density must be normalized (mass {h.mass!r})")
    return _sup_bound_value(h.interval.length, kd), _observed_sup(h)


def derivative_l1_constant(D: float, kd: CurvatureDim) -> float:
    """The bracket C with  int |h'| <= sup-bound(D) * C.

    Assembled from the sign structure of w1 = h' + (N-1)(s'/s)(b-x) h >= 0
    and w2 = h' - (N-1)(s'/s)(x-a) h <= 0.  When s' >= 0 on [0, D] the two
    halves give 2 + 4(N-1) log(s(D)/s(D/2)).  Otherwise (K > 0 and D beyond
    a quarter period P) h is monotone outside the middle band and the band
    contributes, giving 4 + 4(N-1) log(s(P)/s(D/2)).  Not sharp.
    """
    k, p = kd.kappa, kd.N - 1
    quarter = math.pi / (2 * math.sqrt(k)) if k > 0 else math.inf
    if D <= quarter:
        return 2.0 + 4.0 * p * math.log(s_kappa(k, D, closed=True) / s_kappa(k, D / 2))
    return 4.0 + 4.0 * p * math.log(s_kappa(k, quarter) / s_kappa(k, D / 2))


def derivative_l1(h: Density1D, kd: CurvatureDim):
    """(int |h'|, proof-derived bound) for a normalized density."""
    iv = h.interval
    if not iv.finite:
        raise ValueError("derivative_l1 needs a finite interval")
    if abs(h.mass - 1.0) > 1e-8:
        raise ValueError(f"density must be normalized (mass {h.mass!r})")
    xs = np.linspace(iv.a, iv.b, 2049)[1:-1]
    d = np.asarray(h.deriv(xs))
    roots = []
    for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        roots.append(optimize.brentq(lambda s: float(h.deriv(s)), xs[i], xs[i + 1], xtol=1e-14))
    nodes = [iv.a, *roots, iv.b]
    total = 0.0
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        val, _ = integrate.quad(lambda s: abs(float(h.deriv(s))), lo, hi,
                                limit=400, epsabs=1e-13, epsrel=1e-12)
        total += val
    D = iv.length
    return total, _sup_bound_value(D, kd) * derivative_l1_constant(D, kd)


@dataclass(frozen=True)
class RigidityWindow:
    forced_lower: float
    forced_upper: float

    def __iter__(self):
        return iter((self.forced_lower, self.forced_upper))

    def contains(self, ratio: float, tol: float = 0.0) -> bool:
        return self.forced_lower - tol <= ratio <= self.forced_upper + tol


def rigidity_window(h: Density1D | None, N: float, x0: float, x1: float, R: float) -> RigidityWindow:
    """MCP(0,N) sandwich for h(x1)/h(x0) when h lives on at least (-R, R)."""
    if h is not None and not (h.interval.a <= -R and h.interval.b >= R):
        raise ValueError("the density must be defined on (-R, R)")
    if not -R < x0 <= x1 < R:
        raise ValueError("need -R < x0 <= x1 < R")
    p = N - 1
    return RigidityWindow(((R - x1) / (R - x0)) ** p, ((x1 + R) / (x0 + R)) ** p)


def constancy_verdict(h: Density1D, N: float, R: float, samples: int = 33,
                      tolerance: float = 1e-6) -> CheckReport:
    """Does the forced window pin h(x1)/h(x0) to 1 on sampled pairs in [-R/2, R/2]?

    The report fails if an observed ratio leaves its forced window.  The
    ``constant`` detail records whether every window is within
    ``tolerance`` of 1.
    """
    xs = np.linspace(-R / 2, R / 2, samples)
    with np.errstate(over="ignore", under="ignore"):
        hv = np.asarray(h.value(xs), dtype=float)
    if np.any(hv <= 0) or not np.all(np.isfinite(hv)):
        raise ValueError("density under- or overflows on [-R/2, R/2]; use a smaller R")
    worst, wit, width = math.inf, {}, 0.0
    for i, x0 in enumerate(xs):
        for x1 in xs[i:]:
            w = rigidity_window(None, N, x0, x1, R)
            obs = float(h.value(x1)) / float(h.value(x0))
            m = min(obs - w.forced_lower, w.forced_upper - obs)
            width = max(width, abs(w.forced_lower - 1), abs(w.forced_upper - 1))
            if m < worst:
                worst, wit = m, {"x0": float(x0), "x1": float(x1), "ratio": obs}
    return CheckReport("rigidity_window", worst, tolerance, wit,
                       f"{samples} points of [-R/2, R/2], R={R:g}",
                       {"max_window_deviation": width, "constant": width < tolerance})


def _pair_list(h: Density1D, grid: Grid):
    """All ordered pairs of grid points, plus neighbour pairs on a fine grid.

    The fine grid has the spacing of the CD scan's interpolation points,
    so short-scale defects between coarse nodes are seen by both scans.
    """
    xs = grid.points(h.interval)
    xa, xb = np.meshgrid(xs, xs, indexing="ij")
    off = xa != xb
    xf = _fine_grid(xs, grid)
    return (np.concatenate([xa[off], xf[:-1]]),
            np.concatenate([(xb - xa)[off], np.diff(xf)]))


def bochner_terms(h: Density1D, kd: CurvatureDim, x, t, panels: int = 8):
    """Both sides of -[g(x+t) - g(x)] >= K t + (1/(N-1)) int_0^t g(x+s)^2 ds, g = (log h)'.

    Negative t is handled by starting at x + t with step |t|.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    start = np.where(t < 0, x + t, x)
    step = np.abs(t)
    g = h.log_deriv
    lhs = -(np.asarray(g(start + step)) - np.asarray(g(start)))
    integral = composite_gl(lambda s: np.asarray(g(s)) ** 2, start, start + step, panels=panels)
    rhs = kd.K * step + integral / (kd.N - 1)
    return lhs, rhs


def bochner_1d(h: Density1D, kd: CurvatureDim, x: float | None = None, t: float | None = None,
               grid: Grid | None = None, tolerance: float | None = None) -> CheckReport:
    """The integrated 1-D Bochner inequality at (x, t), or over a grid of pairs."""
    grid = grid or Grid()
    tol = h.default_tolerance if tolerance is None else tolerance
    iv = h.interval
    if x is not None and t is not None:
        if not (iv.contains(x) and iv.contains(x + t)):
            raise ValueError("Bochner check needs interior points")
        xs, ts = np.array([x], dtype=float), np.array([t], dtype=float)
        spec = f"single pair x={x:.6g}, t={t:.6g}"
    else:
        xs, ts = _pair_list(h, grid)
        spec = grid.describe(iv) + " (all ordered pairs + fine neighbour pairs)"
    lhs, rhs = bochner_terms(h, kd, xs, ts)
    margin = _rel(lhs - rhs, rhs)
    worst, wit = _worst(margin, ("x", "t"), (xs, ts))
    return CheckReport("bochner_1d", worst, tol, wit, spec,
                       {"K": kd.K, "N": kd.N, "density": h.describe()})


def bochner_implies_cd(h: Density1D, kd: CurvatureDim, grid: Grid | None = None,
                       tolerance: float | None = None) -> CheckReport:
    """Run the Bochner scan and the CD scan on one grid; pass iff they agree."""
    grid = grid or Grid()
    b = bochner_1d(h, kd, grid=grid, tolerance=tolerance)
    c = check_cd_density(h, kd, grid, tolerance=tolerance)
    agree = b.passed == c.passed
    return CheckReport("bochner_implies_cd", 0.0 if agree else -math.inf, b.tolerance,
                       {"bochner": b.witness, "cd": c.witness}, grid.describe(h.interval),
                       {"bochner_verdict": b.verdict, "cd_verdict": c.verdict,
                        "bochner_margin": b.worst_violation, "cd_margin": c.worst_violation})
