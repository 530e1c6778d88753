"""Distortion coefficients s_kappa, sigma and tau.

These are the model comparison weights used throughout the engine.  All
functions are pure.  ``sigma_coeff`` and ``tau_coeff`` return an
:class:`ExtReal` so that the infinite branch is carried as a tag rather
than as a floating-point ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this value of |K| theta^2 / N the flat branch is used.
FLAT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ExtReal:
    """A real number or the +infinity marker."""

    value: float = 0.0
    infinite: bool = False

    @classmethod
    def inf(cls) -> "ExtReal":
        return cls(math.inf, True)

    @classmethod
    def of(cls, x: float) -> "ExtReal":
        if math.isinf(x) and x > 0:
            return cls.inf()
        if math.isnan(x) or math.isinf(x):
            raise ValueError(f"ExtReal cannot hold {x!r}")
        return cls(float(x), False)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __float__(self) -> float:
        if self.infinite:
            raise OverflowError("ExtReal is +infinity; test is_finite first")
        return float(self.value)

    def __mul__(self, other: float) -> "ExtReal":
        if other < 0:
            raise ValueError("ExtReal only scales by non-negative numbers")
        if self.infinite:
            return self if other > 0 else ExtReal(0.0)
        return ExtReal(self.value * other)

    __rmul__ = __mul__

    def __pow__(self, p: float) -> "ExtReal":
        if p <= 0:
            raise ValueError("ExtReal powers must be positive")
        if self.infinite:
            return self
        return ExtReal(self.value ** p)

    def max(self, other: "ExtReal") -> "ExtReal":
        if self.infinite or other.infinite:
            return ExtReal.inf()
        return ExtReal(max(self.value, other.value))

    def __lt__(self, other: "ExtReal") -> bool:
        if self.infinite:
            return False
        return other.infinite or self.value < other.value

    def __le__(self, other: "ExtReal") -> bool:
        return self == other or self < other

    def to_json(self):
        return "inf" if self.infinite else self.value

    def __repr__(self) -> str:
        return "ExtReal(+inf)" if self.infinite else f"ExtReal({self.value!r})"


@dataclass(frozen=True)
class CurvatureDim:
    """Curvature lower bound K and dimension upper bound N > 1."""

    K: float
    N: float

    def __post_init__(self):
        if not self.N > 1:
            raise ValueError(f"N must be > 1, got {self.N}")

    @property
    def kappa(self) -> float:
        """Sectional-type curvature K/(N-1) of the comparison model."""
        return self.K / (self.N - 1)

    @property
    def diameter(self) -> float:
        """Model diameter pi*sqrt((N-1)/K); +inf when K <= 0."""
        return math.pi / math.sqrt(self.kappa) if self.K > 0 else math.inf


def s_kappa(kappa: float, theta, closed: bool = False):
    """Model Jacobi amplitude.

    sin(sqrt(k) t)/sqrt(k) for k > 0, t for k = 0, sinh(sqrt(-k) t)/sqrt(-k)
    for k < 0.  Accepts scalars or arrays.  For k > 0 the argument must stay
    below pi/sqrt(k); ``closed=True`` admits the endpoint itself (continuous
    extension, used when evaluating Jacobians at the antipode).
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise ValueError("theta must be non-negative")
    if kappa > 0:
        limit = math.pi / math.sqrt(kappa)
        bad = th > limit if closed else th >= limit
        if np.any(bad):
            raise ValueError(f"s_kappa domain error: theta >= pi/sqrt(kappa) = {limit}")
        r = math.sqrt(kappa)
        out = np.sin(r * th) / r
    elif kappa == 0:
        out = th.copy() if th.ndim else th
    else:
        r = math.sqrt(-kappa)
        out = np.sinh(r * th) / r
    return float(out) if np.ndim(out) == 0 else out


def s_kappa_prime(kappa: float, theta):
    """Derivative of :func:`s_kappa` in theta."""
    th = np.asarray(theta, dtype=float)
    if kappa > 0:
        out = np.cos(math.sqrt(kappa) * th)
    elif kappa == 0:
        out = np.ones_like(th)
    else:
        out = np.cosh(math.sqrt(-kappa) * th)
    return float(out) if np.ndim(out) == 0 else out


def s_ratio(kappa: float, theta):
    """s'/s at distance theta, with the flat-limit value at theta = +inf.

    At infinite distance the ratio tends to sqrt(max(-kappa, 0)): 0 in the
    flat case and sqrt(-kappa) in the hyperbolic case.  Every comparison
    bound with a missing ray endpoint goes through here.
    """
    th = np.asarray(theta, dtype=float)
    out = np.empty_like(th)
    inf = np.isinf(th)
    out[inf] = math.sqrt(max(-kappa, 0.0))
    f = th[~inf]
    if kappa > 0:
        r = math.sqrt(kappa)
        out[~inf] = r / np.tan(r * f)
    elif kappa == 0:
        with np.errstate(divide="ignore"):
            out[~inf] = 1.0 / f
    else:
        r = math.sqrt(-kappa)
        out[~inf] = r / np.tanh(r * f)
    return float(out) if np.ndim(out) == 0 else out


def _sigma_array(K: float, N: float, t, theta):
    """Vectorized sigma; the infinite branch is returned as np.inf.

    Internal helper for grid scans, where callers mask the infinite entries
    explicitly before doing arithmetic.
    """
    t = np.asarray(t, dtype=float)
    th = np.asarray(theta, dtype=float)
    t, th = np.broadcast_arrays(t, th)
    k_th2 = K * th * th
    out = np.array(t, dtype=float, copy=True)
    if N == 0:
        out[k_th2 > 0] = np.inf
        neg = k_th2 < 0
        out[neg] = t[neg]
        return out
    flat = np.abs(k_th2) / N < FLAT_THRESHOLD
    if K > 0:
        inf = (k_th2 >= N * math.pi ** 2) & ~flat
        trig = ~flat & ~inf
        r = th[trig] * math.sqrt(K / N)
        out[trig] = np.sin(t[trig] * r) / np.sin(r)
        out[inf] = np.inf
    elif K < 0:
        hyp = ~flat
        r = th[hyp] * math.sqrt(-K / N)
        out[hyp] = np.sinh(t[hyp] * r) / np.sinh(r)
    return out


def sigma_coeff(K: float, N: float, t: float, theta: float) -> ExtReal:
    """The distortion coefficient sigma_{K,N}^{(t)}(theta)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if N < 0:
        raise ValueError("N must be non-negative")
    k_th2 = K * theta * theta
    if k_th2 == 0.0:
        return ExtReal(float(t))
    if N == 0:
        return ExtReal.inf() if k_th2 > 0 else ExtReal(float(t))
    if abs(k_th2) / N < FLAT_THRESHOLD:
        return ExtReal(float(t))
    if k_th2 >= N * math.pi ** 2:
        return ExtReal.inf()
    if K > 0:
        r = theta * math.sqrt(K / N)
        return ExtReal(math.sin(t * r) / math.sin(r))
    r = theta * math.sqrt(-K / N)
    return ExtReal(math.sinh(t * r) / math.sinh(r))


def tau_coeff(K: float, N: float, t: float, theta: float) -> ExtReal:
    """tau_{K,N}^{(t)}(theta) = t^{1/N} sigma_{K,N-1}^{(t)}(theta)^{(N-1)/N}."""
    if not N > 1:
        raise ValueError(f"N must be > 1, got {N}")
    if K == 0:
        return ExtReal(float(t))
    sig = sigma_coeff(K, N - 1, t, theta)
    if sig.infinite:
        return ExtReal.inf()
    return ExtReal(t ** (1.0 / N) * sig.value ** ((N - 1.0) / N))
