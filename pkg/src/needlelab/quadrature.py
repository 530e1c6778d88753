"""Small quadrature helpers shared by the engine.

Everything here is deterministic: node sets are fixed and every sum is
taken in a fixed order (``math.fsum`` for reductions whose result is
reported).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def composite_gl(f, lo, hi, panels: int = 8, order: int = 16):
    """Integrate ``f`` over many intervals [lo_i, hi_i] at once.

    ``f`` receives an array of shape ``lo.shape + (panels * order,)`` and
    must return values of the same shape.  Returns an array shaped like
    ``lo``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = gauss_legendre(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    # reference nodes in [0, 1] for the composite rule
    ref = (edges[:-1, None] + (x[None, :] + 1.0) * 0.5 / panels).ravel()
    wref = np.tile(w * 0.5 / panels, panels)
    span = (hi - lo)[..., None]
    pts = lo[..., None] + span * ref
    vals = f(pts)
    return np.sum(vals * wref, axis=-1) * (hi - lo)


def trapezoid_nodes(lo: float, hi: float, per_unit: float, minimum: int = 8):
    """Uniform nodes on [lo, hi] with roughly ``per_unit`` panels per unit."""
    n = max(minimum, int(math.ceil((hi - lo) * per_unit)))
    return np.linspace(lo, hi, n + 1)


def trapezoid(y, x) -> float:
    """Composite trapezoid rule with an order-fixed compensated sum."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.size < 2:
        return 0.0
    return math.fsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))


def fsum(values) -> float:
    """Order-fixed compensated sum of an iterable of floats."""
    return math.fsum(float(v) for v in np.ravel(np.asarray(values, dtype=float)))
