"""Busemann functions of lines and the product factorization they induce.

For a line gamma, b+(x) = lim d(x, gamma(T)) - T and b-(x) = lim
d(x, gamma(-T)) - T.  On the catalog spaces with a line (flat space, the
cylinder, weighted products fiber x R) the pipeline checks b+ + b- = 0,
that the rays of b+ are full lines with constant densities, and that
Phi(x) = (alpha(x), b+(x)) pushes m to q' x Lebesgue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density_1d import CheckReport, constancy_verdict
from .model_spaces import FlatCylinder, Line, ModelSpace, ProductLine, SpaceForm
from .quadrature import fsum
from .ray_disintegration import Disintegration
from .regions import Box

T_START = 16.0
T_MAX = 1e6
GAP_TOL = 1e-6
DENSITY_TOL = 1e-6
FACTOR_TOL = 1e-4
PERTURBATIONS = 16


def busemann(space: ModelSpace, line: Line, x, T: float, sign: int = 1):
    """(d(x, gamma(sign T)) - T, |value(T) - value(T/2)|), vectorized over x."""
    x = np.asarray(x, dtype=float)
    far = line.point(space, sign * T)
    half = line.point(space, sign * T / 2)
    v = space.distance(x, far) - T
    v_half = space.distance(x, half) - T / 2
    return v, np.abs(v - v_half)


@dataclass(frozen=True)
class BusemannField:
    """b+ and b- of a line at a fixed truncation T."""

    space: ModelSpace
    line: Line
    T: float
    gap_plus: float
    gap_minus: float
    converged: bool

    def plus(self, x):
        return busemann(self.space, self.line, x, self.T, 1)[0]

    def minus(self, x):
        return busemann(self.space, self.line, x, self.T, -1)[0]

    @property
    def tolerance(self) -> float:
        # each truncated value is within its doubling gap of the limit
        return 2.0 * (self.gap_plus + self.gap_minus) + 1e-9

    @property
    def gap(self) -> float:
        return max(self.gap_plus, self.gap_minus)

    def describe(self) -> dict:
        return {"T": self.T, "cauchy_gap_plus": self.gap_plus,
                "cauchy_gap_minus": self.gap_minus, "converged": self.converged,
                "tolerance": self.tolerance}


def default_samples(space: ModelSpace, line: Line, n: int = 8, half_width: float = 3.0):
    """An n x n chart grid of points around the line."""
    s = np.linspace(-half_width, half_width, n)
    if isinstance(space, SpaceForm):
        if space.K != 0:
            raise ValueError("lines are only declared in flat space forms")
        e = np.asarray(line.direction, dtype=float)
        e = e / np.linalg.norm(e)
        o = np.asarray(line.origin, dtype=float)
        if space.N != 2:
            raise ValueError("default samples are planar")
        nrm = np.array([-e[1], e[0]])
        A, B = np.meshgrid(s, s, indexing="ij")
        return o + A.ravel()[:, None] * e + B.ravel()[:, None] * nrm
    if isinstance(space, FlatCylinder):
        th = (np.arange(n) + 0.5) * space.L / n
        A, B = np.meshgrid(th, s, indexing="ij")
        return np.stack([A.ravel(), B.ravel()], axis=1)
    if isinstance(space, ProductLine):
        lo, hi = space.fiber_window
        xs = lo + (hi - lo) * (np.arange(n) + 0.5) / n
        A, B = np.meshgrid(xs, s, indexing="ij")
        return np.stack([A.ravel(), B.ravel()], axis=1)
    raise ValueError(f"lines are not declared on {space.kind}")


def certify_truncation(space: ModelSpace, line: Line, samples=None, T0: float = T_START,
                       gap_tol: float = GAP_TOL, T_max: float = T_MAX) -> BusemannField:
    """Double T until the worst Cauchy gap of b+ and b- is below ``gap_tol``.

    The truncated values are monotone in T, so the gap bounds the
    remaining distance to the limit.  If T would exceed ``T_max`` the last
    admissible T is kept and the field is marked non-convergent.
    """
    line.validate(space)
    samples = default_samples(space, line) if samples is None else np.asarray(samples, dtype=float)
    T = T0
    while True:
        gp, gm = (float(np.max(busemann(space, line, samples, T, s)[1])) for s in (1, -1))
        if max(gp, gm) < gap_tol:
            return BusemannField(space, line, T, gp, gm, True)
        if 2 * T > T_max:
            return BusemannField(space, line, T, gp, gm, False)
        T *= 2


def check_b_zero(space: ModelSpace, line: Line, samples=None,
                 field: BusemannField | None = None) -> CheckReport:
    """max |b+ + b-| over samples against the truncation tolerance.

    Also records b+ + b- >= 0 (triangle inequality, exact at every T) and
    the sampled Lipschitz constant of b+.
    """
    samples = default_samples(space, line) if samples is None else np.asarray(samples, dtype=float)
    field = field or certify_truncation(space, line, samples)
    bp, bm = field.plus(samples), field.minus(samples)
    s = bp + bm
    i = int(np.argmax(np.abs(s)))
    d = space.distance(samples[:, None, :], samples[None, :, :])
    excess = np.abs(bp[:, None] - bp[None, :]) - d - 2 * field.gap
    details = {"busemann": field.describe(), "min_sum": float(np.min(s)),
               "lipschitz_excess": float(np.max(excess)), "samples": len(samples)}
    rep = CheckReport("b_zero", -float(np.abs(s[i])), field.tolerance,
                      {"x": samples[i].tolist(), "b_plus": float(bp[i]), "b_minus": float(bm[i])},
                      f"{len(samples)} sample points, T={field.T:g}", details)
    if not rep.passed:
        rep.details["diagnosis"] = ("b+ + b- is not 0: either the space is not infinitesimally "
                                    "Hilbertian (no maximum principle) or the truncation is too "
                                    "short; the numerics cannot tell these apart")
    return rep


def check_constant_ray_densities(dis: Disintegration, samples: int = 33,
                                 tolerance: float = DENSITY_TOL) -> CheckReport:
    """Every Busemann ray is a full line carrying a constant density.

    Per active ray the spread (max h - min h) / mean h over its window clip
    must be below ``tolerance``; the MCP(0,N) rigidity window on (-R, R),
    R = r_max, is checked along the way.  A ray with an endpoint means the
    splitting hypothesis fails.
    """
    if dis.variant != "line":
        raise ValueError("constant-density check needs a Busemann disintegration")
    worst, wit, reg_max = 0.0, {}, -math.inf
    ended = [r.index for r in dis.active() if r.has_a or r.has_b]
    rigidity_worst = math.inf
    N = float(dis.space.N)
    R = dis.resolution.r_max
    for r in dis.active():
        t = np.linspace(r.clip[0], r.clip[1], samples)
        h = np.asarray(r.density.value(t), dtype=float)
        spread = float((h.max() - h.min()) / np.mean(h))
        # regular part of Delta b+ along the ray: -(log h)'
        reg_max = max(reg_max, float(np.max(-np.asarray(r.density.deriv(t)) / h)))
        if spread > worst:
            worst, wit = spread, {"ray": r.index, "alpha": r.alpha.tolist(),
                                  "h_min": float(h.min()), "h_max": float(h.max())}
    # the rigidity window is evaluated on a few rays; it is the slow part
    for r in dis.active()[:: max(1, len(dis.active()) // 8)]:
        v = constancy_verdict(r.density, N, R, samples=9, tolerance=tolerance)
        rigidity_worst = min(rigidity_worst, v.worst_violation)
    details = {"half_infinite_rays": ended[:10], "rigidity_worst": rigidity_worst,
               "max_spread": worst, "max_regular_laplacian": reg_max}
    override = False if ended or rigidity_worst < -tolerance or reg_max > tolerance else None
    if ended:
        details["diagnosis"] = "ray with an endpoint: the splitting hypothesis fails"
    return CheckReport("constant_ray_densities", -worst, tolerance, wit,
                       f"{samples} points per active ray clip", details, override)


def _preimage_box(dis: Disintegration, a_lo: float, a_hi: float, b_lo: float, b_hi: float) -> Box:
    """Phi^{-1}([a_lo, a_hi] x [b_lo, b_hi]) as a chart box (rays are chart-aligned)."""
    fam = dis.family
    alpha = np.array([[a_lo], [a_lo], [a_hi], [a_hi]])
    u = np.array([[b_lo], [b_hi], [b_lo], [b_hi]])
    corners = fam.point(alpha, u)[:, 0, :]
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    box = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    for c in corners:
        if np.min(np.max(np.abs(box - c), axis=1)) > 1e-9 * max(1.0, np.max(np.abs(c))):
            raise ValueError("rectangle family degenerate: preimage is not a chart box")
    return Box(tuple(lo), tuple(hi))


def factorize(dis: Disintegration, grid: tuple = (32, 32), tolerance: float = FACTOR_TOL,
              seed: int = 0) -> CheckReport:
    """Check Phi_# m = q' x L^1 on a grid of rectangles C x I.

    C groups consecutive rays (so q'(C) = sum of c_alpha q_alpha exactly),
    I splits the common b+ range of the window clips; m(Phi^{-1}(C x I))
    comes from the space's closed-form reference measure.  Residuals are
    relative.  Injectivity and continuity of Phi are sampled.
    """
    if dis.variant != "line":
        raise ValueError("factorization needs a Busemann disintegration")
    rays = sorted(dis.active(), key=lambda r: float(r.alpha[0]))
    if not rays or dis.alphas.shape[1] != 1:
        raise ValueError("rectangle family degenerate: needs a one-dimensional quotient")
    nc, ni = grid
    if len(rays) < nc or nc < 1 or ni < 1:
        raise ValueError("rectangle family degenerate: too few rays for the grid")
    fam = dis.family
    alpha = np.array([float(r.alpha[0]) for r in rays])
    # c_alpha: mean of h over the clip
    c = np.array([float(np.mean(r.density.value(np.linspace(r.clip[0], r.clip[1], 17))))
                  for r in rays])
    q = np.array([r.weight for r in rays])
    b_lo = max(-r.clip[1] for r in rays)
    b_hi = min(-r.clip[0] for r in rays)
    if not b_hi > b_lo:
        raise ValueError("rectangle family degenerate: empty common b+ range")
    step = np.diff(alpha)
    cell = float(np.median(step)) if step.size else 1.0
    groups = np.array_split(np.arange(len(rays)), nc)
    b_edges = np.linspace(b_lo, b_hi, ni + 1)
    worst, wit = 0.0, {}
    for g in groups:
        a0, a1 = alpha[g[0]] - cell / 2, alpha[g[-1]] + cell / 2
        qc = fsum(c[g] * q[g])
        for i0, i1 in zip(b_edges[:-1], b_edges[1:]):
            oracle = dis.space.reference_measure(_preimage_box(dis, a0, a1, i0, i1))
            pred = qc * (i1 - i0)
            res = abs(oracle - pred) / oracle
            if res > worst:
                worst, wit = res, {"C": [a0, a1], "I": [float(i0), float(i1)],
                                   "measure": oracle, "product": pred}
    # injectivity: Phi^{-1}(Phi(x)) = x on ray points
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(rays), size=min(64, len(rays)), replace=False)
    t = rng.uniform(-b_hi, -b_lo, size=(len(pick), 1))
    a = alpha[pick][:, None]
    pts = fam.point(a, -t)[:, 0, :]
    loc_a, loc_b = fam.locate(pts)
    back = fam.point(np.asarray(loc_a).reshape(-1, 1), np.asarray(loc_b).reshape(-1, 1))[:, 0, :]
    roundtrip = float(np.max(np.abs(back - pts)))
    # continuity: Lipschitz ratios of Phi under small perturbations
    delta = 1e-6
    dirs = rng.standard_normal((PERTURBATIONS, pts.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ratios = []
    phi0 = np.column_stack([np.asarray(loc_a).reshape(len(pts), -1), np.asarray(loc_b)])
    for d in dirs:
        la, lb = fam.locate(pts + delta * d)
        phi = np.column_stack([np.asarray(la).reshape(len(pts), -1), np.asarray(lb)])
        ratios.append(float(np.max(np.linalg.norm(phi - phi0, axis=1)) / delta))
    table = [(float(a_), float(-(r.clip[0] + r.clip[1]) / 2) + 0.0, float(c_))
             for a_, r, c_ in zip(alpha, rays, c)]
    details = {"rectangles": nc * ni, "injectivity_roundtrip": roundtrip,
               "lipschitz_phi": max(ratios), "b_range": [b_lo, b_hi], "table": table}
    ok = roundtrip < 1e-9 and max(ratios) < 1e3
    return CheckReport("factorization", -worst, tolerance, wit,
                       f"{nc} x {ni} rectangles, {len(rays)} rays", details,
                       None if ok else False)


def factorization_csv(report: CheckReport, path) -> None:
    """(alpha, b+ at the clip midpoint, c_alpha) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("alpha,b_plus,c_alpha\n")
        for a, b, c in report.details["table"]:
            fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")
