"""Bochner inequality along rays, both directions.

Forward: on a disintegration of a CD(K,N) space, every ray density h
satisfies the integrated one-dimensional Bochner inequality

    Delta u(g_t x) - Delta u(x) >= K t + 1/(N-1) int_0^t (Delta u)^2(g_s x) ds,

with Delta u = -(log h)' along the ray.  Converse: on a corpus of 1-D
densities, passing the Bochner scan and passing the CD scan agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CurvatureDim
from .density_1d import (ClosedForm, CheckReport, Density1D, Grid, Perturbed,
                         bochner_implies_cd, bochner_terms)
from .ray_disintegration import Disintegration

FORWARD_TOL = 1e-6
# amplitudes of the random log-perturbations in the converse corpus
AMPLITUDES = (0.01, 0.1, 0.5)
MODES = 4


@dataclass(frozen=True)
class BochnerSample:
    """Which rays and points the forward check visits.

    ``rays`` evenly spaced active rays; on each same-side piece of the
    window clip, ``points`` nodes kept at least one node spacing away from
    the piece's ends, and every ordered pair (x, x + t), t > 0.
    """

    rays: int = 32
    points: int = 24
    panels: int = 8

    def describe(self) -> str:
        return (f"{self.rays} rays, {self.points} nodes per ray piece, all forward pairs, "
                f"GL {self.panels}x16 for the square integral")


def _pieces(dis: Disintegration, ray) -> list:
    t0, t1 = ray.clip
    if dis.variant == "level" and t0 < 0.0 < t1:
        # x and g_t x must stay on one side of {v = 0}
        return [(t0, 0.0), (0.0, t1)]
    return [(t0, t1)]


def _sample_rays(dis: Disintegration, n: int) -> list:
    active = dis.active()
    if len(active) <= n:
        return active
    idx = np.unique(np.round(np.linspace(0, len(active) - 1, n)).astype(int))
    return [active[i] for i in idx]


def bochner_forward(dis: Disintegration, kd: CurvatureDim, sample: BochnerSample | None = None,
                    tolerance: float = FORWARD_TOL) -> CheckReport:
    """Worst relative margin (lhs - rhs) / max(|rhs|, 1) over sampled rays and pairs."""
    sample = sample or BochnerSample()
    worst, wit = math.inf, {}
    per_ray = []
    pairs = 0
    for r in _sample_rays(dis, sample.rays):
        ray_worst = math.inf
        for lo, hi in _pieces(dis, r):
            cell = (hi - lo) / (sample.points + 1)
            xs = lo + cell * np.arange(1, sample.points + 1)
            i, j = np.triu_indices(xs.size, k=1)
            x, t = xs[i], xs[j] - xs[i]
            lhs, rhs = bochner_terms(r.density, kd, x, t, panels=sample.panels)
            margin = (lhs - rhs) / np.maximum(np.abs(rhs), 1.0)
            margin = np.where(np.isnan(margin), -np.inf, margin)
            k = int(np.argmin(margin))
            pairs += margin.size
            ray_worst = min(ray_worst, float(margin[k]))
            if margin[k] < worst:
                worst = float(margin[k])
                wit = {"ray": r.index, "x": float(x[k]), "t": float(t[k]),
                       "lhs": float(lhs[k]), "rhs": float(rhs[k])}
        per_ray.append((r.index, ray_worst))
    if not per_ray:
        raise ValueError("no active rays to sample")
    return CheckReport("bochner_forward", worst, tolerance, wit,
                       sample.describe() + f", {pairs} pairs",
                       {"K": kd.K, "N": kd.N, "per_ray_worst": per_ray})


def per_ray_csv(report: CheckReport, path) -> None:
    """Write the forward report's per-ray worst margins as CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ray,worst_margin\n")
        for idx, m in report.details["per_ray_worst"]:
            fh.write(f"{int(idx)},{m:.17g}\n")


# --------------------------------------------------------------------------
# converse


def corpus_bases() -> list:
    """Named (density, CurvatureDim) pairs: equality cases and cases with slack."""
    pi = math.pi
    return [
        ("sin_N2", ClosedForm("sin_pow", 0.0, pi, p=1.0), CurvatureDim(1.0, 2.0)),
        ("sin_N3", ClosedForm("sin_pow", 0.0, pi, p=2.0), CurvatureDim(2.0, 3.0)),
        ("sin_N3_flat", ClosedForm("sin_pow", 0.0, pi, p=2.0), CurvatureDim(0.0, 3.0)),
        ("power_N3", ClosedForm("power", 0.0, 3.0, p=2.0), CurvatureDim(0.0, 3.0)),
        ("power_half", ClosedForm("power", 0.0, 3.0, p=1.0), CurvatureDim(-1.0, 3.0)),
        ("cosh_N3", ClosedForm("cosh_pow", -2.0, 2.0, p=2.0), CurvatureDim(-2.0, 3.0)),
        ("constant", ClosedForm("constant", 0.0, 2.0), CurvatureDim(-1.0, 2.0)),
        ("exp", ClosedForm("exp", 0.0, 2.0), CurvatureDim(-3.0, 2.0)),
    ]


def random_corpus(seed: int, size: int = 200, amplitudes=AMPLITUDES, modes: int = MODES) -> list:
    """Catalog bases plus seeded log-perturbations at each amplitude.

    Returns (name, density, CurvatureDim) triples; log h = log h0 +
    a sum_k c_k sin(k pi (x - a) / D) with c_k ~ N(0, 1) / k^2.
    """
    bases = corpus_bases()
    per = max(1, math.ceil((size - len(bases)) / (len(amplitudes) * len(bases))))
    rng = np.random.default_rng(seed)
    out = [(name, h, kd) for name, h, kd in bases]
    for name, h, kd in bases:
        for a in amplitudes:
            for j in range(per):
                c = rng.standard_normal(modes) / np.arange(1, modes + 1) ** 2
                out.append((f"{name}~a{a:g}#{j}", Perturbed(h, a, c), kd))
    return out


def bochner_converse(corpus, kd: CurvatureDim | None = None, grid: Grid | None = None,
                     tolerance: float | None = None) -> CheckReport:
    """Agreement of the Bochner scan with the CD scan over a density corpus.

    Items may be densities (checked against ``kd``) or (name, density, kd)
    triples.  Margin is 0 at full agreement and minus the disagreement
    fraction otherwise.
    """
    rows = []
    for i, item in enumerate(corpus):
        if isinstance(item, Density1D):
            if kd is None:
                raise ValueError("bare densities need a CurvatureDim")
            name, h, k = f"density#{i}", item, kd
        else:
            name, h, k = item
        rep = bochner_implies_cd(h, k, grid, tolerance)
        rows.append({"name": name, "agree": rep.passed,
                     "bochner": rep.details["bochner_verdict"], "cd": rep.details["cd_verdict"],
                     "bochner_margin": rep.details["bochner_margin"],
                     "cd_margin": rep.details["cd_margin"]})
    n = len(rows)
    bad = [r["name"] for r in rows if not r["agree"]]
    passing = sum(r["cd"] == "pass" for r in rows)
    return CheckReport(
        "bochner_converse", -len(bad) / n if n else 0.0, 0.0,
        witness={"disagreements": bad[:10]},
        grid_spec=f"per density: {(grid or Grid()).n_points} points, {(grid or Grid()).n_t} t",
        details={"size": n, "agreement_rate": (n - len(bad)) / n if n else 1.0,
                 "cd_pass_fraction": passing / n if n else 0.0, "rows": rows})
