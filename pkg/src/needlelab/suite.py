"""The acceptance battery: one function per criterion, shared by the CLI and tests.

Each criterion returns a :class:`CriterionResult` holding a verdict and
the metrics it was decided on.  Reports contain no timings or thread
counts, so they are reproducible byte for byte.
"""

from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import bochner as B
from . import cut_locus as CL
from . import laplacian as L
from . import splitting as S
from .catalog import CATALOG, PRIMARY_KIND, CatalogEntry, bump_is_nonneg, entry
from .coefficients import CurvatureDim
from .density_1d import (ClosedForm, check_cd_density, check_mcp_density, log_convolve,
                         sup_bound)
from .model_spaces import FlatCylinder, Line, ProductLine, WeightedHalfLine
from .ray_disintegration import Resolution, disintegrate
from .regions import Box, band

BUILDERS = {
    "d_p": L.laplacian_dp,
    "d_p_sq": L.laplacian_dp_squared,
    "d_v": L.laplacian_dv,
    "abs_d_v": L.laplacian_abs_dv,
    "d_v_sq": L.laplacian_dv_squared,
    "busemann": L.laplacian_busemann,
}

DEFAULT_SUITE = {
    "criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9],
    "entries": None,  # None: the whole catalog
    "resolution": {"rays": 4096, "per_unit": 256.0, "r_max": 50.0, "max_step": 0.05},
    "ibp_per_units": [32.0, 64.0, 128.0, 256.0],
    "corpus_size": 200,
    "minkowski_eps": list(CL.DEFAULT_EPS),
    "splitting_grid": [32, 32],
}

CRITERIA_NAMES = {
    1: "sphere equality case",
    2: "euclidean oracle",
    3: "cylinder singular part",
    4: "integration by parts",
    5: "minkowski bound",
    6: "1-D density suite",
    7: "bochner equivalence",
    8: "splitting pipeline",
    9: "comparison sandwich",
}


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "verdict": "pass" if self.passed else "fail",
                "metrics": _clean(self.metrics)}


@dataclass
class Context:
    config: dict
    seed: int = 0
    threads: int = 1
    tolerance_scale: float = 1.0

    @property
    def resolution(self) -> Resolution:
        return Resolution(**self.config["resolution"])

    def entries(self) -> list:
        names = self.config.get("entries")
        return list(CATALOG) if not names else [entry(n) for n in names]

    def dis(self, e: CatalogEntry):
        return e.disintegration(self.resolution)

    def tol(self, value: float) -> float:
        return value * self.tolerance_scale

    def map(self, fn, items) -> list:
        """Ordered map, threaded when threads > 1."""
        items = list(items)
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


def resolve_suite_config(cfg: dict | None) -> dict:
    """Defaults expanded; unknown keys are a config error."""
    out = copy.deepcopy(DEFAULT_SUITE)
    for k, v in (cfg or {}).items():
        if k not in out:
            raise ValueError(f"unknown suite option {k!r}")
        if k == "resolution":
            bad = set(v) - set(out["resolution"])
            if bad:
                raise ValueError(f"unknown resolution option(s) {sorted(bad)}")
            out["resolution"].update(v)
        else:
            out[k] = v
    out["criteria"] = sorted(int(c) for c in out["criteria"])
    if any(c not in CRITERIA_NAMES for c in out["criteria"]):
        raise ValueError(f"criteria must be drawn from {sorted(CRITERIA_NAMES)}")
    if out["entries"] is not None:
        for n in out["entries"]:
            entry(n)
    return out


# --------------------------------------------------------------------------
# criteria


def regular_vs_oracle(e: CatalogEntry, ctx: Context, kind: str, oracle, lo=-math.inf, hi=math.inf):
    lap = BUILDERS[kind](ctx.dis(e))
    s = lap.regular_samples()
    keep = (s["u"] >= lo) & (s["u"] <= hi)
    u, val = s["u"][keep], s["value"][keep]
    ref = np.asarray(oracle(u), dtype=float) * np.ones_like(u)
    order = np.argsort(u, kind="stable")
    err = float(np.max(np.abs(val - ref))) if u.size else math.inf
    return err, {"r": u[order], "computed": val[order], "oracle": ref[order]}


def criterion_1(ctx: Context) -> CriterionResult:
    e = entry("sphere2_dp")
    err, series = regular_vs_oracle(e, ctx, "d_p", lambda u: 1.0 / np.tan(u), 0.1, math.pi - 0.1)
    return CriterionResult(1, CRITERIA_NAMES[1], err < ctx.tol(1e-6),
                           {"max_abs_error": err, "samples": int(series["r"].size),
                            "threshold": ctx.tol(1e-6)})


def criterion_2(ctx: Context) -> CriterionResult:
    e = entry("space3_dp")
    err1, _ = regular_vs_oracle(e, ctx, "d_p", lambda u: 2.0 / u)
    err2, _ = regular_vs_oracle(e, ctx, "d_p_sq", lambda u: 6.0)
    ok = err1 < ctx.tol(1e-6) and err2 < ctx.tol(1e-6)
    return CriterionResult(2, CRITERIA_NAMES[2], ok,
                           {"d_p_max_abs_error": err1, "d_p_sq_max_abs_error": err2})


def cylinder_cut_oracle(L_: float, zmax: float, theta_p: float = 0.0) -> float:
    """TV of the singular part of Delta d_p^2 on |z| <= zmax from the universal cover.

    On the cover d^2 = min_k (theta - theta_p - k L)^2 + z^2; the singular
    part lives where the minimizing image switches (theta = theta_p + L/2)
    and its density is the jump of the normal derivative of d^2 there.
    """
    def d2(theta, z):
        k = np.arange(-2, 3)
        return float(np.min((theta - theta_p - k * L_) ** 2) + z * z)

    cut = theta_p + L_ / 2
    h = 1e-6

    def jump(z):
        left = (d2(cut - h, z) - d2(cut - 2 * h, z)) / h
        right = (d2(cut + 2 * h, z) - d2(cut + h, z)) / h
        return abs(right - left)

    val, _ = integrate.quad(jump, -zmax, zmax, epsabs=1e-12, epsrel=1e-10)
    return val


def criterion_3(ctx: Context) -> CriterionResult:
    cyl = entry("cylinder_dp")
    W = band(1, -1.0, 1.0, 2)
    tv = BUILDERS["d_p_sq"](ctx.dis(cyl), W).singular_tv(W)
    L_ = cyl.space.L
    oracle = cylinder_cut_oracle(L_, 1.0)
    rel = abs(tv - oracle) / oracle
    sph = BUILDERS["d_p_sq"](ctx.dis(entry("sphere2_dp"))).singular_tv()
    ok = rel < ctx.tol(0.01) and sph < ctx.tol(1e-8)
    return CriterionResult(3, CRITERIA_NAMES[3], ok,
                           {"cylinder_tv": tv, "cover_oracle": oracle, "relative_error": rel,
                            "sphere_singular_tv": sph})


def _ibp_rows(e: CatalogEntry, ctx: Context) -> list:
    dis = ctx.dis(e)
    rows = []
    for kind in e.kinds:
        lap = BUILDERS[kind](dis)
        for j, f in enumerate(e.bumps):
            cv = L.ibp_convergence(lap, f, per_units=tuple(ctx.config["ibp_per_units"]),
                                   threads=ctx.threads)
            rows.append({"entry": e.name, "kind": kind, "bump": j,
                         "residual": cv["residuals"][-1], "slope": cv["slope"],
                         "residuals": cv["residuals"]})
    return rows


def criterion_4(ctx: Context) -> CriterionResult:
    rows = [r for rs in ctx.map(lambda e: _ibp_rows(e, ctx), ctx.entries()) for r in rs]
    thr = ctx.tol(1e-5)
    bad = [r for r in rows if not (r["residual"] < thr and r["slope"] >= 1.8)]
    worst = max(r["residual"] for r in rows)
    slope = min(r["slope"] for r in rows)
    return CriterionResult(4, CRITERIA_NAMES[4], not bad,
                           {"pairs": len(rows), "max_residual": worst, "min_slope": slope,
                            "per_unit_ladder": ctx.config["ibp_per_units"],
                            "failures": bad[:10], "rows": rows})


def criterion_5(ctx: Context) -> CriterionResult:
    eps = tuple(ctx.config["minkowski_eps"])
    W = band(1, -1.0, 1.0, 2)
    cyl = CL.minkowski_vs_singular(ctx.dis(entry("cylinder_dp")), W, eps,
                                   slack=CL.DEFAULT_SLACK, tolerance=ctx.tol(CL.DEFAULT_TOL))
    zero = {}
    for name in ("sphere2_dp", "plane_dp", "hyperbolic2_dp"):
        dis = ctx.dis(entry(name))
        lim = CL.minkowski_series(dis, None, eps).limit_estimate
        tv = BUILDERS["d_p_sq"](dis).singular_tv()
        zero[name] = {"limit": lim, "singular_tv": tv,
                      "pass": abs(lim) < ctx.tol(1e-8) and abs(tv) < ctx.tol(1e-8)}
    ok = cyl.passed and all(z["pass"] for z in zero.values())
    return CriterionResult(5, CRITERIA_NAMES[5], ok,
                           {"cylinder": {"limit": cyl.witness["limit_estimate"],
                                         "singular_tv": cyl.witness["singular_tv"],
                                         "ratio_over_tv": cyl.details["ratio_over_tv"],
                                         "series": cyl.details["series"]},
                            "zero_cases": zero})


def one_d_battery(tolerance_scale: float = 1.0) -> list:
    """(label, expected verdict, observed verdict, detail) rows of the 1-D suite."""
    pi = math.pi
    rows = []

    def check(label, fn, h, kd, expect):
        rep = fn(h, kd)
        rep.tolerance *= tolerance_scale
        rows.append({"case": label, "expect": expect, "verdict": rep.verdict,
                     "margin": rep.worst_violation})

    for N in (2.0, 3.0, 4.0):
        s = ClosedForm("sin_pow", 0.0, pi, p=N - 1)
        check(f"sin^{N - 1:g} CD({N - 1:g},{N:g})", check_cd_density, s, CurvatureDim(N - 1, N), "pass")
        check(f"sin^{N - 1:g} MCP({N - 1:g},{N:g})", check_mcp_density, s, CurvatureDim(N - 1, N), "pass")
        check(f"x^{N - 1:g} CD(0,{N:g})", check_cd_density, ClosedForm("power", 0.0, 1.0, p=N - 1),
              CurvatureDim(0.0, N), "pass")
        check(f"cosh^{N - 1:g} CD({1 - N:g},{N:g})", check_cd_density,
              ClosedForm("cosh_pow", -2.0, 2.0, p=N - 1), CurvatureDim(1 - N, N), "pass")
        check(f"constant MCP(0,{N:g})", check_mcp_density, ClosedForm("constant", 0.0, 1.0),
              CurvatureDim(0.0, N), "pass")
    check("exp on (-20,20) MCP(0,2)", check_mcp_density, ClosedForm("exp", -20.0, 20.0),
          CurvatureDim(0.0, 2.0), "fail")
    for N in (2.0, 3.0, 5.0):
        bound, observed = sup_bound(ClosedForm("power", 0.0, 1.0, p=N - 1, c=N), CurvatureDim(0.0, N))
        ratio = observed / bound
        ok = 1 - 1e-9 * tolerance_scale <= ratio <= 1.0
        rows.append({"case": f"sup bound N x^{N - 1:g}", "expect": "pass",
                     "verdict": "pass" if ok else "fail", "margin": ratio})
    for label, h, kd, eps in (
        ("sin", ClosedForm("sin_pow", 0.0, pi, p=1.0), CurvatureDim(1.0, 2.0), 0.05),
        ("sin^2", ClosedForm("sin_pow", 0.0, pi, p=2.0), CurvatureDim(2.0, 3.0), 0.1),
        ("x", ClosedForm("power", 0.0, 1.0, p=1.0), CurvatureDim(0.0, 2.0), 0.1),
        ("cosh^2", ClosedForm("cosh_pow", -2.0, 2.0, p=2.0), CurvatureDim(-2.0, 3.0), 0.1),
    ):
        check(f"log_convolve({label}, {eps:g}) CD({kd.K:g},{kd.N:g})", check_cd_density,
              log_convolve(h, eps), kd, "pass")
    return rows


def criterion_6(ctx: Context) -> CriterionResult:
    rows = one_d_battery(ctx.tolerance_scale)
    ok = all(r["expect"] == r["verdict"] for r in rows)
    return CriterionResult(6, CRITERIA_NAMES[6], ok, {"cases": rows})


def criterion_7(ctx: Context) -> CriterionResult:
    def fwd(e):
        rep = B.bochner_forward(ctx.dis(e), e.kd, tolerance=ctx.tol(B.FORWARD_TOL))
        return {"entry": e.name, "verdict": rep.verdict, "margin": rep.worst_violation}

    rows = ctx.map(fwd, ctx.entries())
    rate = sum(r["verdict"] == "pass" for r in rows) / len(rows)
    corpus = B.random_corpus(ctx.seed, ctx.config["corpus_size"])
    conv = B.bochner_converse(corpus)
    ok = rate == 1.0 and conv.details["agreement_rate"] == 1.0
    return CriterionResult(7, CRITERIA_NAMES[7], ok,
                           {"forward_pass_rate": rate, "forward": rows,
                            "converse_agreement": conv.details["agreement_rate"],
                            "converse_size": conv.details["size"],
                            "converse_cd_pass_fraction": conv.details["cd_pass_fraction"],
                            "disagreements": conv.witness["disagreements"]})


def broken_product() -> tuple:
    """A half-line fiber times R with a z-dependent weight: not a splitting."""
    space = ProductLine(WeightedHalfLine(ClosedForm("exp", 0.0, math.inf)),
                        z_weight=ClosedForm("exp", -math.inf, math.inf, rate=0.5))
    return space, Line(x0=1.0), Box((0.5, -2.0), (2.0, 2.0))


def criterion_8(ctx: Context) -> CriterionResult:
    grid = tuple(ctx.config["splitting_grid"])
    out = {}
    ok = True
    for name in ("plane_line", "cylinder_line", "product_line"):
        e = entry(name)
        dis = ctx.dis(e)
        bz = S.check_b_zero(e.space, e.base)
        dens = S.check_constant_ray_densities(dis, tolerance=ctx.tol(S.DENSITY_TOL))
        fac = S.factorize(dis, grid, tolerance=ctx.tol(S.FACTOR_TOL))
        max_sum = -bz.worst_violation
        row = {"max_abs_b_sum": max_sum, "b_zero_tolerance": bz.tolerance,
               "truncation": bz.details["busemann"], "density_spread": dens.details["max_spread"],
               "density_verdict": dens.verdict, "factorization_residual": -fac.worst_violation,
               "factorization_verdict": fac.verdict}
        row["pass"] = (bz.passed and max_sum < ctx.tol(1e-4) and dens.passed and fac.passed)
        ok &= row["pass"]
        out[name] = row
    space, line, window = broken_product()
    bad = S.check_constant_ray_densities(disintegrate(space, line, window, ctx.resolution))
    out["broken_input"] = {"verdict": bad.verdict, "spread": bad.details["max_spread"]}
    ok &= not bad.passed
    return CriterionResult(8, CRITERIA_NAMES[8], ok, out)


def _comparison_rows(e: CatalogEntry, ctx: Context) -> list:
    dis = ctx.dis(e)
    rows = []
    for kind in e.kinds:
        rep = L.comparison_check(BUILDERS[kind](dis), e.kd, tolerance=ctx.tol(1e-6))
        rows.append({"entry": e.name, "kind": kind, "verdict": rep.verdict,
                     "margin": rep.worst_violation})
    if e.variant == "level":
        nu = L.nu_measure(dis, e.kd)
        lap = BUILDERS["d_v_sq"](dis)
        for j, f in enumerate(e.bumps):
            if not bump_is_nonneg(f):
                continue
            a = L.pairing(lap, f, threads=ctx.threads)
            b = L.pairing(nu, f, threads=ctx.threads)
            m = (b - a) / max(abs(b), 1.0)
            rows.append({"entry": e.name, "kind": "nu_domination", "bump": j,
                         "verdict": "pass" if m >= -ctx.tol(1e-6) else "fail", "margin": m,
                         "laplacian_pairing": a, "nu_pairing": b})
    return rows


def criterion_9(ctx: Context) -> CriterionResult:
    rows = [r for rs in ctx.map(lambda e: _comparison_rows(e, ctx), ctx.entries()) for r in rs]
    bad = [r for r in rows if r["verdict"] != "pass"]
    return CriterionResult(9, CRITERIA_NAMES[9], not bad,
                           {"checks": len(rows), "violations": len(bad),
                            "worst_margin": min(r["margin"] for r in rows), "rows": rows})


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run_suite(config: dict | None = None, seed: int = 0, threads: int = 1,
              tolerance_scale: float = 1.0) -> dict:
    """Run the selected criteria; returns the summary dict (deterministic)."""
    cfg = resolve_suite_config(config)
    ctx = Context(cfg, seed, max(1, int(threads)), tolerance_scale)
    # build the disintegrations up front so the criteria share them
    needed = {e.name: e for e in ctx.entries()}
    fixed = {1: ["sphere2_dp"], 2: ["space3_dp"], 3: ["cylinder_dp", "sphere2_dp"],
             5: ["cylinder_dp", "sphere2_dp", "plane_dp", "hyperbolic2_dp"],
             8: ["plane_line", "cylinder_line", "product_line"]}
    sweep = {4, 7, 9} & set(cfg["criteria"])
    wanted = dict(needed) if sweep else {}
    for c in cfg["criteria"]:
        for n in fixed.get(c, []):
            wanted[n] = entry(n)
    ctx.map(ctx.dis, wanted.values())
    results = [CRITERIA[c](ctx) for c in cfg["criteria"]]
    return {"criteria": [r.to_dict() for r in results],
            "summary": {"passed": sum(r.passed for r in results),
                        "failed": sum(not r.passed for r in results),
                        "all_passed": all(r.passed for r in results)}}


def primary_kind(e: CatalogEntry) -> str:
    return PRIMARY_KIND[e.variant]
