"""Command-line entry point: ``needlelab <command> --config run.yaml --out dir``.

Every command reads one YAML config, writes ``<command>.json`` (plus CSV
side files) into the output directory and exits 0 when every check
passes, 1 when a check fails and 2 on a configuration error.  Reports
embed the resolved config; the thread count is left out so that reports
do not depend on it.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bochner as B
from . import cut_locus as CL
from . import laplacian as L
from . import splitting as S
from . import suite as SU
from .catalog import KINDS_BY_VARIANT, PRIMARY_KIND, entry
from .coefficients import CurvatureDim, s_kappa, s_kappa_prime, sigma_coeff, tau_coeff
from .density_1d import (Grid, bochner_1d, bochner_implies_cd, check_cd_density,
                         check_mcp_density, density_from_spec, sup_bound)
from .model_spaces import Point, SpaceForm, base_from_spec, space_from_spec
from .ray_disintegration import FORMAT_VERSION, Resolution, disintegrate, export_rays, region_mass
from .regions import region_from_spec

COMMANDS = ("coeffs", "density-check", "disintegrate", "laplacian", "compare", "cutlocus",
            "bochner", "split", "suite")
SELECTORS = ("minkowski", "regular-vs-oracle")
ORACLE_RAYS = 64  # rays kept in the regular-vs-oracle series


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


GEOMETRY_DEFAULTS = {"entry": None, "space": None, "base": None, "window": None,
                     "K": None, "N": None, "resolution": {}}

DEFAULTS = {
    "coeffs": {"K": 0.0, "N": 3.0, "t": [0.0, 0.25, 0.5, 0.75, 1.0], "theta": [0.5, 1.0, 2.0]},
    "density-check": {"density": None, "K": None, "N": None,
                      "checks": ["mcp", "cd", "bochner", "bochner_implies_cd"],
                      "grid": {"n_points": 48, "n_t": 15, "window": 20.0}},
    "disintegrate": {**GEOMETRY_DEFAULTS, "samples": 33},
    "laplacian": {**GEOMETRY_DEFAULTS, "kind": None, "tolerance": 1e-6},
    "compare": {**GEOMETRY_DEFAULTS, "kinds": None, "tolerance": 1e-6},
    "cutlocus": {**GEOMETRY_DEFAULTS, "measure_window": None, "eps": list(CL.DEFAULT_EPS),
                 "slack": CL.DEFAULT_SLACK, "tolerance": CL.DEFAULT_TOL},
    "bochner": {**GEOMETRY_DEFAULTS, "mode": "both", "corpus_size": 200,
                "tolerance": B.FORWARD_TOL},
    "split": {**GEOMETRY_DEFAULTS, "grid": [32, 32]},
    "suite": copy.deepcopy(SU.DEFAULT_SUITE),
}


def resolve_config(command: str, raw: dict | None) -> dict:
    """Merge ``raw`` over the command's defaults; unknown keys are errors."""
    raw = dict(raw or {})
    if command == "suite":
        return SU.resolve_suite_config(raw)
    out = copy.deepcopy(DEFAULTS[command])
    for k, v in raw.items():
        if k not in out:
            raise ConfigError(f"unknown option {k!r} for {command}")
        out[k] = v
    if "resolution" in out:
        res = {**Resolution().__dict__, **(out["resolution"] or {})}
        bad = set(res) - set(Resolution().__dict__)
        if bad:
            raise ConfigError(f"unknown resolution option(s) {sorted(bad)}")
        out["resolution"] = res
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


class Geometry:
    """Space, base, window and CurvatureDim from a config (or a catalog entry)."""

    def __init__(self, cfg: dict):
        self.entry = None
        if cfg.get("entry"):
            self.entry = entry(cfg["entry"])
            self.space, self.base, self.window = self.entry.space, self.entry.base, self.entry.window
            kd = self.entry.kd
        else:
            if cfg.get("space") is None or cfg.get("base") is None:
                raise ConfigError("need either 'entry' or both 'space' and 'base'")
            self.space = space_from_spec(cfg["space"])
            self.base = base_from_spec(cfg["base"], self.space)
            self.window = region_from_spec(cfg.get("window"), self.space.chart_dim)
            kd = CurvatureDim(self.space.K, self.space.N)
        K = kd.K if cfg.get("K") is None else float(cfg["K"])
        N = kd.N if cfg.get("N") is None else float(cfg["N"])
        self.kd = CurvatureDim(K, N)
        self.resolution = Resolution(**cfg["resolution"])
        self._dis = None

    @property
    def dis(self):
        if self._dis is None:
            if self.entry is not None:
                self._dis = self.entry.disintegration(self.resolution)
            else:
                self._dis = disintegrate(self.space, self.base, self.window, self.resolution)
        return self._dis


# --------------------------------------------------------------------------
# commands; each returns (report body, {filename: writer})


def _coeffs(cfg, ctx):
    K, N = float(cfg["K"]), float(cfg["N"])
    rows = []
    for th in cfg["theta"]:
        for t in cfg["t"]:
            sig = sigma_coeff(K, N, float(t), float(th))
            tau = tau_coeff(K, N, float(t), float(th)) if N > 1 else None
            rows.append({"t": float(t), "theta": float(th), "sigma": float(sig),
                         "tau": None if tau is None else float(tau)})

    def write(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,theta,sigma,tau\n")
            for r in rows:
                fh.write(",".join(_fmt(r[k]) for k in ("t", "theta", "sigma", "tau")) + "\n")

    return {"checks": [], "table": rows}, {"coeffs.csv": write}


def _density_check(cfg, ctx):
    if cfg["density"] is None or cfg["K"] is None or cfg["N"] is None:
        raise ConfigError("density-check needs 'density', 'K' and 'N'")
    h = density_from_spec(cfg["density"])
    kd = CurvatureDim(float(cfg["K"]), float(cfg["N"]))
    grid = Grid(**cfg["grid"])
    runners = {
        "mcp": lambda: check_mcp_density(h, kd, grid),
        "cd": lambda: check_cd_density(h, kd, grid),
        "bochner": lambda: bochner_1d(h, kd, grid=grid),
        "bochner_implies_cd": lambda: bochner_implies_cd(h, kd, grid),
    }
    checks, extra = [], {}
    for name in cfg["checks"]:
        if name == "sup_bound":
            bound, observed = sup_bound(h, kd)
            extra["sup_bound"] = {"bound": bound, "observed": observed}
            continue
        if name not in runners:
            raise ConfigError(f"unknown density check {name!r}")
        checks.append(_scaled(runners[name](), ctx))
    return {"checks": [c.to_dict() for c in checks], **extra}, {}


def _disintegrate(cfg, ctx):
    g = Geometry(cfg)
    dis = g.dis
    body = {"rays": len(dis.rays), "active_rays": len(dis.active()),
            "q_total": float(sum(r.weight for r in dis.rays)),
            "rays_with_initial_point": sum(r.has_a for r in dis.rays),
            "rays_with_final_point": sum(r.has_b for r in dis.rays), "checks": []}
    try:
        oracle = g.space.reference_measure(g.window)
    except NotImplementedError:
        oracle = None
    if oracle is not None and math.isfinite(oracle) and oracle > 0:
        got = region_mass(dis, g.window)
        body["window_mass"] = {"disintegrated": got, "reference": oracle,
                               "relative_error": abs(got - oracle) / oracle}
    return body, {"rays.csv": lambda p: export_rays(dis, p, int(cfg["samples"]))}


def _model_oracle(g: Geometry, kind: str):
    """Closed-form regular part, when one is known independently of the engine."""
    if g.entry is not None and kind == PRIMARY_KIND[g.entry.variant]:
        return g.entry.oracle
    if isinstance(g.space, SpaceForm) and isinstance(g.base, Point):
        k, n = g.space.kappa, g.space.N

        def first(u):
            u = np.asarray(u, dtype=float)
            return (n - 1) * np.asarray(s_kappa_prime(k, u)) / np.asarray(s_kappa(k, u))

        if kind == "d_p":
            return first
        if kind == "d_p_sq":
            return lambda u: 2.0 + 2.0 * np.asarray(u) * first(u)
    return None


def _laplacian(cfg, ctx):
    g = Geometry(cfg)
    dis = g.dis
    kind = cfg["kind"] or PRIMARY_KIND[dis.variant]
    if kind not in SU.BUILDERS:
        raise ConfigError(f"unknown Laplacian kind {kind!r}")
    lap = SU.BUILDERS[kind](dis)
    s = lap.regular_samples()
    body = {"kind": kind, "decomposition": lap.decomposition(), "atoms": len(lap.atoms_raw),
            "checks": []}
    files = {}

    def write_regular(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("ray,t,u,value\n")
            for r, t, u, v in zip(s["ray"], s["t"], s["u"], s["value"]):
                fh.write(f"{int(r)},{t:.17g},{u:.17g},{v:.17g}\n")

    files["regular.csv"] = write_regular
    oracle = _model_oracle(g, kind)
    if oracle is not None:
        ref = np.asarray(oracle(s["u"]), dtype=float) * np.ones_like(s["u"])
        err = float(np.max(np.abs(s["value"] - ref))) if s["u"].size else 0.0
        from .density_1d import CheckReport
        rep = CheckReport("regular_vs_oracle", -err, cfg["tolerance"], {},
                          "64 midpoints per active ray", {"max_abs_error": err})
        body["checks"].append(_scaled(rep, ctx).to_dict())
        keep_rays = np.unique(s["ray"])
        keep_rays = keep_rays[np.unique(np.linspace(0, keep_rays.size - 1, ORACLE_RAYS).astype(int))]
        mask = np.isin(s["ray"], keep_rays)
        order = np.lexsort((s["ray"][mask], s["u"][mask]))
        body["series"] = {"regular-vs-oracle": {
            "columns": ["r", "computed", "oracle"],
            "rows": np.column_stack([s["u"][mask][order], s["value"][mask][order],
                                     ref[mask][order]]).tolist()}}
    return body, files


def _compare(cfg, ctx):
    g = Geometry(cfg)
    dis = g.dis
    kinds = cfg["kinds"] or list(KINDS_BY_VARIANT[dis.variant])
    checks = []
    for kind in kinds:
        if kind not in SU.BUILDERS:
            raise ConfigError(f"unknown Laplacian kind {kind!r}")
        checks.append(_scaled(L.comparison_check(SU.BUILDERS[kind](dis), g.kd,
                                                 tolerance=cfg["tolerance"]), ctx))
    body = {"checks": [c.to_dict() for c in checks]}
    if dis.variant == "level" and g.entry is not None:
        rows = [r for r in SU._comparison_rows(g.entry, _suite_ctx(ctx, cfg))
                if r["kind"] == "nu_domination"]
        body["nu_domination"] = rows
        body["nu_domination_pass"] = all(r["verdict"] == "pass" for r in rows)
    return body, {}


def _cutlocus(cfg, ctx):
    g = Geometry(cfg)
    dis = g.dis
    W = region_from_spec(cfg["measure_window"], g.space.chart_dim) if cfg["measure_window"] else None
    eps = tuple(float(e) for e in cfg["eps"])
    rep = _scaled(CL.minkowski_vs_singular(dis, W, eps, float(cfg["slack"]),
                                           float(cfg["tolerance"])), ctx)
    series = rep.details["series"]
    body = {"checks": [rep.to_dict()],
            "series": {"minkowski": {"columns": ["eps", "ratio"],
                                     "rows": [[e, r] for e, r in zip(series["eps"], series["ratio"])]}}}
    return body, {}


def _bochner(cfg, ctx):
    mode = cfg["mode"]
    if mode not in ("forward", "converse", "both"):
        raise ConfigError(f"unknown bochner mode {mode!r}")
    body, files, checks = {}, {}, []
    if mode in ("forward", "both"):
        g = Geometry(cfg)
        rep = _scaled(B.bochner_forward(g.dis, g.kd, tolerance=float(cfg["tolerance"])), ctx)
        checks.append(rep)
        files["bochner_per_ray.csv"] = lambda p: B.per_ray_csv(rep, p)
    if mode in ("converse", "both"):
        conv = B.bochner_converse(B.random_corpus(ctx["seed"], int(cfg["corpus_size"])))
        checks.append(conv)
    body["checks"] = [c.to_dict() for c in checks]
    return body, files


def _split(cfg, ctx):
    g = Geometry(cfg)
    if g.dis.variant != "line":
        raise ConfigError("split needs a line base")
    bz = _scaled(S.check_b_zero(g.space, g.base), ctx)
    dens = _scaled(S.check_constant_ray_densities(g.dis), ctx)
    fac = _scaled(S.factorize(g.dis, tuple(cfg["grid"])), ctx)
    table = fac.details.pop("table")
    body = {"checks": [bz.to_dict(), dens.to_dict(), fac.to_dict()]}

    def write(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("alpha,b_plus,c_alpha\n")
            for a, b, c in table:
                fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")

    return body, {"factorization.csv": write}


def _suite(cfg, ctx):
    res = SU.run_suite(cfg, ctx["seed"], ctx["threads"], ctx["tolerance_scale"])
    body = {**res, "checks": [{"name": f"criterion {c['id']}: {c['name']}",
                               "verdict": c["verdict"]} for c in res["criteria"]]}
    return body, {}


def _suite_ctx(ctx, cfg):
    scfg = SU.resolve_suite_config({"resolution": {k: cfg["resolution"][k] for k in
                                                   SU.DEFAULT_SUITE["resolution"]}})
    return SU.Context(scfg, ctx["seed"], ctx["threads"], ctx["tolerance_scale"])


RUNNERS = {"coeffs": _coeffs, "density-check": _density_check, "disintegrate": _disintegrate,
           "laplacian": _laplacian, "compare": _compare, "cutlocus": _cutlocus,
           "bochner": _bochner, "split": _split, "suite": _suite}


def _scaled(rep, ctx):
    rep.tolerance = rep.tolerance * ctx["tolerance_scale"]
    return rep


def _fmt(v) -> str:
    if v is None:
        return ""
    return "inf" if v == math.inf else f"{float(v):.17g}"


# --------------------------------------------------------------------------
# reports


def run(command: str, raw_config: dict | None, seed: int = 0, threads: int = 1,
        tolerance_scale: float = 1.0) -> tuple[int, dict, dict]:
    """(exit status, report, side files) for one command."""
    if command not in RUNNERS:
        raise ConfigError(f"unknown command {command!r}")
    ctx = {"seed": int(seed), "threads": max(1, int(threads)),
           "tolerance_scale": float(tolerance_scale)}
    report = {"format_version": FORMAT_VERSION, "command": command, "seed": int(seed),
              "tolerance_scale": float(tolerance_scale)}
    try:
        cfg = resolve_config(command, raw_config)
        report["config"] = cfg
        body, files = RUNNERS[command](cfg, ctx)
    except (ConfigError, ValueError, KeyError, TypeError, NotImplementedError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        report["error"] = {"type": "config_error", "exception": type(exc).__name__,
                           "message": f"missing key {msg!r}" if isinstance(exc, KeyError) else msg}
        report["status"] = 2
        return 2, report, {}
    report.update(body)
    failed = [c["name"] for c in body.get("checks", []) if c.get("verdict") == "fail"]
    if body.get("nu_domination_pass") is False:
        failed.append("nu_domination")
    report["failed_checks"] = failed
    report["status"] = 1 if failed else 0
    return report["status"], report, files


def report_json(report: dict) -> str:
    return json.dumps(SU._clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_plot_series(report: dict, selector: str, out_dir) -> Path:
    """Write a selected series of a report as CSV (header row, 17 significant digits)."""
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}; known: {list(SELECTORS)}")
    series = report.get("series", {}).get(selector)
    if series is None:
        raise ValueError(f"report has no {selector!r} series")
    path = Path(out_dir) / f"{selector}.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(series["columns"]) + "\n")
        for row in series["rows"]:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("NEEDLELAB_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"NEEDLELAB_THREADS must be an integer, got {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="needlelab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized corpora")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $NEEDLELAB_THREADS or 1)")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every check tolerance by this factor")
    p.add_argument("--plot", action="append", default=[], choices=SELECTORS,
                   help="also write the selected plot series as CSV")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        threads = _threads(args.threads)
        status, report, files = run(args.command, load_config(args.config), args.seed,
                                    threads, args.tolerance_scale)
    except ConfigError as exc:
        status, files = 2, {}
        report = {"format_version": FORMAT_VERSION, "command": args.command, "status": 2,
                  "error": {"type": "config_error", "exception": "ConfigError",
                            "message": str(exc)}}
    name = args.command.replace("-", "_")
    (out / f"{name}.json").write_text(report_json(report), encoding="utf-8")
    for fname, write in files.items():
        write(out / fname)
    for sel in args.plot:
        try:
            emit_plot_series(report, sel, out)
        except ValueError as exc:
            print(f"needlelab: {exc}", file=sys.stderr)
            status = max(status, 2)
    if status == 2:
        print(f"needlelab: {report['error']['message'] if 'error' in report else 'plot error'}",
              file=sys.stderr)
    else:
        summary = "all checks passed" if status == 0 else f"failed: {', '.join(report['failed_checks'])}"
        print(f"needlelab {args.command}: {summary}")
    return status


if __name__ == "__main__":
    sys.exit(main())
