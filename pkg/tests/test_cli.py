import csv
import json
import math

import pytest
import yaml

from needlelab import cli


def run_cli(tmp_path, command, config=None, *extra):
    args = [command, "--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(config))
        args += ["--config", str(path)]
    status = cli.main(args + list(extra))
    report = json.loads((tmp_path / f"{command.replace('-', '_')}.json").read_text())
    return status, report


def test_coeffs_flat_sigma_is_t(tmp_path):
    status, rep = run_cli(tmp_path, "coeffs", {"K": 0.0, "N": 3.0, "theta": [1.0]})
    assert status == 0 and rep["status"] == 0
    with open(tmp_path / "coeffs.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        assert float(r["sigma"]) == pytest.approx(float(r["t"]), abs=1e-15)


def test_density_check_pass_and_fail(tmp_path):
    ok = {"density": {"kind": "sin_pow", "interval": [0, math.pi], "p": 1}, "K": 1, "N": 2}
    status, rep = run_cli(tmp_path, "density-check", ok)
    assert status == 0 and all(c["verdict"] == "pass" for c in rep["checks"])
    bad = {"density": {"kind": "exp", "interval": [-20, 20]}, "K": 0, "N": 2, "checks": ["mcp"]}
    status, rep = run_cli(tmp_path, "density-check", bad)
    assert status == 1 and rep["failed_checks"] == ["mcp_density"]


def test_config_errors_exit_2(tmp_path):
    status, rep = run_cli(tmp_path, "disintegrate", {"space": {"kind": "Torus"},
                                                     "base": {"variant": "point"}})
    assert status == 2 and rep["error"]["type"] == "config_error"
    status, rep = run_cli(tmp_path, "coeffs", {"bogus": 1})
    assert status == 2
    status, rep = run_cli(tmp_path, "coeffs", {"K": 1.0, "N": 2.0, "t": [1.5]})
    assert status == 2
    assert cli.main(["coeffs", "--out", str(tmp_path), "--seed", "-1"]) == 2


def test_laplacian_sphere(tmp_path):
    cfg = {"entry": "sphere2_dp", "resolution": {"rays": 128, "per_unit": 32}}
    status, rep = run_cli(tmp_path, "laplacian", cfg, "--plot", "regular-vs-oracle")
    assert status == 0
    (check,) = [c for c in rep["checks"] if c["name"] == "regular_vs_oracle"]
    assert check["details"]["max_abs_error"] < 1e-10
    rows = (tmp_path / "regular-vs-oracle.csv").read_text().splitlines()
    assert len(rows) > 1


def test_plot_selector_absent(tmp_path):
    status, _ = run_cli(tmp_path, "coeffs", None, "--plot", "minkowski")
    assert status == 2
    with pytest.raises(ValueError):
        cli.emit_plot_series({"series": {}}, "histogram", tmp_path)


def test_split_and_cutlocus(tmp_path):
    status, rep = run_cli(tmp_path, "split", {"entry": "cylinder_line", "grid": [4, 4],
                                              "resolution": {"rays": 128, "per_unit": 32}})
    assert status == 0 and (tmp_path / "factorization.csv").exists()
    status, rep = run_cli(tmp_path, "cutlocus", {"entry": "interval_power_dp",
                                                 "eps": [0.5, 0.25, 0.125]},
                          "--plot", "minkowski")
    assert status == 0 and (tmp_path / "minkowski.csv").exists()


def test_threads_env(monkeypatch):
    monkeypatch.setenv("NEEDLELAB_THREADS", "3")
    assert cli._threads(None) == 3
    assert cli._threads(2) == 2
    monkeypatch.setenv("NEEDLELAB_THREADS", "x")
    with pytest.raises(cli.ConfigError):
        cli._threads(None)


def test_report_is_deterministic_json():
    s1, r1, _ = cli.run("coeffs", {"K": -1.0, "N": 2.0})
    s2, r2, _ = cli.run("coeffs", {"K": -1.0, "N": 2.0})
    assert cli.report_json(r1) == cli.report_json(r2)
