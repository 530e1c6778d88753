"""Acceptance battery: one printed PASS/FAIL line per criterion.

Criteria 1-9 run through the suite's criterion functions at the default
resolution; criterion 10 runs the ``suite`` command twice with different
thread counts and compares the report bytes.
"""

import json
import subprocess
import sys
import time

import pytest
import yaml

from needlelab import suite as SU

# wall-clock budgets (seconds), where the criterion states one
BUDGET = {1: 5.0, 2: 5.0, 3: 30.0, 6: 60.0}


@pytest.fixture(scope="module")
def ctx():
    return SU.Context(SU.resolve_suite_config(None), seed=0, threads=1)


def report(capsys, cid, passed, summary):
    line = f"criterion {cid:>2} [{SU.CRITERIA_NAMES.get(cid, 'determinism')}]: " \
           f"{'PASS' if passed else 'FAIL'}  {summary}"
    with capsys.disabled():
        print("\n" + line)


def _summary(metrics: dict) -> str:
    keys = [k for k, v in metrics.items() if isinstance(v, (int, float, bool, str))]
    return ", ".join(f"{k}={metrics[k]:.3g}" if isinstance(metrics[k], float)
                     else f"{k}={metrics[k]}" for k in keys[:6])


@pytest.mark.parametrize("cid", [1, 2, 3, 6, 5, 8, 7, 9, 4])
def test_criterion(ctx, capsys, cid):
    t0 = time.perf_counter()
    res = SU.CRITERIA[cid](ctx)
    elapsed = time.perf_counter() - t0
    budget = BUDGET.get(cid)
    in_budget = budget is None or elapsed < budget
    passed = res.passed and in_budget
    extra = f"time={elapsed:.1f}s" + (f" (budget {budget:g}s)" if budget else "")
    report(capsys, cid, passed, f"{extra}; {_summary(SU._clean(res.metrics))}")
    assert res.passed, json.dumps(SU._clean(res.metrics), default=str)[:2000]
    assert in_budget, f"criterion {cid} took {elapsed:.1f}s > {budget}s"


def test_criterion_10_determinism(tmp_path, capsys):
    cfg = {"criteria": [1, 4, 7, 9],
           "entries": ["sphere2_dp", "plane_circle", "cylinder_line", "interval_sin_level"],
           "corpus_size": 24,
           "resolution": {"rays": 512, "per_unit": 64},
           "ibp_per_units": [16, 32, 64]}
    (tmp_path / "suite.yaml").write_text(yaml.safe_dump(cfg))
    outputs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        proc = subprocess.run([sys.executable, "-m", "needlelab.cli", "suite",
                               "--config", str(tmp_path / "suite.yaml"), "--seed", "11",
                               "--threads", str(threads), "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode in (0, 1), proc.stderr
        outputs.append((out / "suite.json").read_bytes())
    same = outputs[0] == outputs[1]
    report(capsys, 10, same, f"threads 1 vs 4, {len(outputs[0])} bytes, identical={same}")
    assert same
