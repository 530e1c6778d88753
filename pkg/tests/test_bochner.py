import math

import pytest

from needlelab.bochner import (BochnerSample, bochner_converse, bochner_forward, corpus_bases,
                               per_ray_csv, random_corpus)
from needlelab.catalog import entry
from needlelab.coefficients import CurvatureDim
from needlelab.density_1d import ClosedForm
from needlelab.ray_disintegration import Resolution

RES = Resolution(rays=256, per_unit=64)
SMALL = BochnerSample(rays=8, points=12)


@pytest.mark.parametrize("name", ["sphere2_dp", "hyperbolic2_dp", "plane_circle",
                                  "sphere_equator", "cylinder_line", "interval_cosh_level"])
def test_forward_holds_on_catalog(name):
    e = entry(name)
    rep = bochner_forward(e.disintegration(RES), e.kd, SMALL)
    assert rep.passed, rep.witness


def test_forward_sphere_is_sharp():
    e = entry("sphere2_dp")
    rep = bochner_forward(e.disintegration(RES), e.kd, SMALL)
    # sin is an equality case: the margin sits at roundoff
    assert abs(rep.worst_violation) < 1e-9


def test_forward_detects_wrong_curvature():
    e = entry("sphere2_dp")
    rep = bochner_forward(e.disintegration(RES), CurvatureDim(1.5, 2.0), SMALL)
    assert not rep.passed
    assert rep.witness["t"] > 0


def test_per_ray_csv(tmp_path):
    e = entry("plane_circle")
    rep = bochner_forward(e.disintegration(RES), e.kd, SMALL)
    per_ray_csv(rep, tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "ray,worst_margin" and len(rows) == len(rep.details["per_ray_worst"]) + 1


def test_converse_agrees_on_bases():
    rep = bochner_converse(corpus_bases())
    assert rep.passed and rep.details["agreement_rate"] == 1.0
    assert 0 < rep.details["cd_pass_fraction"] <= 1


def test_converse_bare_densities():
    rep = bochner_converse([ClosedForm("power", 0, 1, p=1.0), ClosedForm("power", 0, 1, p=2.0)],
                           CurvatureDim(0, 2))
    assert rep.passed
    assert [r["cd"] for r in rep.details["rows"]] == ["pass", "fail"]
    with pytest.raises(ValueError):
        bochner_converse([ClosedForm("constant", 0, 1)])


def test_random_corpus_is_seeded():
    a = random_corpus(7, 40)
    b = random_corpus(7, 40)
    c = random_corpus(8, 40)
    assert len(a) >= 40
    assert [x[0] for x in a] == [x[0] for x in b]
    assert a[-1][1].value(0.3) == b[-1][1].value(0.3) != c[-1][1].value(0.3)


def test_converse_agrees_on_random_corpus():
    rep = bochner_converse(random_corpus(3, 32))
    assert rep.passed, rep.witness
    assert not math.isnan(rep.details["cd_pass_fraction"])
