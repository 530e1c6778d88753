import math

import numpy as np
import pytest

from needlelab.catalog import entry
from needlelab.model_spaces import FlatCylinder, Line, SpaceForm
from needlelab.ray_disintegration import Resolution, disintegrate
from needlelab.splitting import (busemann, certify_truncation, check_b_zero,
                                 check_constant_ray_densities, default_samples, factorization_csv,
                                 factorize)
from needlelab.suite import broken_product

RES = Resolution(rays=256, per_unit=64)


def test_busemann_example():
    e2 = SpaceForm(2, 0.0)
    line = Line()
    v, gap = busemann(e2, line, np.array([3.0, 4.0]), 1e4)
    # b+ (3, 4) = -3, with O(|y|^2 / T) truncation error
    assert v == pytest.approx(-3.0, abs=1e-3) and gap < 1e-3
    v, _ = busemann(e2, line, np.array([3.0, 4.0]), 1e4, sign=-1)
    assert v == pytest.approx(3.0, abs=1e-3)


def test_busemann_on_cylinder_is_exact():
    cyl = FlatCylinder()
    v, gap = busemann(cyl, Line(), np.array([1.0, 0.7]), 64.0)
    # the theta offset contributes O(1 / T)
    assert v == pytest.approx(-0.7, abs=1e-2) and gap < 1e-2


def test_default_samples_shape():
    e = entry("product_line")
    s = default_samples(e.space, e.base)
    assert s.shape == (64, 2)
    with pytest.raises(ValueError):
        default_samples(SpaceForm(2, 1.0), Line())


def test_truncation_schedule():
    e = entry("plane_line")
    f = certify_truncation(e.space, e.base)
    assert f.T >= 16 and f.T <= 1e6
    assert math.log2(f.T / 16) == int(math.log2(f.T / 16))
    f2 = certify_truncation(e.space, e.base, gap_tol=1e-2)
    assert f2.converged and f2.T < f.T


@pytest.mark.parametrize("name", ["plane_line", "cylinder_line", "product_line"])
def test_splitting_examples(name):
    e = entry(name)
    d = e.disintegration(RES)
    assert check_b_zero(e.space, e.base).passed
    assert check_constant_ray_densities(d).passed
    rep = factorize(d, grid=(8, 8))
    assert rep.passed, rep.witness
    assert rep.details["injectivity_roundtrip"] < 1e-9


def test_broken_product_fails():
    space, line, window = broken_product()
    d = disintegrate(space, line, window, RES)
    rep = check_constant_ray_densities(d)
    assert not rep.passed and rep.worst_violation < -1.0


def test_factorization_csv(tmp_path):
    e = entry("cylinder_line")
    rep = factorize(e.disintegration(RES), grid=(4, 4))
    factorization_csv(rep, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) > 1 and "-0," not in "\n".join(lines)
