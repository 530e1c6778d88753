import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from needlelab.catalog import entry
from needlelab.cut_locus import (MinkowskiSeries, endpoint_tv_bound, minkowski_ratio,
                                 minkowski_series, minkowski_vs_singular, richardson,
                                 transport_complement_mass)
from needlelab.ray_disintegration import Resolution
from needlelab.regions import Box, band

RES = Resolution(rays=256, per_unit=64)


def dis(name, res=RES):
    return entry(name).disintegration(res)


@settings(max_examples=50)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_richardson_exact_on_quadratics(L, c1, c2):
    eps = 2.0 ** -np.arange(3, 8)
    vals = L + c1 * eps + c2 * eps ** 2
    assert richardson(eps, vals) == pytest.approx(L, abs=1e-9 * (1 + abs(c1) + abs(c2)))


def test_richardson_edge_cases():
    assert richardson([], []) == 0.0
    assert richardson([0.5], [3.0]) == 3.0
    assert richardson([0.5, 0.25], [2.0, 1.5]) == 1.0
    with pytest.raises(ValueError):
        richardson([0.5, 0.3, 0.1], [1, 2, 3])


def test_series_validation():
    with pytest.raises(ValueError):
        MinkowskiSeries((0.1, 0.2), (1.0, 1.0), {}, 1.0)
    with pytest.raises(ValueError):
        MinkowskiSeries((0.2, 0.1), (1.0, -1.0), {}, 1.0)


def test_weighted_interval_limit_is_exact():
    # [3 - 3 eps, 3] under x^2 dx: ratio = 27 - 27 eps + 9 eps^2
    d = dis("interval_power_dp")
    for e in (0.5, 0.1, 0.01):
        assert minkowski_ratio(d, None, e) == pytest.approx(27 - 27 * e + 9 * e * e, rel=1e-12)
    rep = minkowski_vs_singular(d)
    assert rep.witness["limit_estimate"] == pytest.approx(27.0, rel=1e-12)
    assert rep.witness["singular_tv"] == pytest.approx(54.0, rel=1e-12)
    assert rep.passed


def test_cylinder_is_strict_by_factor_two():
    rep = minkowski_vs_singular(dis("cylinder_dp", Resolution(rays=1024, per_unit=64)))
    assert rep.passed
    assert rep.details["ratio_over_tv"] == pytest.approx(0.5, abs=1e-6)


def test_sphere_has_no_cut_content():
    rep = minkowski_vs_singular(dis("sphere2_dp"))
    assert rep.passed
    assert abs(rep.witness["limit_estimate"]) < 1e-8


def test_window_monotonicity():
    d = dis("cylinder_dp")
    small = band(1, -0.5, 0.5, 2)
    big = band(1, -1.0, 1.0, 2)
    for e in (0.25, 0.05):
        assert (transport_complement_mass(d, small, e)[0]
                <= transport_complement_mass(d, big, e)[0] + 1e-14)


def test_complement_saturates_at_total_mass():
    d = dis("sphere2_dp")
    m, excluded = transport_complement_mass(d, None, 1 - 1e-12)
    assert m == pytest.approx(4 * math.pi, rel=1e-6) and excluded == 0.0
    with pytest.raises(ValueError):
        transport_complement_mass(d, None, 1.0)
    with pytest.raises(ValueError):
        minkowski_series(dis("plane_hyperplane"))


def test_series_csv(tmp_path):
    s = minkowski_series(dis("interval_power_dp"), eps_sequence=(0.5, 0.25, 0.125))
    s.to_csv(tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "eps,ratio" and len(rows) == 4


def test_endpoint_tv_bound_on_strip():
    # rays of the hyperplane distance enter the box along a full edge of length 6
    rep = endpoint_tv_bound(dis("plane_hyperplane"))
    assert rep.passed
    assert rep.witness["tv"] == pytest.approx(6.0, rel=1e-12)
    assert rep.witness["liminf_estimate"] == pytest.approx(6.0, rel=1e-10)
    assert endpoint_tv_bound(dis("interval_power_dp")).witness["tv"] == pytest.approx(9.0)
