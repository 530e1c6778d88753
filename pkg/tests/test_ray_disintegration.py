import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from needlelab.catalog import entry
from needlelab.model_spaces import Point, PolarFactorization, SpaceForm
from needlelab.ray_disintegration import (RayExhausted, Resolution, disintegrate, flow_g,
                                          ray_length_reciprocal_integral, verify_mass)
from needlelab.regions import Annulus, Ball, Box, Nothing, band

PI = math.pi
RES = Resolution(rays=256, per_unit=64)


def dis(name, res=RES):
    return entry(name).disintegration(res)


def test_sphere_rays_run_between_antipodes():
    d = dis("sphere2_dp")
    r = d.rays[3]
    assert r.t_start == pytest.approx(-PI) and r.t_end == 0.0
    s2 = d.space
    assert np.allclose(r.endpoint_a, s2.antipode(s2.default_point()), atol=1e-12)
    assert np.allclose(r.endpoint_b, s2.default_point(), atol=1e-12)
    # u = d_p decreases along the flow
    assert np.allclose(d.u_of(r.point(np.array([-2.0, -1.0]))), [2.0, 1.0])


def test_flow_and_transport_map():
    from needlelab.ray_disintegration import transport_map_T
    d = dis("plane_dp")
    x = d.handle(5, -2.0)
    y = flow_g(d, x, 0.5)
    assert d.u_of(d.point(y)) == pytest.approx(d.u_of(d.point(x)) - 0.5)
    z = transport_map_T(d, x, 0.25)
    assert d.u_of(d.point(z)) == pytest.approx(1.5)
    with pytest.raises(RayExhausted):
        flow_g(d, x, 3.0)
    with pytest.raises(ValueError):
        transport_map_T(dis("plane_hyperplane"), d.handle(0, -1.0), 0.5)
    with pytest.raises(ValueError):
        transport_map_T(d, x, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.9, -0.1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_flow_semigroup(t0, a, b):
    d = dis("sphere2_dp")
    x = d.handle(7, t0)
    room = -t0
    s1, s2 = a * room / 2, b * room / 2
    lhs = flow_g(d, flow_g(d, x, s1), s2)
    rhs = flow_g(d, x, s1 + s2)
    assert lhs.t == pytest.approx(rhs.t, abs=1e-14)


@pytest.mark.parametrize("name,sets", [
    ("plane_dp", [Ball((0.0, 0.0), 2.0), Annulus((0.0, 0.0), 1.0, 3.0), Box((-1, -1), (1, 2))]),
    ("sphere2_dp", [Ball((0.0, 0.0, 1.0), 1.0), Ball((0.0, 0.0, 1.0), PI)]),
    ("cylinder_line", [band(1, -1.0, 1.0, 2), Box((PI / 2, -1.0), (PI, 0.5))]),
    ("product_line", [Box((PI / 4, -1.0), (PI / 2, 0.5))]),
    ("interval_sin_dp", [Box((0.3,), (2.0,))]),
])
def test_mass_consistency(name, sets):
    # box edges across the rays sit on cell boundaries of the default ray grid
    assert verify_mass(dis(name, Resolution()), sets) < 1e-4


def test_empty_set_has_zero_mass():
    assert verify_mass(dis("plane_dp"), [Nothing()]) == 0.0


def test_rays_are_disjoint_on_a_grid():
    d = dis("plane_dp")
    pts = np.concatenate([r.point(np.linspace(-4.5, -0.5, 9)) for r in d.rays[:64]])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1) + np.eye(len(pts))
    assert dist.min() > 1e-6


def test_reciprocal_length_oracles():
    assert float(ray_length_reciprocal_integral(dis("sphere2_dp"))) == pytest.approx(1 / PI,
                                                                                      rel=1e-12)
    # cylinder point rays have length L / (2|sin|): mean of 2|sin| / L
    got = float(ray_length_reciprocal_integral(dis("cylinder_dp")))
    assert got == pytest.approx(2 / PI ** 2, rel=1e-6)
    assert float(ray_length_reciprocal_integral(dis("plane_line"))) == 0.0


class ShrinkingRays(PolarFactorization):
    """Parallel rays of length alpha over alpha in (0, 1): int 1/alpha diverges."""

    variant = "line"
    chart = "alpha"

    def __init__(self, space):
        self.space, self.base = space, None

    def index_grid(self, n):
        return (np.arange(n)[:, None] + 0.5) / n, np.full(n, 1.0 / n)

    def u_range(self, alpha):
        a = np.asarray(alpha)[:, 0]
        return np.zeros_like(a), a.copy()


def test_reciprocal_length_divergence_detected():
    fam = ShrinkingRays(SpaceForm(2, 0.0))

    class Fake:
        family = fam

    assert not ray_length_reciprocal_integral(Fake()).is_finite


def test_empty_window_rejected():
    s = SpaceForm(2, 0.0)
    with pytest.raises(ValueError):
        disintegrate(s, Point((0.0, 0.0)), Ball((100.0, 0.0), 1.0), Resolution(rays=32))


def test_sampled_densities_match_closed_form():
    d = entry("sphere2_dp").disintegration(Resolution(rays=16, per_unit=64, sampled=401))
    r = d.rays[0]
    t = np.linspace(-2.5, -0.5, 7)
    assert not r.density.closed_form
    assert np.allclose(r.density.value(t), np.sin(-t) * 2 * PI, rtol=1e-4)
