import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from needlelab.catalog import CATALOG, _sphere_point
from needlelab.density_1d import ClosedForm
from needlelab.model_spaces import (FlatCylinder, LevelSet, Line, Point, ProductLine, SpaceForm,
                                    WeightedHalfLine, WeightedInterval, base_from_spec,
                                    cut_locus_description, polar_factorization, space_from_spec)
from needlelab.regions import Annulus, Ball, Box, Everything

PI = math.pi


def test_sphere_distances():
    s2 = SpaceForm(2, 1.0)
    p = s2.default_point()
    assert s2.distance(p, s2.antipode(p)) == pytest.approx(PI, abs=1e-15)
    q = np.array(_sphere_point(s2, 1e-9))
    assert s2.distance(p, q) == pytest.approx(1e-9, rel=1e-6)
    q = np.array(_sphere_point(s2, PI - 1e-9))
    assert s2.distance(p, q) == pytest.approx(PI - 1e-9, abs=1e-12)
    s3 = SpaceForm(3, 2.0)
    assert s3.R == pytest.approx(1.0) and s3.diameter == pytest.approx(PI)


def test_hyperbolic_distance_matches_acosh():
    h2 = SpaceForm(2, -1.0)
    p = h2.default_point()
    for r in (1e-6, 0.5, 3.0, 10.0):
        q = np.array(_sphere_point(h2, r, 0.7))
        assert h2.distance(p, q) == pytest.approx(r, rel=1e-10)
    with pytest.raises(ValueError):
        h2.distance(p, np.array([0.0, 0.0, -1.0]))


def test_cylinder_distance():
    c = FlatCylinder(2 * PI)
    assert c.distance((0.1, 0.0), (2 * PI - 0.1, 0.0)) == pytest.approx(0.2)
    assert c.distance((0.0, 0.0), (PI, 1.0)) == pytest.approx(math.hypot(PI, 1.0))


def test_ball_volumes():
    assert SpaceForm(2, 1.0).ball_volume(PI) == pytest.approx(4 * PI)
    assert SpaceForm(3, 2.0).ball_volume(PI) == pytest.approx(2 * PI ** 2)
    assert SpaceForm(2, 0.0).ball_volume(2.0) == pytest.approx(4 * PI)
    assert SpaceForm(3, 0.0).ball_volume(1.0) == pytest.approx(4 * PI / 3)
    assert SpaceForm(2, -1.0).ball_volume(1.0) == pytest.approx(2 * PI * (math.cosh(1) - 1))
    c = FlatCylinder(2 * PI)
    assert c.ball_volume(1.0) == pytest.approx(PI)
    assert c.reference_measure(Box((0, -1), (2 * PI, 1))) == pytest.approx(4 * PI)


@pytest.mark.parametrize("N,K", [(2, 1.0), (3, 2.0), (2, -1.0), (3, -2.0)])
def test_ball_volume_by_quadrature(N, K):
    from scipy import integrate
    s = SpaceForm(N, K)
    R = s.R
    sk = (lambda r: R * math.sin(r / R)) if K > 0 else (lambda r: R * math.sinh(r / R))
    area = 2 * PI if N == 2 else 4 * PI
    r = 1.3
    val, _ = integrate.quad(lambda t: area * sk(t) ** (N - 1), 0, r, epsabs=1e-14)
    assert s.ball_volume(r) == pytest.approx(val, rel=1e-12)


def test_weighted_interval_measures():
    w = WeightedInterval(ClosedForm("sin_pow", 0, PI, p=1.0), 2.0, 1.0)
    assert w.reference_measure(Everything()) == pytest.approx(2.0)
    assert w.reference_measure(Ball((PI / 2,), PI / 2)) == pytest.approx(2.0)
    assert w.reference_measure(Annulus((PI / 2,), 0.0, PI / 2)) == pytest.approx(2.0)
    assert w.reference_measure(Box((0.0,), (PI / 2,))) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        WeightedHalfLine(ClosedForm("constant", 0, 1))


def test_product_line_curvature():
    fib = WeightedInterval(ClosedForm("sin_pow", 0, PI, p=1.0), 2.0, 1.0)
    pl = ProductLine(fib)
    assert pl.N == 3.0 and pl.K == 0.0
    assert pl.reference_measure(Box((0.0, -1.0), (PI, 1.0))) == pytest.approx(4.0)


def test_cut_locus_descriptions():
    s2 = SpaceForm(2, 1.0)
    d = cut_locus_description(s2, s2.default_point())
    assert d["kind"] == "point" and d["t_cut"] == pytest.approx(PI)
    assert np.allclose(d["points"][0], [0, 0, -1])
    assert cut_locus_description(SpaceForm(2, 0.0), (0, 0))["kind"] == "empty"
    d = cut_locus_description(FlatCylinder(2 * PI), (0.5, 0.0))
    assert d["kind"] == "line" and d["theta"] == pytest.approx(0.5 + PI)
    w = WeightedInterval(ClosedForm("sin_pow", 0, PI, p=1.0))
    assert cut_locus_description(w, 0.0)["points"] == [[PI]]


def test_line_validation():
    Line().validate(SpaceForm(2, 0.0))
    Line(theta0=1.0).validate(FlatCylinder())
    with pytest.raises(ValueError):
        Line(direction=(2.0, 0.0)).validate(SpaceForm(2, 0.0))
    with pytest.raises(ValueError):
        polar_factorization(SpaceForm(2, 1.0), Line())


def test_unsupported_combination():
    with pytest.raises(ValueError):
        polar_factorization(FlatCylinder(), LevelSet("hyperplane", normal=(1.0, 0.0)))
    with pytest.raises(ValueError):
        SpaceForm(4, 0.0)
    with pytest.raises(ValueError):
        space_from_spec({"kind": "Torus"})


def test_specs_round_trip():
    sp = space_from_spec({"kind": "WeightedInterval", "density": {"kind": "sin_pow",
                                                                  "interval": [0, PI], "p": 1},
                          "N": 2, "K": 1})
    assert sp.b == pytest.approx(PI)
    b = base_from_spec({"variant": "point"}, SpaceForm(2, 1.0))
    assert b.p == (0.0, 0.0, 1.0)
    b = base_from_spec({"variant": "line", "origin": [0, 0], "direction": [0, 1]}, None)
    assert b.direction == (0.0, 1.0)


@pytest.mark.parametrize("e", CATALOG, ids=lambda e: e.name)
def test_family_points_have_level_u(e):
    fam = polar_factorization(e.space, e.base)
    alpha, w = fam.index_grid(16)
    assert w.sum() == pytest.approx(1.0)
    lo, hi = fam.u_range(alpha)
    lo, hi = np.maximum(lo, -3.0), np.minimum(hi, 3.0)
    s = np.linspace(0.1, 0.9, 5)
    u = lo[:, None] + s[None, :] * (hi - lo)[:, None]
    pts = fam.point(alpha, u)
    assert np.allclose(fam.level(pts), u, atol=1e-10)


@pytest.mark.parametrize("e", CATALOG, ids=lambda e: e.name)
def test_rays_are_unit_speed_geodesics(e):
    fam = polar_factorization(e.space, e.base)
    alpha, _ = fam.index_grid(8)
    lo, hi = fam.u_range(alpha)
    lo, hi = np.maximum(lo, -3.0), np.minimum(hi, 3.0)
    u0 = lo + 0.2 * (hi - lo)
    u1 = lo + 0.7 * (hi - lo)
    p0 = fam.point(alpha, u0[:, None])[:, 0]
    p1 = fam.point(alpha, u1[:, None])[:, 0]
    assert np.allclose(e.space.distance(p0, p1), u1 - u0, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0, 2 * PI), st.floats(0, 2 * PI))
def test_sphere_triangle_inequality(r1, r2, a1, a2):
    s = SpaceForm(2, 1.0)
    p = s.default_point()
    x, y = np.array(_sphere_point(s, r1, a1)), np.array(_sphere_point(s, r2, a2))
    assert s.distance(x, y) <= s.distance(x, p) + s.distance(p, y) + 1e-12
    assert s.distance(x, y) == pytest.approx(s.distance(y, x), abs=1e-15)
