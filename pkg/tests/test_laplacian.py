import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from needlelab.catalog import entry
from needlelab.coefficients import CurvatureDim
from needlelab.laplacian import (ChartBump, DirectionalDerivative, LevelBump, LevelFunction,
                                 ZeroFunction, comparison_check, endpoint_vanishing_check,
                                 ibp_convergence, ibp_residual, laplacian_abs_dv,
                                 laplacian_busemann, laplacian_dp, laplacian_dp_squared,
                                 laplacian_dv, laplacian_dv_squared, laplacian_general,
                                 nu_measure, pairing)
from needlelab.model_spaces import SpaceForm
from needlelab.ray_disintegration import Disintegration, Resolution
from needlelab.regions import Ball

PI = math.pi
RES = Resolution(rays=256, per_unit=64)


def dis(name, res=RES):
    return entry(name).disintegration(res)


def test_sphere_regular_part_is_cot():
    lap = laplacian_dp(dis("sphere2_dp"))
    t = -np.linspace(0.1, PI - 0.1, 50)
    assert np.allclose(lap.regular(3, t), 1 / np.tan(-t), rtol=1e-12, atol=1e-12)
    # no atoms survive: h vanishes at both ends
    assert abs(lap.singular_mass()) < 1e-12


def test_flat_regular_parts():
    lap = laplacian_dp(dis("space3_dp"))
    t = -np.linspace(0.2, 3.5, 9)
    assert np.allclose(lap.regular(0, t), 2 / -t, rtol=1e-12)
    sq = laplacian_dp_squared(dis("space3_dp"))
    assert np.allclose(sq.regular(0, t), 6.0, rtol=1e-12)


def test_chain_rule_for_squares_and_abs():
    d = dis("plane_circle")
    first, sq, ab = laplacian_dv(d), laplacian_dv_squared(d), laplacian_abs_dv(d)
    r = d.active()[10]
    t = np.array([-1.5, -0.5, 0.5])
    u = -t
    assert np.allclose(sq.regular(r, t), 2 + 2 * u * first.regular(r, t), rtol=1e-12)
    assert np.allclose(ab.regular(r, t), np.sign(u) * first.regular(r, t), rtol=1e-12)
    with pytest.raises(ValueError):
        first.regular(r, 0.0)


def test_weighted_interval_atom():
    d = dis("interval_power_dp")
    lap = laplacian_dp(d)
    atoms = [a for a in lap.atoms if a[1] != 0.0]  # h(p) = 0 leaves a null atom at p
    assert len(atoms) == 1
    loc, mass = atoms[0]
    total = d.rays[0].weight * float(d.rays[0].density.value(d.rays[0].t_start))
    assert loc == pytest.approx((3.0,)) and mass == pytest.approx(-total)


def test_pairing_radial_bump_oracle():
    d = dis("plane_dp")
    lap = laplacian_dp(d)
    f = LevelBump(1.5, 0.5)
    # int f (1/r) 2 pi r dr = 2 pi * 0.5 * int_{-1}^1 (1 - y^2)^4 dy
    oracle = 2 * PI * 0.5 * integrate.quad(lambda y: (1 - y * y) ** 4, -1, 1)[0]
    assert pairing(lap, f, per_unit=1024) == pytest.approx(oracle, rel=1e-12)
    assert pairing(lap, f, per_unit=64) == pytest.approx(oracle, rel=1e-7)


def test_zero_function_pairs_to_zero():
    lap = laplacian_dp(dis("sphere2_dp"))
    assert pairing(lap, ZeroFunction()) == 0.0
    assert ibp_residual(lap, None, ZeroFunction()) == 0.0


@pytest.mark.parametrize("name,builder", [
    ("sphere2_dp", laplacian_dp), ("plane_dp", laplacian_dp_squared),
    ("plane_circle", laplacian_dv), ("sphere_equator", laplacian_abs_dv),
    ("cylinder_line", laplacian_busemann), ("interval_power_dp", laplacian_dp),
])
def test_integration_by_parts(name, builder):
    e = entry(name)
    d = e.disintegration(RES)
    lap = builder(d)
    for f in e.bumps:
        if name == "sphere_equator" and isinstance(f, ChartBump):
            continue
        conv = ibp_convergence(lap, f, per_units=(32, 64, 128))
        assert conv["residuals"][-1] < 1e-5


def test_ibp_rejects_support_across_level_set():
    d = dis("plane_circle")
    with pytest.raises(ValueError):
        pairing(laplacian_dv(d), LevelBump(0.0, 0.3))


def test_ibp_rejects_foreign_disintegration():
    lap = laplacian_dp(dis("sphere2_dp"))
    with pytest.raises(ValueError):
        ibp_residual(lap, dis("plane_dp"), LevelBump(1.0, 0.5))


def test_directional_derivative():
    d = dis("plane_dp")
    f = ChartBump((1.0, 0.5), 0.6)
    r = d.rays[10]
    t = np.linspace(-1.4, -0.6, 5)
    exact = DirectionalDerivative(f)(d, r, t)
    fd = DirectionalDerivative(f, step=1e-5)(d, r, t)
    assert np.allclose(exact, fd, atol=1e-8)
    # the flow derivative of u is -1
    assert np.allclose(DirectionalDerivative(LevelFunction())(d, r, t), -1.0)


class _Shrinking:
    variant = "line"

    def index_grid(self, n):
        return (np.arange(n)[:, None] + 0.5) / n, np.full(n, 1.0 / n)

    def u_range(self, alpha):
        a = np.asarray(alpha)[:, 0]
        return np.zeros_like(a), a.copy()


def test_general_laplacian_refuses_short_rays():
    d0 = dis("plane_line")
    d = Disintegration(d0.space, d0.base, _Shrinking(), d0.rays, d0.window, d0.resolution)
    with pytest.raises(ValueError, match="reciprocal"):
        laplacian_general(d)
    assert laplacian_general(dis("sphere2_dp")).kind == "d_p"


def test_endpoint_vanishing():
    rep = endpoint_vanishing_check(dis("sphere2_dp"))
    assert rep.passed and rep.details["status"] == "hypothesis holds"
    rep = endpoint_vanishing_check(dis("interval_power_dp"), s=2.0)
    assert rep.passed
    with pytest.raises(ValueError):
        endpoint_vanishing_check(dis("plane_line"))
    with pytest.raises(ValueError):
        endpoint_vanishing_check(dis("sphere2_dp"), s=1.0)


def test_nu_cases():
    kd = CurvatureDim(1.0, 2.0)
    nu = nu_measure(dis("sphere_equator"), kd)
    assert nu.case_tag == "K_pos_suspension"
    assert nu_measure(dis("plane_circle"), CurvatureDim(0, 2)).case_tag == "K_zero"
    assert nu_measure(dis("hyperbolic_circle"), CurvatureDim(-1, 2)).case_tag == "K_neg"
    r = dis("plane_hyperplane").active()[0]
    nu0 = nu_measure(dis("plane_hyperplane"), CurvatureDim(0, 2))
    # flat and infinitely long: nu = 2 dm
    assert np.allclose(nu0.density(r, np.array([-1.0, 0.0, 1.0])), 2.0)


def test_nu_density_on_equator():
    d = dis("sphere_equator")
    nu = nu_measure(d, CurvatureDim(1.0, 2.0))
    r = d.active()[0]
    t = np.array([-0.5, 0.3])
    u = -t
    # d = distance to the far pole along the ray; R(d) = cot(d)
    da, db = t - r.t_start, r.t_end - t
    dd = np.where(u >= 0, db, da)
    assert np.allclose(nu.density(r, t), 2 * (1 + np.abs(u) / np.tan(dd)), rtol=1e-12)


@pytest.mark.parametrize("name,builder,kd", [
    ("sphere2_dp", laplacian_dp, CurvatureDim(1, 2)),
    ("hyperbolic2_dp", laplacian_dp, CurvatureDim(-1, 2)),
    ("plane_circle", laplacian_dv, CurvatureDim(0, 2)),
    ("sphere_equator", laplacian_dv_squared, CurvatureDim(1, 2)),
    ("interval_cosh_level", laplacian_abs_dv, CurvatureDim(-1, 2)),
])
def test_comparison_holds_on_catalog(name, builder, kd):
    assert comparison_check(builder(dis(name)), kd).passed


def test_comparison_detects_wrong_curvature():
    rep = comparison_check(laplacian_dp(dis("sphere2_dp")), CurvatureDim(4.0, 2.0))
    assert not rep.passed
    with pytest.raises(ValueError):
        comparison_check(laplacian_dp(dis("sphere2_dp")), CurvatureDim(1, 2), variant="d_v")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.1, 0.4))
def test_pairing_is_linear(u0, rho):
    lap = laplacian_dp(dis("plane_dp"))
    f = LevelBump(u0, rho)
    g = LevelBump(u0 + 0.5, rho)
    pf, pg = pairing(lap, f, per_unit=1024), pairing(lap, g, per_unit=1024)
    assert pf == pytest.approx(2 * PI * rho * 256 / 315, rel=1e-8)
    assert pg == pytest.approx(pf, rel=1e-8)
