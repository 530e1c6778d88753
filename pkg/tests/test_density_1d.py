import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from needlelab.coefficients import CurvatureDim
from needlelab.density_1d import (CallableDensity, ClosedForm, GridDensity, Grid, Perturbed,
                                  bochner_1d, bochner_implies_cd, check_cd_density,
                                  check_mcp_density, constancy_verdict, density_from_spec,
                                  derivative_l1, log_convolve, log_derivative_bounds,
                                  ratio_bounds, rigidity_window, sup_bound)

PI = math.pi


def sin_pow(N):
    return ClosedForm("sin_pow", 0.0, PI, p=N - 1)


# -- MCP / CD scans --------------------------------------------------------


def test_mcp_examples():
    assert check_mcp_density(sin_pow(2), CurvatureDim(1, 2)).passed
    assert check_mcp_density(ClosedForm("constant", 0, 1), CurvatureDim(0, 2)).passed
    rep = check_mcp_density(ClosedForm("exp", -20, 20), CurvatureDim(0, 2))
    assert not rep.passed
    # brute-force oracle: e^{-t D} < 1 - t needs a long chord
    assert abs(rep.witness["x1"] - rep.witness["x0"]) > 1.0
    d, t = abs(rep.witness["x1"] - rep.witness["x0"]), rep.witness["t"]
    x0, x1 = rep.witness["x0"], rep.witness["x1"]
    assert math.exp(t * x1 + (1 - t) * x0) < (1 - t) * math.exp(x0)
    assert d > 0


@pytest.mark.parametrize("N", [2.0, 3.0, 4.5])
def test_cd_equality_cases(N):
    assert check_cd_density(ClosedForm("power", 0, 1, p=N - 1), CurvatureDim(0, N)).passed
    rep = check_cd_density(ClosedForm("cosh_pow", -2, 2, p=N - 1), CurvatureDim(1 - N, N))
    assert rep.passed and abs(rep.worst_violation) < 1e-9
    assert check_cd_density(sin_pow(N), CurvatureDim(N - 1, N)).passed


def test_cd_detects_non_concave_root():
    # x^2 with N = 2: h^{1/(N-1)} = x^2 is convex
    assert not check_cd_density(ClosedForm("power", 0, 1, p=2.0), CurvatureDim(0, 2)).passed


def test_non_positive_sample_is_an_error():
    h = CallableDensity(lambda x: x - 0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        check_mcp_density(h, CurvatureDim(0, 2))


# -- bounds ----------------------------------------------------------------


def test_ratio_bounds_examples():
    lo, hi, obs = ratio_bounds(ClosedForm("constant", 0, 1), CurvatureDim(0, 3), 0.2, 0.7)
    assert lo == pytest.approx(((1 - 0.7) / (1 - 0.2)) ** 2, rel=1e-14)
    assert lo <= 1.0 <= hi and obs == 1.0
    lo, hi, obs = ratio_bounds(ClosedForm("constant", 0, 1), CurvatureDim(0, 3), 0.4, 0.4)
    assert lo <= 1.0 <= hi and obs == 1.0
    lo, hi, obs = ratio_bounds(ClosedForm("power", 0, 1, p=1.0), CurvatureDim(0, 2), 0.25, 0.5)
    assert obs == pytest.approx(2.0, rel=1e-14) and hi == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        ratio_bounds(ClosedForm("constant", 0, 1), CurvatureDim(0, 2), 0.5, 1.5)


def test_log_derivative_bounds_examples():
    lo, hi, obs = log_derivative_bounds(ClosedForm("power", 0, 2, p=2.0), CurvatureDim(0, 3), 0.7)
    assert obs == pytest.approx(2 / 0.7, rel=1e-13) and hi == pytest.approx(obs, rel=1e-13)
    lo, hi, obs = log_derivative_bounds(ClosedForm("constant", -math.inf, math.inf),
                                        CurvatureDim(0, 2), 3.0)
    assert lo == 0.0 and hi == 0.0 and obs == 0.0
    x = 1.1
    lo, hi, obs = log_derivative_bounds(sin_pow(2), CurvatureDim(1, 2), x)
    cot = 1 / math.tan(x)
    assert lo == pytest.approx(cot, abs=1e-12) and hi == pytest.approx(cot, abs=1e-12)
    assert obs == pytest.approx(cot, abs=1e-12)
    with pytest.raises(ValueError):
        log_derivative_bounds(sin_pow(2), CurvatureDim(1, 2), 0.0)


def test_sup_bound_examples():
    for N in (2.0, 3.0):
        bound, obs = sup_bound(ClosedForm("power", 0, 1, p=N - 1, c=N), CurvatureDim(0, N))
        assert bound == N and 1 - 1e-9 <= obs / bound <= 1
    bound, obs = sup_bound(ClosedForm("constant", 0, 1), CurvatureDim(0, 2))
    assert obs == 1.0 <= bound
    bound, obs = sup_bound(ClosedForm("sin_pow", 0, PI, p=1.0, c=0.5), CurvatureDim(1, 2))
    assert bound == pytest.approx(2 / PI) and obs == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        sup_bound(ClosedForm("constant", 0, 1, c=2.0), CurvatureDim(0, 2))


def test_sup_bound_negative_curvature_by_quadrature():
    kd = CurvatureDim(-1.0, 2.0)
    h = ClosedForm("cosh_pow", -1, 1, p=1.0)
    h = h.scaled(1 / h.mass)
    bound, obs = sup_bound(h, kd)
    # K < 0: 1 / (D int_0^1 sinh(tD)/sinh(D) dt) = sinh(D) / (cosh(D) - 1)
    D = 2.0
    assert bound == pytest.approx(math.sinh(D) / (math.cosh(D) - 1.0), rel=1e-10)
    assert obs <= bound


def test_derivative_l1_examples():
    val, bound = derivative_l1(ClosedForm("constant", 0, 1), CurvatureDim(0, 2))
    assert val == pytest.approx(0.0, abs=1e-12) and val <= bound
    val, bound = derivative_l1(ClosedForm("power", 0, 1, p=1.0, c=2.0), CurvatureDim(0, 2))
    assert val == pytest.approx(2.0, rel=1e-10) and val <= bound
    val, bound = derivative_l1(ClosedForm("sin_pow", 0, PI, p=1.0, c=0.5), CurvatureDim(1, 2))
    assert val == pytest.approx(1.0, rel=1e-10) and val <= bound


# -- log-convolution -------------------------------------------------------


def test_log_convolve_examples():
    h = log_convolve(ClosedForm("constant", 0, 1), 0.1)
    assert h.interval.a == pytest.approx(0.1) and h.interval.b == pytest.approx(0.9)
    assert np.allclose(h.value(np.linspace(0.15, 0.85, 9)), 1.0, rtol=0, atol=1e-14)
    eps = 0.1
    he = log_convolve(ClosedForm("power", 0, 1, p=1.0), eps)

    def psi(z):
        y = z / eps
        return 35 / 32 * (1 - y * y) ** 3 / eps

    oracle = math.exp(integrate.quad(lambda z: math.log(0.5 - z) * psi(z), -eps, eps,
                                     epsabs=1e-14, epsrel=1e-13)[0])
    assert float(he.value(0.5)) == pytest.approx(oracle, rel=1e-12)
    assert oracle < 0.5
    hs = log_convolve(sin_pow(2), 0.05)
    assert check_cd_density(hs, CurvatureDim(1, 2)).passed
    with pytest.raises(ValueError):
        log_convolve(ClosedForm("constant", 0, 1), 0.6)


def test_log_convolve_converges_pointwise():
    h = ClosedForm("power", 0, 1, p=2.0)
    errs = [abs(float(log_convolve(h, e).value(0.5)) - 0.25) for e in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.45), st.floats(0.1, 5.0))
def test_log_convolve_idempotent_on_constants(eps, c):
    h = log_convolve(ClosedForm("constant", 0, 1, c=c), eps)
    assert h.interval.a == pytest.approx(eps, abs=1e-15)
    assert h.interval.b == pytest.approx(1 - eps, abs=1e-15)
    x = np.linspace(h.interval.a, h.interval.b, 7)[1:-1]
    assert np.allclose(h.value(x), c, rtol=1e-13)


# -- rigidity --------------------------------------------------------------


def test_rigidity_window_examples():
    lo, hi = rigidity_window(None, 2.0, 0.0, 1.0, 100.0)
    assert lo == pytest.approx(0.99) and hi == pytest.approx(1.01)
    w = rigidity_window(None, 3.0, 0.3, 0.3, 10.0)
    assert w.contains(1.0)
    lo, hi = rigidity_window(None, 2.0, 0.0, 1.0, 1e6)
    assert hi - lo < 3e-6


def test_constancy_verdict():
    const = ClosedForm("constant", -math.inf, math.inf)
    assert constancy_verdict(const, 2.0, 1e8).passed
    assert not constancy_verdict(ClosedForm("exp", -math.inf, math.inf, rate=0.5), 2.0,
                                 100.0).passed
    with pytest.raises(ValueError):
        constancy_verdict(ClosedForm("exp", -math.inf, math.inf, rate=0.5), 2.0, 1e4)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 5), st.sampled_from([2.0, 3.0, 4.5]))
def test_rigidity_window_shrinks_with_R(x0, d, N):
    widths = []
    for R in (1e2, 1e4, 1e6):
        lo, hi = rigidity_window(None, N, x0, x0 + d, R)
        assert lo <= 1.0 <= hi
        widths.append(hi - lo)
    assert widths[0] >= widths[1] >= widths[2]


# -- Bochner ---------------------------------------------------------------


def test_bochner_1d_examples():
    rep = bochner_1d(ClosedForm("constant", 0, 1), CurvatureDim(0, 2), 0.2, 0.5)
    assert rep.passed and rep.worst_violation == 0.0
    rep = bochner_1d(sin_pow(2), CurvatureDim(1, 2), PI / 4, PI / 4)
    assert rep.passed and abs(rep.worst_violation) < 1e-12
    assert not bochner_1d(ClosedForm("power", 0, 1, p=2.0), CurvatureDim(0, 2)).passed
    with pytest.raises(ValueError):
        bochner_1d(sin_pow(2), CurvatureDim(1, 2), 3.0, 1.0)


def test_bochner_negative_t():
    rep = bochner_1d(sin_pow(2), CurvatureDim(1, 2), 2.0, -0.7)
    assert rep.passed and abs(rep.worst_violation) < 1e-12


def test_bochner_implies_cd_examples():
    for h, kd in ((ClosedForm("power", 0, 1, p=1.0), CurvatureDim(0, 2)),
                  (sin_pow(2), CurvatureDim(1, 2))):
        rep = bochner_implies_cd(h, kd)
        assert rep.passed and rep.details["bochner_verdict"] == "pass"
    wiggle = CallableDensity(lambda x: 1 + 0.5 * np.sin(10 * x), 0, PI,
                             log_deriv=lambda x: 5 * np.cos(10 * x) / (1 + 0.5 * np.sin(10 * x)))
    rep = bochner_implies_cd(wiggle, CurvatureDim(1, 2))
    assert rep.passed
    assert rep.details["bochner_verdict"] == "fail" == rep.details["cd_verdict"]


# -- representations -------------------------------------------------------


def test_density_from_spec():
    h = density_from_spec({"kind": "sin_pow", "interval": [0, PI], "p": 2})
    assert float(h.value(1.0)) == pytest.approx(math.sin(1.0) ** 2)
    hp = density_from_spec({"kind": "constant", "interval": [0, 1], "amplitude": 0.1,
                            "coeffs": [1.0, 0.5]})
    assert isinstance(hp, Perturbed)
    g = density_from_spec({"kind": "custom_grid", "x": [0, 0.5, 1], "h": [1, 2, 4]})
    assert float(g.value(0.25)) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        density_from_spec({"kind": "gamma", "interval": [0, 1]})


def test_grid_density_file(tmp_path):
    x = np.linspace(0, 1, 11)
    np.savetxt(tmp_path / "h.txt", np.column_stack([x, 1 + x]))
    g = density_from_spec({"kind": "custom_grid", "path": str(tmp_path / "h.txt")})
    assert g.interval.b == 1.0 and not g.closed_form
    with pytest.raises(ValueError):
        GridDensity([0, 1, 3], [1, 1, 1])


def test_grid_log_derivative_is_second_order():
    h = ClosedForm("sin_pow", 0, PI, p=1.0)
    errs = []
    for n in (101, 201, 401):
        g = GridDensity.sample(h, 0.5, 2.5, n)
        x = g.x[(g.x >= 0.8) & (g.x <= 2.2)]
        errs.append(np.max(np.abs(g.log_deriv(x) - h.log_deriv(x))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_grid_density_passes_cd_at_grid_tolerance():
    g = GridDensity.sample(sin_pow(2), 0.05, PI - 0.05, 801)
    assert check_cd_density(g, CurvatureDim(1, 2)).passed


# -- properties ------------------------------------------------------------

CATALOG = [
    (ClosedForm("sin_pow", 0, PI, p=1.0), CurvatureDim(1, 2)),
    (ClosedForm("sin_pow", 0, PI, p=2.0), CurvatureDim(2, 3)),
    (ClosedForm("power", 0, 1, p=2.0), CurvatureDim(0, 3)),
    (ClosedForm("cosh_pow", -2, 2, p=1.0), CurvatureDim(-1, 2)),
    (ClosedForm("constant", 0, 3), CurvatureDim(0, 2.5)),
    (ClosedForm("sinh_pow", 0, 2, p=1.0), CurvatureDim(-1, 2)),
]

small = Grid(n_points=16, n_t=7)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(CATALOG), st.floats(-3.0, 0.0))
def test_cd_pass_implies_mcp_pass(case, dK):
    h, kd = case
    kd = CurvatureDim(kd.K + dK, kd.N)
    if check_cd_density(h, kd, small).passed:
        assert check_mcp_density(h, kd, small).passed


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(CATALOG), st.floats(0.01, 0.99))
def test_log_derivative_sandwich(case, frac):
    h, kd = case
    x = h.interval.a + frac * h.interval.length
    lo, hi, obs = log_derivative_bounds(h, kd, x)
    assert lo - 1e-9 * max(1, abs(lo)) <= obs <= hi + 1e-9 * max(1, abs(hi))


@given(st.sampled_from(CATALOG))
def test_endpoint_values_are_cauchy(case):
    h, _ = case
    D = h.interval.length
    for end, sign in ((h.interval.a, 1), (h.interval.b, -1)):
        diffs = [abs(float(h.value(end + sign * D * 2.0 ** -k))
                     - float(h.value(end + sign * D * 2.0 ** -(k + 1)))) for k in range(8, 14)]
        assert diffs[-1] <= diffs[0] + 1e-15
        assert diffs[-1] < 1e-3
