import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from itwlab.averaging import AveragedField
from itwlab.fields import GaussianBump, make_field, weierstrass, white_noise
from itwlab.function_space import (
    GridField,
    NormReport,
    c1gamma_proxy,
    heat_apply,
    heat_operator_norm,
    holder_exponent_fit,
    holder_two_param_norm,
    smoothing_check,
    smoothing_envelope,
    sobolev_embedding_probe,
    sobolev_norm,
)

TWO_PI = 2 * math.pi


def bump(sigma: float, M: int = 1024) -> GridField:
    return GridField.from_function(lambda y: np.exp(-((y[..., 0] - math.pi) ** 2) / (2 * sigma**2)), M)


def profile_grid(prof, M: int = 256) -> GridField:
    return GridField.from_function(prof.value, M)


grid_values = hnp.arrays(np.float64, st.sampled_from([16, 32, 64]), elements=st.floats(-10, 10, allow_nan=False))


def test_grid_validation():
    with pytest.raises(ValueError):
        GridField(np.zeros(12))
    with pytest.raises(ValueError):
        GridField(np.array([0.0, np.nan, 1.0, 2.0]))
    with pytest.raises(ValueError):
        GridField(np.zeros((4, 8)))


@given(grid_values, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_semigroup_property(vals, t1, t2):
    g = GridField(vals)
    a = heat_apply(heat_apply(g, t1), t2).values
    b = heat_apply(g, t1 + t2).values
    scale = max(np.abs(b).max(), 1e-300)
    assert np.abs(a - b).max() <= 1e-10 * scale + 1e-12


@given(grid_values, st.floats(0.0, 5.0))
def test_mass_conservation(vals, tau):
    g = GridField(vals)
    m0 = g.mean()
    m1 = heat_apply(g, tau).mean()
    assert abs(m1 - m0) <= 1e-12 * max(1.0, np.abs(vals).max())


@given(grid_values, st.floats(0.01, 1.0))
def test_derivative_commutes(vals, tau):
    g = GridField(vals)
    a = heat_apply(g, tau).grad()[..., 0]
    b = heat_apply(g.with_values(g.grad()[..., 0]), tau).values
    assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


@given(grid_values)
def test_plancherel(vals):
    g = GridField(vals)
    a = sobolev_norm(g, 0.0, 2.0).value
    b = g.lp_norm(2.0)
    assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-300)


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0, 2.5])
def test_sin_sobolev_norm(m):
    g = GridField.from_function(lambda y: np.sin(y[..., 0]), 64)
    assert math.isclose(sobolev_norm(g, m).value, 2 ** (m / 2) * math.sqrt(math.pi), rel_tol=1e-12)


def test_zero_field_norm():
    assert sobolev_norm(GridField(np.zeros(32)), 1.5, 3.0).value == 0.0


def test_quadrature_route_for_p_not_two():
    g = GridField.from_function(lambda y: np.sin(y[..., 0]), 256)
    rep = sobolev_norm(g, 0.0, 1.0)
    assert rep.meta["route"] == "quadrature"
    assert math.isclose(rep.value, 4.0, rel_tol=1e-4)


def test_norm_report_rejects_negative():
    with pytest.raises(ValueError):
        NormReport("sobolev", {}, -1.0, 8)


def test_sin_heat():
    g = GridField.from_function(lambda y: np.sin(y[..., 0]), 64)
    out = heat_apply(g, 0.7)
    assert np.allclose(out.values, math.exp(-0.35) * g.values, atol=1e-14)


def test_heat_zero_is_identity():
    g = bump(0.3, 64)
    assert heat_apply(g, 0.0) is g


def test_heat_negative_time():
    with pytest.raises(ValueError):
        heat_apply(bump(0.3, 64), -1e-3)


@pytest.mark.parametrize("sigma,tau", [(0.1, 0.01), (0.3, 0.1), (0.05, 0.5)])
def test_bump_spectral_vs_analytic(sigma, tau):
    M = 1024
    g = bump(sigma, M)
    spec = heat_apply(g, tau).values
    # the grid is periodic, so compare with the sum over the nearest images
    exact = sum(GaussianBump(sigma, center=[math.pi + k * 2 * math.pi]).heat(tau, g.points()) for k in (-2, -1, 0, 1, 2))
    assert np.abs(spec - exact).max() / np.abs(exact).max() < 1e-6


def test_profile_heat_callable():
    f = make_field("det:sin").profile
    fn = heat_apply(f, 0.5)
    assert math.isclose(float(fn(np.array([[1.0]]))[0]), math.exp(-0.25) * math.sin(1.0), rel_tol=1e-13)


def test_weierstrass_truncation_growth():
    """||f_K||_{W^{m,2}} stays bounded in K for m < s and grows geometrically for m > s."""
    s = 0.5
    norms = {m: [sobolev_norm(profile_grid(weierstrass(s, K), 1024), m).value for K in range(3, 9)] for m in (0.25, 1.0)}
    below = np.diff(norms[0.25])
    assert below[-1] < below[0] and norms[0.25][-1] < 2 * norms[0.25][0]
    ratios = np.array(norms[1.0][1:]) / np.array(norms[1.0][:-1])
    assert np.all(ratios > 1.2)


def test_smoothing_single_mode_has_flat_slope():
    g = GridField.from_function(lambda y: np.sin(y[..., 0]), 64)
    fit = smoothing_check(g, 1.0, 1.0, 2.0, np.logspace(-4, -1, 8))
    assert abs(fit.slope) < 0.05 and math.isfinite(fit.constant)


def test_smoothing_taus_validated():
    g = bump(0.1, 64)
    with pytest.raises(ValueError):
        smoothing_check(g, 1.0, 1.0, 2.0, [1e-3, 1e-2, 1e-1])
    with pytest.raises(ValueError):
        smoothing_check(GridField(np.zeros(64)), 1.0, 1.0, 2.0, np.logspace(-4, -1, 8))


def test_smoothing_envelope_matches_operator_norm():
    taus = np.logspace(-4, -1, 10)
    fam = [bump(s) for s in np.logspace(-3, 0, 40)]
    env = smoothing_envelope(fam, 1.0, 1.0, 2.0, taus)
    exact = np.polyfit(np.log(taus), np.log([heat_operator_norm(t, 0.0, 1.0) for t in taus]), 1)[0]
    assert abs(env.slope + 0.5) < 0.1
    assert abs(env.slope - exact) < 0.05


def test_white_noise_smoothing_gamma_two():
    """A flat spectrum up to K gives ||P_tau f||_{W^{m,2}} ~ tau^{-(2m+d)/4} once tau >> K^-2."""
    g = profile_grid(white_noise(256, 0.0, 1), 1024)
    fit = smoothing_check(g, 2.0, 2.0, 2.0, np.logspace(-4, -1, 10))
    assert -1.35 <= fit.slope <= -1.15
    assert math.isfinite(fit.constant)


def test_embedding_probe():
    assert sobolev_embedding_probe(GridField(np.zeros(64)), 2.0, 0.5, 0.1) == 0.0
    with pytest.raises(ValueError):
        sobolev_embedding_probe(bump(0.5, 64), 2.0, 0.1, 0.2)
    ratios = [sobolev_embedding_probe(bump(s, 1024), 2.0, 0.5, 0.1) for s in (0.5, 0.1, 0.02)]
    assert max(ratios) < 10 * min(ratios)


def test_c1gamma_proxy_sin():
    g = GridField.from_function(lambda y: np.sin(y[..., 0]), 256)
    v = c1gamma_proxy(g, 0.5)
    # sup|h| + sup|h'| + the 1/2-Hoelder constant of cos, max_h 2 sin(h/2) / sqrt(h);
    # the proxy samples a subset of lags, so it may sit slightly below
    h = np.linspace(1e-6, math.pi, 200001)
    holder = float((2 * np.sin(h / 2) / np.sqrt(h)).max())
    assert 2 + 0.9 * holder < v <= 2 + holder + 1e-9


def test_csv_roundtrip(tmp_path):
    g = bump(0.5, 32)
    g.to_csv(tmp_path / "g.csv")
    back = GridField.from_csv(tmp_path / "g.csv")
    assert np.array_equal(back.values, g.values)


def _linear_A(nt=64):
    t = np.linspace(0, 1, nt + 1)
    return AveragedField.from_function(lambda u, x: u * x, t, np.linspace(-1, 1, 65))


def test_holder_fit_linear_in_time():
    fit = holder_exponent_fit(_linear_A(), 0.5)
    assert abs(fit["beta"] - 1.0) < 1e-6
    assert math.isfinite(holder_two_param_norm(_linear_A(), 1.0, 0.5).value)


def test_holder_of_zero_field():
    t = np.linspace(0, 1, 17)
    A = AveragedField.from_function(lambda u, x: 0 * u * x, t, np.linspace(0, 1, 9))
    assert holder_two_param_norm(A, 0.5, 0.5).value == 0.0


def test_holder_fit_needs_scales():
    with pytest.raises(ValueError):
        holder_exponent_fit(_linear_A(4), 0.5)


def test_holder_fit_cos_one_path():
    from itwlab.averaging import compute_A
    from itwlab.fbm import fbm_from_lattice, sample_lattice

    lat = sample_lattice(1, 2.0**-10, 1.0, 1.0, 17, 0)
    A = compute_A(make_field("det:cos"), fbm_from_lattice(lat, 0.3), np.arange(64) * TWO_PI / 64)
    assert holder_exponent_fit(A, 0.1)["beta"] > 0.5
