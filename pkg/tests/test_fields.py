import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itwlab.fbm import sample_lattice
from itwlab.fields import (
    Constant,
    FieldSample,
    FourierSeries,
    GaussianBump,
    Linear,
    Peano,
    Polynomial,
    SpatialProfile,
    catalog_ids,
    catalog_table,
    gauss_hermite,
    load_fourier_csv,
    make_field,
    weierstrass,
    white_noise,
)


class _GH(SpatialProfile):
    """Wraps a profile so only the generic Gauss-Hermite heat action is used."""

    def __init__(self, inner):
        self.inner, self.d = inner, inner.d

    def value(self, y):
        return self.inner.value(y)

    def grad(self, y):
        return self.inner.grad(y)

    def laplacian(self, y):
        return self.inner.laplacian(y)

    def hessian(self, y):
        return self.inner.hessian(y)


PROFILES = [
    FourierSeries([1.0, 3.0], [0.5, -0.2], [1.0, 0.3]),
    GaussianBump(0.7),
    Polynomial([1.0, -2.0, 0.5, 0.25]),
    Linear([2.0], 1.0),
]


@pytest.mark.parametrize("prof", PROFILES, ids=lambda p: type(p).__name__)
@pytest.mark.parametrize("deriv", [0, 1, 2])
def test_closed_form_heat_matches_quadrature(prof, deriv):
    y = np.linspace(-2, 2, 7)[:, None]
    tau = 0.3
    exact = prof.heat(tau, y, deriv)
    quad = _GH(prof).heat(tau, y, deriv)
    assert np.allclose(exact, quad, atol=1e-8)


@pytest.mark.parametrize("prof", PROFILES[:3], ids=lambda p: type(p).__name__)
def test_heat_hessian_matches_gradient_differences(prof):
    y = np.linspace(-1, 1, 5)[:, None]
    h = 1e-5
    fd = (prof.heat(0.2, y + h, 1) - prof.heat(0.2, y - h, 1)) / (2 * h)
    assert np.allclose(prof.heat_hessian(0.2, y)[..., 0], fd, atol=1e-7)


def test_heat_at_zero_is_identity():
    prof = PROFILES[0]
    y = np.linspace(0, 6, 11)[:, None]
    assert np.allclose(prof.heat(0.0, y), prof.value(y), atol=1e-14)


def test_sin_heat_is_damped():
    f = make_field("det:sin").profile
    y = np.array([[0.4]])
    assert math.isclose(float(f.heat(0.5, y)[0]), math.exp(-0.25) * math.sin(0.4), rel_tol=1e-13)


def test_negative_tau_raises():
    with pytest.raises(ValueError):
        GaussianBump(1.0).heat(-0.1, np.zeros((1, 1)))


def test_gauss_hermite_moments():
    x, w = gauss_hermite()
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-13)
    assert math.isclose((w * x**2).sum(), 1.0, rel_tol=1e-12)
    assert math.isclose((w * x**4).sum(), 3.0, rel_tol=1e-12)


def test_constant_heat_hessian_shape():
    c = Constant(2.0, d=2)
    assert c.heat_hessian(0.1, np.zeros((3, 2))).shape == (3, 2, 2)


def test_peano_is_unbounded_and_odd():
    p = Peano()
    y = np.array([[-2.0], [2.0]])
    v = p.value(y)
    assert v[0] == -v[1] and math.isclose(v[1], 2.0)


def test_catalog_has_required_entries():
    ids = catalog_ids()
    assert len(ids) >= 10
    assert "product:cos:tau=0.5:k=1" in ids and "peano" in ids
    assert [r[0] for r in catalog_table()] == ids
    for fid in ids:
        if not fid.startswith("functional:"):
            make_field(fid)


def test_unknown_id_raises():
    with pytest.raises(KeyError):
        make_field("det:nothing")


def test_white_noise_modes():
    f = white_noise(8, 0.0, 3)
    assert f.n_modes == 8
    assert np.allclose(f.a**2 + f.b**2, 1.0)
    assert np.array_equal(f.k[:, 0], np.arange(1, 9))


def test_weierstrass_coefficients():
    w = weierstrass(0.5, 4)
    assert np.allclose(w.k[:, 0], [1, 2, 4, 8])
    assert np.allclose(w.a, 2.0 ** (-0.5 * np.arange(4)))


def test_load_fourier_csv(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text("k_1,re,im\n1,1.0,0.0\n2,0.0,-0.5\n")
    prof = load_fourier_csv(f)
    y = np.array([[0.3]])
    assert math.isclose(float(prof.value(y)[0]), math.cos(0.3) + 0.5 * math.sin(0.6), rel_tol=1e-13)


@pytest.fixture
def sample():
    lat = sample_lattice(1, 2.0**-5, 1.0, 1.0, 4, 0)
    return lat, lat.brownian()[0]


def test_product_field_malliavin_support(sample):
    lat, B = sample
    fs = FieldSample(make_field("product:cos:tau=0.5:k=1"), lat)
    assert fs.eval_g(0, 0.75, 0.625, 0.3) == 0.0
    assert math.isclose(fs.eval_g(0, 0.75, 0.25, 0.3), math.cos(0.3), rel_tol=1e-13)
    # f^a(s, u) conditions B(0.5) on the past before u
    assert math.isclose(fs.eval_fa(0.75, 0.25, 0.3), B[8] * math.cos(0.3), rel_tol=1e-12)
    assert math.isclose(fs.eval(0.75, 0.3), B[16] * math.cos(0.3), rel_tol=1e-12)


def test_square_anchor_conditional_mean(sample):
    lat, B = sample
    fs = FieldSample(make_field("square:linear:gamma=0.5"), lat)
    # E_u[B(0.5)^2] = B(u)^2 + (0.5 - u) for u < 0.5
    assert math.isclose(fs.eval_fa(0.75, 0.25, 1.0), B[8] ** 2 + 0.25, rel_tol=1e-12)


def test_fa_requires_ordered_times(sample):
    lat, _ = sample
    fs = FieldSample(make_field("det:sin"), lat)
    with pytest.raises(ValueError):
        fs.eval_fa(0.25, 0.5, 0.0)


@given(st.floats(0.0, 1.0), st.floats(-3.0, 3.0))
def test_deterministic_fa_is_f(s, x):
    lat = sample_lattice(1, 2.0**-4, 1.0, 1.0, 0, 0)
    s = round(s * 16) / 16
    fs = FieldSample(make_field("det:sin:t=cos"), lat)
    assert math.isclose(fs.eval_fa(s, 0.0, x), math.cos(s) * math.sin(x), abs_tol=1e-13)
    assert fs.eval_g(0, s, 0.0, x) == 0.0


def test_pair_jet_matches_heat_calls(sample):
    lat, B = sample
    f = make_field("product:cos:tau=0.5:k=1")
    s = np.array([0.75, 0.5])
    u = np.array([0.25, 0.125])
    y = np.array([[0.1], [0.9]])
    jet = f.pair_jet(np.array([0.1, 0.2]), s, u, y, lat.brownian(), lat.dt)
    fa = f.heat_fa(np.array([0.1, 0.2]), s, u, y, lat.brownian(), lat.dt)
    assert np.allclose(jet["c"] * jet["h"][0], fa)
    g, _ = f.heat_g(np.array([0.1, 0.2]), s, u, y, lat.brownian(), lat.dt)
    assert np.allclose(jet["gbar"] * jet["h"][0][:, None], g)
