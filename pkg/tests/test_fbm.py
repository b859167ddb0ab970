import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itwlab.fbm import (
    cholesky_fbm,
    decomposition_error,
    fbm_from_lattice,
    fbm_variance_constant,
    kernel_cell_average,
    lattice_variance,
    path_rng,
    sample_lattice,
    w1,
    w2,
)


def test_lattice_is_reproducible_per_path():
    a = sample_lattice(2, 2.0**-5, 1.0, 1.0, seed=3, path_index=11)
    b = sample_lattice(2, 2.0**-5, 1.0, 1.0, seed=3, path_index=11)
    c = sample_lattice(2, 2.0**-5, 1.0, 1.0, seed=3, path_index=12)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(a.tail_increments, b.tail_increments)
    assert not np.array_equal(a.increments, c.increments)


def test_streams_are_independent():
    x = path_rng(0, 5, 0).standard_normal(4)
    y = path_rng(0, 5, 1).standard_normal(4)
    assert not np.allclose(x, y)


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(dt=0.3), dict(left=-1.0)])
def test_sample_lattice_rejects_bad_grids(bad):
    kw = dict(d=1, dt=2.0**-4, left=1.0, horizon=1.0, seed=0, path_index=0)
    kw.update(bad)
    with pytest.raises(ValueError):
        sample_lattice(**kw)


def test_coarsen_keeps_the_brownian_path(lattice):
    coarse = lattice.coarsen(4)
    assert coarse.dt == 4 * lattice.dt
    assert np.allclose(coarse.brownian()[:, -1], lattice.brownian()[:, -1], atol=1e-14)
    with pytest.raises(ValueError):
        lattice.coarsen(3)


def test_time_index_off_grid(lattice):
    assert lattice.time_index(0.5) == 32
    with pytest.raises(ValueError):
        lattice.time_index(0.51)


@given(st.floats(0.05, 0.95).filter(lambda h: abs(h - 0.5) > 1e-3), st.integers(1, 200))
def test_kernel_cell_average_telescopes(H, n):
    dt = 2.0**-6
    kb = kernel_cell_average(H, dt, n)
    total = dt * kb.sum()
    assert math.isclose(total, (n * dt) ** (H + 0.5) / (H + 0.5), rel_tol=1e-10)


def test_lattice_variance_tends_to_oracle():
    H, dt = 0.3, 2.0**-12
    v = lattice_variance(H, dt, 4096)[-1]
    assert abs(v - 1 / (2 * H)) / (1 / (2 * H)) < 0.02


def test_fbm_starts_at_zero(fbm_path):
    assert np.all(fbm_path.values[:, 0] == 0.0)
    assert np.all(fbm_path.w2_origin[:, 0] == 0.0)


def test_decomposition_pointwise(fbm_path):
    for u, r in [(0.0, 1.0), (0.25, 0.5), (0.5, 0.5)]:
        assert np.allclose(w1(fbm_path, u, r) + w2(fbm_path, u, r), fbm_path.values[:, fbm_path._locate(r)], atol=1e-13)
    with pytest.raises(ValueError):
        w1(fbm_path, 0.6, 0.5)


def test_decomposition_error_small(fbm_path):
    assert decomposition_error(fbm_path) < 1e-12


def test_pair_table_diagonal_is_zero(fbm_path):
    P = fbm_path.pair_table()
    assert np.all(np.diagonal(P, axis1=1, axis2=2) == 0.0)


def test_w1_is_independent_of_past(lattice, hurst):
    """Changing increments before u leaves W1(u, r) untouched."""
    p = fbm_from_lattice(lattice, hurst)
    inc = lattice.increments.copy()
    cut = lattice.n_neg + lattice.time_index(0.5)
    inc[:, :cut] = 0.0
    from dataclasses import replace

    q = fbm_from_lattice(replace(lattice, increments=inc), hurst)
    assert np.allclose(w1(p, 0.5, 1.0), w1(q, 0.5, 1.0), atol=0)


@pytest.mark.parametrize("H", [0.2, 0.3, 0.7, 0.8])
def test_variance_constant_limits(H):
    c = fbm_variance_constant(H)
    assert c > 1 / (2 * H)


def test_variance_constant_at_half_is_one():
    # for H -> 1/2 the kernel difference vanishes and c_H -> 1
    assert abs(fbm_variance_constant(0.5 + 1e-6) - 1.0) < 1e-3


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_increment_variance_matches_cholesky(H):
    """Stationary increments: Var(W(1) - W(1/2)) = c_H 2^{-2H}, lattice and Cholesky agree."""
    n = 1500
    lat_vals = np.array(
        [fbm_from_lattice(sample_lattice(1, 2.0**-8, 20.0, 1.0, 9, k), H, eval_grid=[0.5, 1.0]).values[0] for k in range(n)]
    )
    chol = cholesky_fbm(H, np.array([0.5, 1.0]), 20000, np.random.default_rng(0))
    target = fbm_variance_constant(H) * 0.5 ** (2 * H)
    inc = lat_vals[:, 1] - lat_vals[:, 0]
    se = np.sqrt(2.0 / n) * target
    assert abs(inc.var() - target) < 4 * se
    assert abs(np.var(chol[:, 1] - chol[:, 0]) - target) < 0.05 * target


def test_rejects_half():
    lat = sample_lattice(1, 0.25, 1.0, 1.0, 0, 0)
    with pytest.raises(ValueError):
        fbm_from_lattice(lat, 0.5)


def test_to_csv_roundtrip(tmp_path, fbm_path):
    f = tmp_path / "w.csv"
    fbm_path.to_csv(f)
    back = np.loadtxt(f, delimiter=",", skiprows=1)
    assert np.allclose(back[:, 1], fbm_path.values[0])
