import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itwlab.averaging import AveragedField, compute_A
from itwlab.fbm import fbm_from_lattice, sample_lattice
from itwlab.fields import Constant, make_field
from itwlab.young import (
    NonConvergence,
    Partition,
    WindowExit,
    apriori_bound_check,
    euler_crosscheck,
    holder_proxy,
    local_order,
    partition_check,
    peano_witness,
    riemann_sum,
    sde_reconstruct,
    sewing_constant,
    solve_yode,
    uniqueness_probe,
    young_integral,
)


def linear_delta(u, v, y):
    return (v - u) * y


@pytest.fixture
def ux_field():
    """A_u(x) = u x on a 2^12-step grid."""
    return AveragedField.from_function(lambda u, x: u * x, np.linspace(0, 1, 4097), np.linspace(-2, 2, 129))


@pytest.fixture
def sin_field(fbm_path):
    return compute_A(make_field("det:sin"), fbm_path, np.linspace(-6, 6, 241))


def test_linear_ode_reaches_e():
    sol = solve_yode(linear_delta, 1.0, grid=np.linspace(0, 1, 4097), diagnostics=False)
    assert abs(sol.values[-1] - math.e) < 1e-3


def test_zero_field_keeps_initial_value():
    A = AveragedField.from_function(lambda u, x: 0 * u * x, np.linspace(0, 1, 65), np.linspace(-1, 1, 9))
    sol = solve_yode(A, 0.3, diagnostics=False)
    assert np.all(sol.values == 0.3)


def test_zero_drift_gives_noise_only(fbm_path):
    A = compute_A(Constant(0.0), fbm_path, np.linspace(-3, 3, 25))
    sol = solve_yode(A, 0.25, diagnostics=False)
    X = sde_reconstruct(sol, fbm_path)
    assert np.allclose(X, 0.25 + fbm_path.values[0], atol=1e-15)


@given(st.lists(st.integers(1, 1023), min_size=1, max_size=30, unique=True))
def test_constant_integrand_telescopes(cuts):
    A = AveragedField.from_function(lambda u, x: np.sin(3 * u) * x, np.linspace(0, 1, 1025), np.linspace(-2, 2, 129))
    pts = A.t[np.unique([0, 1024] + cuts)]
    got = riemann_sum(A, 0.7, Partition(pts))
    assert math.isclose(got, float(A.delta_pairs(0, 1024, 0.7)), abs_tol=1e-12)


def test_young_integral_of_identity(ux_field):
    """With A_u(x) = u x and Y_r = r the integral is int_0^1 r dr."""
    res = young_integral(ux_field, lambda r: r, 0.0, 1.0, tol=1e-3)
    assert res.converged
    assert abs(res.value - 0.5) < 2e-3


def test_young_integral_additive(ux_field):
    Y = lambda r: np.sin(4 * r)
    tol = 1e-3
    whole = young_integral(ux_field, Y, 0.0, 1.0, tol=tol).value
    parts = young_integral(ux_field, Y, 0.0, 0.5, tol=tol).value + young_integral(ux_field, Y, 0.5, 1.0, tol=tol).value
    assert abs(whole - parts) < 2 * tol


def test_young_integral_nonconvergence(ux_field):
    with pytest.raises(NonConvergence) as info:
        young_integral(ux_field, lambda r: r, 0.0, 1.0, tol=1e-14, max_depth=3)
    assert info.value.level == 3 and info.value.residual > 1e-14
    soft = young_integral(ux_field, lambda r: r, 0.0, 1.0, tol=1e-14, max_depth=3, strict=False)
    assert not soft.converged and soft.value == info.value.value


def test_young_integral_warns_below_threshold(ux_field):
    with pytest.warns(UserWarning, match="need not converge"):
        young_integral(ux_field, lambda r: r, 0.0, 1.0, tol=1e-3, theta=0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        young_integral(ux_field, lambda r: r, 0.0, 1.0, tol=1e-3, theta=1.2)


def test_partition_points_must_be_grid_nodes(ux_field):
    with pytest.raises(ValueError, match="nodes"):
        riemann_sum(ux_field, 1.0, Partition(np.array([0.0, 0.3333, 1.0])))


def test_partition_validation_and_random_mesh(rng):
    with pytest.raises(ValueError):
        Partition(np.array([0.0]))
    with pytest.raises(ValueError):
        Partition(np.array([0.0, 0.5, 0.5, 1.0]))
    grid = np.linspace(0, 1, 1025)
    for _ in range(20):
        p = Partition.random(grid, 16, rng)
        assert p.s == 0.0 and p.t == 1.0
        assert p.mesh < 2 / 16
    assert len(Partition.dyadic(0, 1, 4)) == 16


def test_sewing_constant():
    assert math.isclose(sewing_constant(2.0), 4 * math.pi**2 / 6, rel_tol=1e-12)
    with pytest.raises(ValueError):
        sewing_constant(1.0)


def test_holder_proxy_linear():
    t = np.linspace(0, 1, 65)
    assert math.isclose(holder_proxy(3 * t, t, 1.0), 3.0, rel_tol=1e-12)


def test_window_exit_reports_time():
    A = AveragedField.from_function(lambda u, x: u + 0 * x, np.linspace(0, 1, 257), np.linspace(-1, 1, 65))
    with pytest.raises(WindowExit) as info:
        solve_yode(A, 0.5, diagnostics=False)
    assert 0.5 <= info.value.time <= 0.51
    assert info.value.position > 1.0


def test_peano_witness():
    out = peano_witness()
    assert out["zero_stays"]
    assert out["final"][1] > 0.45 and out["final"][2] < -0.45
    assert out["rel_error_final"] < 0.01


def test_euler_crosscheck_smooth_drift():
    lat = sample_lattice(1, 2.0**-12, 1.0, 1.0, 5, 0)
    out = euler_crosscheck(make_field("det:linear:a=-1"), fbm_from_lattice(lat, 0.7), 0.5, stride=4)
    assert out["sup_diff"] < 1e-3


def test_uniqueness_probe(sin_field):
    out = uniqueness_probe(sin_field, 0.2, lip=1.0)
    assert out["ok"]
    assert out["sup_gap"] <= 10 * out["gronwall"]


def test_partition_check_inside_envelope(sin_field):
    sol = solve_yode(sin_field, 0.2, diagnostics=False)
    out = partition_check(sin_field, sol.values, 0.0, 1.0, 8, beta=0.9, gamma=0.5, rho=0.9, n_pairs=6)
    assert out["ok"]
    assert out["theta"] > 1


def test_solver_diagnostics(hurst):
    """Global order close to beta (1 + gamma) - 1 = 1 for a smooth drift on a fine grid."""
    path = fbm_from_lattice(sample_lattice(1, 2.0**-10, 1.0, 1.0, 2, 0), hurst)
    sol = solve_yode(compute_A(make_field("det:sin"), path, np.linspace(-8, 8, 321)), 0.2)
    d = sol.diagnostics
    assert d["richardson_error"] < 1e-3
    assert d["empirical_order"] > 0.8
    assert d["beta_1_plus_gamma_gt_1"]


def test_local_order_smooth_field():
    """For delta A_{u,v}(y) = (v - u) sin y we have beta = gamma = 1, so the one-step order is beta (1 + gamma) = 2."""
    out = local_order(lambda u, v, y: (v - u) * np.sin(y), 0.7)
    assert out["order"] >= 2 - 0.15


def test_local_order_rejects_tabulated(ux_field):
    with pytest.raises(ValueError):
        local_order(ux_field, 0.1)


def test_apriori_bound_linear_growth(sin_field):
    out = apriori_bound_check(sin_field, (0.0, 1.0, 4.0), beta=0.5)
    assert out["stable"]


def test_reconstruct_rejects_foreign_grid(fbm_path):
    sol = solve_yode(linear_delta, 1.0, grid=np.linspace(0, 1, 7), diagnostics=False)
    with pytest.raises(ValueError):
        sde_reconstruct(sol, fbm_path)


def test_solution_csv(tmp_path, fbm_path, sin_field):
    sol = solve_yode(sin_field, 0.2, diagnostics=False)
    sol.to_csv(tmp_path / "y.csv", X=sde_reconstruct(sol, fbm_path))
    lines = (tmp_path / "y.csv").read_text().splitlines()
    assert lines[0] == "t,Y0,X0" and len(lines) == sol.t.size + 1
