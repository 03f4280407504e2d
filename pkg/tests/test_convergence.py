import numpy as np
import pytest

from conftest import fourier_data
from sktk.convergence import (
    InsufficientSampling,
    _bump,
    _bump_dt,
    default_dual_family,
    default_test_functions,
    entropy_path,
    fourier_test_function,
    hat_moments,
    l2_space_time_difference,
    lp_space_time,
    product_gap_envelope,
    product_interpolant_gap,
    refinement_study,
    time_derivative_monitor,
    weak_residual,
)
from sktk.grid import Grid
from sktk.master import Trajectory, solve
from sktk.model import ModelParams

HEAT = ModelParams(D=[1.0], A=[[1e-14]], pi=[1.0])


def frozen(u, T=1.0, n=201):
    times = np.linspace(0.0, T, n)
    return Trajectory(times, np.broadcast_to(np.asarray(u, float), (n,) + np.shape(u)).copy())


def test_bump_shape_and_derivative():
    t = np.linspace(0.01, 0.79, 50)
    assert _bump(0.0, 0.8) == 1.0
    assert _bump(0.8, 0.8) == 0.0 and _bump(1.0, 0.8) == 0.0
    fd = (_bump(t + 1e-6, 0.8) - _bump(t - 1e-6, 0.8)) / 2e-6
    np.testing.assert_allclose(_bump_dt(t, 0.8), fd, atol=1e-7)
    assert _bump_dt(0.0, 0.8) == 0.0


def test_test_function_laplacians_agree():
    phi = fourier_test_function(2, "cos", 0.5, shift=0.3)
    x = np.linspace(0, 1, 7)
    np.testing.assert_allclose(phi.lap_h(0.1, x, 1e-3), phi.lap(0.1, x), rtol=1e-4)
    assert phi.w1inf_norm() == pytest.approx(_bump(0.0, 0.5) * (1 + 4 * np.pi), rel=1e-6)
    with pytest.raises(ValueError):
        fourier_test_function(1, "tan", 0.5)


def test_equilibrium_residual_vanishes():
    params = ModelParams(D=[0.5, 0.1], A=[[2 / 3, 2 / 3], [1 / 3, 4 / 3]], pi=[1 / 3, 2 / 3])
    traj = frozen(np.array([[1.3] * 8, [0.6] * 8]), n=2001)
    flat = fourier_test_function(0, "raised", 0.8)
    # only the time quadrature of psi' against a constant is left
    assert weak_residual(traj, params, flat) <= 1e-11


def test_heat_reduction_residual():
    traj = solve(Grid(32).sample(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x)), HEAT, 0.1, n_samples=401)
    for phi in default_test_functions(0.1):
        assert weak_residual(traj, HEAT, phi) <= 1e-6


def test_residual_sampling_checks():
    traj = frozen(np.ones((1, 4)), n=50)
    with pytest.raises(InsufficientSampling):
        weak_residual(traj, HEAT, fourier_test_function(1, "cos", 0.5))
    short = frozen(np.ones((1, 4)), T=0.2)
    with pytest.raises(InsufficientSampling):
        weak_residual(short, HEAT, fourier_test_function(1, "cos", 0.5))
    with pytest.raises(ValueError):
        weak_residual(frozen(np.ones((1, 4))), HEAT, fourier_test_function(1, "cos", 0.5), form="other")


def test_gap_hand_case():
    traj = frozen(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert product_interpolant_gap(traj, 0, 1) == pytest.approx(1 / 6, rel=1e-14)


def test_gap_vanishes_for_constant_partner():
    traj = frozen(np.array([[1.0, 0.2, 3.0, 0.5], [2.0] * 4]))
    assert product_interpolant_gap(traj, 0, 1) == 0.0


def test_gap_against_quadrature():
    u = np.array([[1.0, 0.2, 3.0, 0.5], [0.3, 1.1, 0.4, 2.0]])
    traj = frozen(u)
    x = (np.arange(40000) + 0.5) / 40000
    from sktk.grid import interpolate
    prod = interpolate(u[0] * u[1])(x)
    ref = np.mean(np.abs(prod - interpolate(u[0])(x) * interpolate(u[1])(x)))
    assert product_interpolant_gap(traj, 0, 1) == pytest.approx(ref, rel=1e-6)
    assert product_interpolant_gap(traj, 0, 1) <= product_gap_envelope(traj, 0, 1)


def test_hat_moments_of_constant():
    np.testing.assert_allclose(hat_moments(lambda x: np.ones_like(x), 8), 1 / 8, rtol=1e-14)


def test_monitors_finite(reference_params):
    traj = solve(Grid(16).sample(fourier_data), reference_params, 0.02, n_samples=21)
    assert np.isfinite(time_derivative_monitor(traj, reference_params, default_dual_family()))
    assert lp_space_time(traj, 4.0) > 0
    assert np.all(np.diff(entropy_path(traj, reference_params)) <= 1e-10)


def test_l2_difference_checks():
    a = frozen(np.ones((1, 4)))
    b = frozen(np.ones((1, 8)))
    assert l2_space_time_difference(a, b) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        l2_space_time_difference(a, frozen(np.ones((1, 6))))
    with pytest.raises(ValueError):
        l2_space_time_difference(a, frozen(np.ones((1, 8)), n=202))


def test_heat_refinement_is_second_order():
    study = refinement_study(HEAT, lambda x: (1 + 0.5 * np.sin(2 * np.pi * x))[None], [8, 16, 32, 64], 0.05,
                             n_samples=201)
    orders = study.difference_orders()
    np.testing.assert_allclose(orders, 2.0, atol=0.15)
    assert np.all(study.weak_residuals <= 1e-6)


def test_refinement_input_checks(reference_params):
    with pytest.raises(ValueError):
        refinement_study(reference_params, fourier_data, [16, 24], 0.01)
    with pytest.raises(ValueError):
        refinement_study(reference_params, fourier_data, [32, 16], 0.01)
    with pytest.raises(ValueError):
        refinement_study(reference_params, lambda x: fourier_data(x) - 2, [16, 32], 0.01)
    with pytest.raises(InsufficientSampling):
        refinement_study(reference_params, fourier_data, [16, 32], 0.01, n_samples=50)
