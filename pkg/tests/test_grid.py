import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from sktk.grid import (
    Grid,
    backward_diff,
    cell_power_mean,
    discrete_norm,
    forward_diff,
    hat,
    interpolant_gradient_norm,
    interpolant_lp_norm,
    interpolate,
    laplacian,
    p1_inner,
)

SPIKE = np.array([0.0, 1.0, 0.0, 0.0])


def test_grid_basics():
    g = Grid(8)
    assert g.h == 0.125
    np.testing.assert_array_equal(g.x, np.arange(8) / 8)
    assert g.wrap(-1) == 7 and g.wrap(8) == 0


@pytest.mark.parametrize("M", [0, 1, 2.5])
def test_grid_rejects_bad_size(M):
    with pytest.raises(ValueError):
        Grid(M)


def test_stencils_on_spike():
    np.testing.assert_array_equal(forward_diff(SPIKE), [4, -4, 0, 0])
    np.testing.assert_array_equal(backward_diff(SPIKE), [0, 4, -4, 0])
    np.testing.assert_array_equal(laplacian(SPIKE), [16, -32, 16, 0])


@pytest.mark.parametrize("op", [forward_diff, backward_diff, laplacian])
def test_constant_is_annihilated(op):
    assert not op(np.full(7, 3.2)).any()


def test_operators_act_on_last_axis():
    w = np.stack([SPIKE, 2 * SPIKE])
    np.testing.assert_array_equal(laplacian(w)[1], 2 * laplacian(SPIKE))


grid_functions = arrays(np.float64, st.integers(2, 40), elements=st.floats(-10, 10))


@given(grid_functions)
def test_differences_telescope(w):
    scale = max(1.0, np.abs(w).max()) * len(w) ** 2
    for op in (forward_diff, backward_diff, laplacian):
        assert abs(op(w).sum()) <= 1e-10 * scale


@given(grid_functions)
def test_backward_is_shifted_forward(w):
    np.testing.assert_allclose(backward_diff(w), np.roll(forward_diff(w), 1), atol=1e-12 * len(w) * 10)


@given(grid_functions)
def test_laplacian_factorises(w):
    tol = 1e-12 * max(1.0, np.abs(w).max()) * len(w) ** 2
    np.testing.assert_allclose(laplacian(w), backward_diff(forward_diff(w)), atol=tol)
    np.testing.assert_allclose(laplacian(w), forward_diff(backward_diff(w)), atol=tol)


@given(st.integers(2, 30).flatmap(lambda M: st.tuples(
    arrays(np.float64, M, elements=st.floats(-1, 1)), arrays(np.float64, M, elements=st.floats(-1, 1)))))
def test_summation_by_parts(pair):
    w, q = pair
    assert abs(np.sum(forward_diff(w) * q) + np.sum(w * backward_diff(q))) <= 1e-12 * len(w) ** 2


@given(st.integers(2, 30).flatmap(lambda M: st.tuples(
    arrays(np.float64, M, elements=st.floats(-1, 1)), arrays(np.float64, M, elements=st.floats(-1, 1)))))
def test_discrete_product_rule(pair):
    w, q = pair
    lhs = forward_diff(w * q)
    rhs = np.roll(w, -1) * forward_diff(q) + forward_diff(w) * q
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * len(w))


def test_discrete_norm_examples():
    assert discrete_norm(np.ones(9), 3.0) == pytest.approx(1.0, abs=1e-15)
    w = np.zeros(10)
    w[1] = 1.0
    assert discrete_norm(w, 2) == pytest.approx(0.1 ** 0.5, rel=1e-15)
    assert discrete_norm(-2.5 * SPIKE, 3) == pytest.approx(2.5 * discrete_norm(SPIKE, 3), rel=1e-15)


@pytest.mark.parametrize("fn", [discrete_norm, interpolant_lp_norm, interpolant_gradient_norm])
def test_p_below_one_rejected(fn):
    with pytest.raises(ValueError):
        fn(SPIKE, 0.5)


def test_interpolant_nodes_and_midpoints():
    w = np.array([1.0, 3.0, -2.0, 0.5, 4.0])
    f = interpolate(w)
    np.testing.assert_allclose(f(np.arange(5) / 5), w, atol=1e-15)
    np.testing.assert_allclose(f(np.arange(5) / 5 + 0.1), (w + np.roll(w, -1)) / 2, atol=1e-15)
    assert f(1.0) == pytest.approx(w[0])
    np.testing.assert_allclose(interpolate(np.full(4, 2.0))(np.linspace(0, 1, 17)), 2.0)


def test_interpolant_is_sum_of_hats():
    w = np.array([1.0, 3.0, -2.0, 0.5])
    x = np.linspace(0, 1, 41, endpoint=False)
    h = 0.25
    nodes = np.arange(5) * h
    vals = np.append(w, w[0])
    expected = sum(v * hat(x - xk, h) for v, xk in zip(vals, nodes))
    np.testing.assert_allclose(interpolate(w)(x), expected, atol=1e-14)


def test_interpolant_derivative_is_forward_difference():
    w = np.array([1.0, 3.0, -2.0, 0.5])
    np.testing.assert_array_equal(interpolate(w).derivative([0.1, 0.3, 0.6, 0.9]), forward_diff(w))


def test_indicator_norm_ratio():
    for M in (3, 10):
        w = np.zeros(M)
        w[1] = 1.0
        for p in (1, 2, 3, 4, 2.5):
            ratio = discrete_norm(w, p) ** p / interpolant_lp_norm(w, p) ** p
            assert ratio == pytest.approx((p + 1) / 2, rel=1e-12)


def test_constant_norms_agree():
    assert interpolant_lp_norm(np.full(6, 1.7), 3) == pytest.approx(1.7, rel=1e-14)


def test_interpolant_norm_against_quadrature():
    w = np.array([0.3, -1.2, 2.0, 0.0, 0.7])
    f = interpolate(w)
    for p in (1.0, 2.0, 3.5):
        pieces = [quad(lambda x: abs(f(x)) ** p, k / 5, (k + 1) / 5, epsabs=1e-14, epsrel=1e-13)[0]
                  for k in range(5)]
        assert interpolant_lp_norm(w, p) == pytest.approx(sum(pieces) ** (1 / p), rel=1e-10)


def test_cell_power_mean_branches():
    # equal endpoints, nearly equal endpoints (series), and a sign change
    assert cell_power_mean(2.0, 2.0, 3) == pytest.approx(8.0)
    a, b = 1.0, 1.0 + 1e-12
    assert cell_power_mean(a, b, 2) == pytest.approx((a * a + a * b + b * b) / 3, rel=1e-14)
    assert cell_power_mean(1.0, -1.0, 1) == pytest.approx(0.5, rel=1e-14)
    assert cell_power_mean(1.0, -3.0, 2) == pytest.approx((1 - 3 + 9) / 3, rel=1e-14)


def test_gradient_norm_two_cells():
    assert interpolant_gradient_norm(np.array([0.0, 1.0]), 1) == pytest.approx(2.0)


@given(st.floats(0, 100), st.floats(0, 100), st.sampled_from([1.0, 2.0, 3.0, 4.0, 1.5]))
def test_elementary_inequality(A, B, p):
    # int_0^1 |A beta + B (1-beta)|^p <= (A^p + B^p) / 2, i.e. the cell integral is dominated
    assert cell_power_mean(A, B, p) <= 0.5 * (A**p + B**p) * (1 + 1e-12) + 1e-300
    if abs(A - B) > 1e-6 * max(A, B, 1.0):
        assert (A ** (p + 1) - B ** (p + 1)) / (A - B) >= (A**p + B**p) * (1 - 1e-12)


nonneg = arrays(np.float64, st.integers(2, 50), elements=st.floats(0, 1e3))


@given(nonneg, st.sampled_from([1, 2, 3, 4]))
@settings(max_examples=200)
def test_norm_sandwich(w, p):
    disc = discrete_norm(w, p) ** p
    cont = interpolant_lp_norm(w, p) ** p
    assert cont <= disc * (1 + 1e-12) + 1e-300
    assert disc <= (p + 1) / 2 * cont * (1 + 1e-12) + 1e-300


@given(grid_functions, st.sampled_from([1.0, 2.0, 3.0, 4.0]))
def test_gradient_norm_identity(w, p):
    assert interpolant_gradient_norm(w, p) == discrete_norm(forward_diff(w), p)


@given(st.integers(2, 20).flatmap(lambda M: st.tuples(
    arrays(np.float64, M, elements=st.floats(-5, 5)), arrays(np.float64, M, elements=st.floats(-5, 5)))))
def test_p1_inner_matches_norm(pair):
    a, b = pair
    assert p1_inner(a, a) == pytest.approx(interpolant_lp_norm(a, 2) ** 2, rel=1e-10, abs=1e-12)
    assert p1_inner(a, b) == pytest.approx(p1_inner(b, a), rel=1e-12, abs=1e-12)
