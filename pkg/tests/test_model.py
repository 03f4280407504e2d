import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sktk.model import (
    DetailedBalanceError,
    DimensionError,
    InvalidModelError,
    MicroParams,
    ModelParams,
    macro_to_micro,
    micro_to_macro,
    validate,
)


def test_symmetric_matrix_with_equal_weights_is_valid():
    assert validate(ModelParams(D=[1, 1], A=[[1, 2], [2, 1]], pi=[1, 1]))


def test_weighted_detailed_balance_is_valid():
    assert validate(ModelParams(D=[1, 1], A=[[1, 2], [1, 1]], pi=[1, 2]))


def test_broken_detailed_balance_is_reported():
    report = validate(ModelParams(D=[1, 1], A=[[1, 2], [3, 1]], pi=[1, 1]))
    assert not report
    assert any("detailed balance" in v for v in report.violations)


def test_each_invariant_is_listed():
    report = validate(ModelParams(D=[-1, 1], A=[[0, 1], [1, 1]], pi=[1, -1]))
    text = " ".join(report.violations)
    assert "negative diffusion" in text
    assert "strictly positive" in text
    assert "A[0][0]" in text


def test_require_valid_raises():
    with pytest.raises(InvalidModelError):
        ModelParams(D=[1, 1], A=[[1, 2], [3, 1]], pi=[1, 1]).require_valid()


@pytest.mark.parametrize("kwargs", [
    dict(D=[1, 1], A=[[1, 0], [0, 1]], pi=[1]),
    dict(D=[1], A=[[1, 0], [0, 1]], pi=[1, 1]),
    dict(D=[1, 1], A=[1, 1], pi=[1, 1]),
])
def test_shape_mismatch(kwargs):
    with pytest.raises(DimensionError):
        ModelParams(**kwargs)


def test_params_are_read_only():
    p = ModelParams(D=[1.0], A=[[1.0]], pi=[1.0])
    with pytest.raises(ValueError):
        p.A[0, 0] = 2.0


def test_micro_to_macro_example():
    A = micro_to_macro(MicroParams(D=[0, 0], Dij=[[2, 1], [1, 2]], pi=[1 / 3, 2 / 3])).A
    np.testing.assert_allclose(A, [[2 / 3, 2 / 3], [1 / 3, 4 / 3]], rtol=1e-15)


def test_macro_to_micro_example():
    micro = macro_to_micro(ModelParams(D=[0, 0], A=[[2 / 3, 2 / 3], [1 / 3, 4 / 3]], pi=[1 / 3, 2 / 3]))
    np.testing.assert_allclose(micro.Dij, [[2, 1], [1, 2]], rtol=1e-14)


def test_zero_pair_rates_give_zero_matrix():
    assert not micro_to_macro(MicroParams(D=[1, 1], Dij=np.zeros((2, 2)), pi=[0.3, 0.7])).A.any()


def test_unit_weights_keep_symmetric_matrix():
    A = [[1.0, 0.5], [0.5, 2.0]]
    np.testing.assert_array_equal(macro_to_micro(ModelParams([1, 1], A, [1, 1])).Dij, A)


def test_macro_to_micro_rejects_unbalanced():
    with pytest.raises(DetailedBalanceError):
        macro_to_micro(ModelParams(D=[1, 1], A=[[1, 2], [3, 1]], pi=[1, 1]))


def test_micro_constructor_symmetrises():
    m = MicroParams(D=[1, 1], Dij=[[1, 2], [4, 1]], pi=[1, 1])
    np.testing.assert_array_equal(m.Dij, m.Dij.T)
    assert m.Dij[0, 1] == 3.0


def test_normalized_weights_sum_to_one():
    assert MicroParams(D=[1, 1], Dij=np.eye(2), pi=[2, 6]).normalized().pi.tolist() == [0.25, 0.75]


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@st.composite
def micro_params(draw):
    n = draw(st.integers(1, 4))
    D = [draw(st.floats(0, 10)) for _ in range(n)]
    pi = [draw(positive) for _ in range(n)]
    upper = [[draw(positive) for _ in range(n)] for _ in range(n)]
    Dij = np.triu(upper) + np.triu(upper, 1).T
    return MicroParams(D=D, Dij=Dij, pi=pi)


@given(micro_params())
@settings(max_examples=200, deadline=None)
def test_micro_to_macro_always_balanced(micro):
    assert validate(micro_to_macro(micro), tol_db=1e-14)


@given(st.lists(st.integers(-6, 6), min_size=2, max_size=2), st.integers(0, 8), st.integers(0, 8))
def test_exact_balance_for_dyadic_data(exponents, d01, d00):
    # powers of two multiply without rounding, so the identity holds with no slack
    pi = [2.0 ** e for e in exponents]
    micro = MicroParams(D=[1, 1], Dij=[[d00 + 1, d01], [d01, 1]], pi=pi)
    assert validate(micro_to_macro(micro), tol_db=0.0)


@given(micro_params())
@settings(max_examples=200, deadline=None)
def test_round_trip_identity(micro):
    back = macro_to_micro(micro_to_macro(micro))
    np.testing.assert_allclose(back.Dij, micro.Dij, rtol=1e-14)
    np.testing.assert_array_equal(back.D, micro.D)
    np.testing.assert_array_equal(back.pi, micro.pi)
