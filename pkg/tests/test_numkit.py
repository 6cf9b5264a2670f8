import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import naive_matmul
from loadcast.errors import NonFiniteError, ShapeError
from loadcast.numkit import (
    activate,
    activate_grad,
    finite_diff_grad,
    make_rng,
    matmul,
    relative_error,
    rng_matrix,
)


def test_matmul_identity(rng):
    m = rng.normal(size=(2, 2))
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_matmul_zero_annihilates(rng):
    out = matmul(np.zeros((2, 3)), rng.normal(size=(3, 4)))
    assert out.shape == (2, 4)
    assert not out.any()


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a.tolist(), b.tolist()), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_non_finite_result():
    with pytest.raises(NonFiniteError):
        matmul(np.array([[1e308]]), np.array([[1e308]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_matmul_associative(seed, n, k, m, p):
    r = make_rng(seed)
    a, b, c = r.normal(size=(n, k)), r.normal(size=(k, m)), r.normal(size=(m, p))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-12)


def test_activation_fixed_points():
    assert activate(np.array([0.0]), "tanh")[0] == 0.0
    assert activate(np.array([0.0]), "sigmoid")[0] == 0.5
    assert abs(activate(np.array([20.0]), "tanh")[0] - 1.0) < 1e-9


def test_tanh_half_matches_high_precision():
    mpmath.mp.dps = 30
    expected = float(mpmath.tanh(mpmath.mpf("0.5")))
    assert abs(activate(np.array([0.5]), "tanh")[0] - expected) < 1e-15
    assert round(expected, 6) == 0.462117


def test_unknown_activation():
    with pytest.raises(ValueError):
        activate(np.zeros(1), "relu")


# beyond |x| ~ 18 (tanh) and ~ 36 (sigmoid) float64 rounds to the bound itself
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-18, 18)))
def test_tanh_strictly_bounded(x):
    y = activate(x, "tanh")
    assert np.all((y > -1) & (y < 1))


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-30, 30)))
def test_sigmoid_strictly_bounded(x):
    y = activate(x, "sigmoid")
    assert np.all((y > 0) & (y < 1))


def test_sigmoid_extremes_do_not_overflow():
    y = activate(np.array([-1000.0, 1000.0]), "sigmoid")
    assert np.all(np.isfinite(y))


@pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
def test_activation_derivative_matches_finite_differences(kind, rng):
    xs = rng.uniform(-4, 4, size=25)
    for x in xs:
        fd = finite_diff_grad(lambda v: activate(v, kind)[0], np.array([x]))
        assert abs(fd[0] - activate_grad(np.array([x]), kind)[0]) < 1e-7


def test_rng_matrix_range_and_determinism():
    a = rng_matrix(make_rng(7), 30, 40, 0.1)
    assert np.all(np.abs(a) <= 0.1)
    np.testing.assert_array_equal(a, rng_matrix(make_rng(7), 30, 40, 0.1))
    assert np.any(a != rng_matrix(make_rng(8), 30, 40, 0.1))


def test_rng_matrix_default_scale_is_inverse_sqrt_fan_in():
    a = rng_matrix(make_rng(0), 500, 16)
    assert np.abs(a).max() <= 0.25
    assert np.abs(a).max() > 0.24


def test_rng_matrix_rejects_non_positive_scale():
    with pytest.raises(ValueError):
        rng_matrix(make_rng(0), 2, 2, 0.0)


def test_finite_diff_constant_function():
    np.testing.assert_array_equal(finite_diff_grad(lambda v: 3.0, np.ones(4)), np.zeros(4))


@pytest.mark.parametrize("order", [2, 4])
def test_finite_diff_half_squared_norm(order, rng):
    x = rng.normal(size=6)
    np.testing.assert_allclose(finite_diff_grad(lambda v: 0.5 * v @ v, x, order=order), x, atol=1e-7)


def test_finite_diff_does_not_mutate_input():
    x = np.array([1.0, 2.0])
    finite_diff_grad(lambda v: v.sum(), x)
    np.testing.assert_array_equal(x, [1.0, 2.0])


def test_finite_diff_reports_non_finite():
    with pytest.raises(NonFiniteError):
        finite_diff_grad(lambda v: np.inf if v[0] > 0 else 0.0, np.array([0.0]))


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-10]))[0] == pytest.approx(1e-2)
    assert relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5
