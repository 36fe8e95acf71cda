import math

import numpy as np
import pytest

from hdnn import linalg
from hdnn.errors import DomainError, ParameterError, ShapeError


def test_matmul_identity():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 5))
    assert np.array_equal(linalg.matmul(np.eye(3), a), a)


def test_matmul_zero_annihilates():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 2))
    out = linalg.matmul(np.zeros((3, 4)), a)
    assert np.array_equal(out, np.zeros((3, 2)))


def test_matmul_hand_example():
    out = linalg.matmul([[1.0, 2.0], [3.0, 4.0]], [[5.0], [6.0]])
    assert np.array_equal(out, [[17.0], [39.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        linalg.matmul(np.zeros((2, 3)), np.zeros((4, 2)))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_matmul_identity_and_distributive_properties():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n, k, m = rng.integers(1, 6, size=3)
        a = rng.normal(size=(n, k))
        b = rng.normal(size=(k, m))
        c = rng.normal(size=(k, m))
        left = linalg.matmul(a, b + c)
        right = linalg.matmul(a, b) + linalg.matmul(a, c)
        assert np.abs(left - right).max() < 1e-12
        assert np.abs(linalg.matmul(a, np.eye(k)) - a).max() < 1e-12


def test_matmul_deterministic():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(7, 9))
    b = rng.normal(size=(9, 4))
    assert np.array_equal(linalg.matmul(a, b), linalg.matmul(a, b))


def test_sigmoid_midpoint_and_reference_value():
    out = linalg.sigmoid([[0.0, 2.0]])
    assert out[0, 0] == 0.5
    assert abs(out[0, 1] - 1.0 / (1.0 + math.exp(-2.0))) < 1e-15
    assert abs(out[0, 1] - 0.8807970779778823) < 1e-12


def test_sigmoid_symmetry():
    rng = np.random.default_rng(4)
    x = rng.normal(scale=4.0, size=(5, 5))
    total = linalg.sigmoid(x) + linalg.sigmoid(-x)
    assert np.abs(total - 1.0).max() < 1e-15


def test_sigmoid_open_interval_even_for_huge_inputs():
    out = linalg.sigmoid([[-800.0, -30.0, 30.0, 800.0]])
    assert np.all(out > 0.0) and np.all(out < 1.0)


def test_elementwise_binary_ops_and_shape_checks():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(linalg.elem_mul(a, b), a * b)
    assert np.array_equal(linalg.elem_add(a, b), a + b)
    assert np.array_equal(linalg.elem_sub(a, b), a - b)
    assert np.array_equal(linalg.scale(a, 2.5), 2.5 * a)
    with pytest.raises(ShapeError):
        linalg.elem_add(a, np.zeros((2, 3)))


def test_log_domain_error_and_exp():
    a = np.array([[1.0, math.e]])
    assert np.abs(linalg.elem_log(a) - [[0.0, 1.0]]).max() < 1e-15
    with pytest.raises(DomainError):
        linalg.elem_log(np.array([[1.0, 0.0]]))
    with pytest.raises(DomainError):
        linalg.elem_log(np.array([[-1.0]]))
    assert np.array_equal(linalg.elem_exp(np.zeros((2, 2))), np.ones((2, 2)))


def test_map_elementwise_dispatch():
    a = np.array([[0.0, 1.0]])
    assert np.array_equal(linalg.map_elementwise(a, "sigmoid"), linalg.sigmoid(a))
    assert np.array_equal(linalg.map_elementwise(a, "add", a), 2 * a)
    assert np.array_equal(linalg.map_elementwise(a, "subtract", a), 0 * a)
    assert np.array_equal(linalg.map_elementwise(a, "multiply", a), a * a)
    assert np.array_equal(linalg.map_elementwise(a, "scale", 3.0), 3.0 * a)
    with pytest.raises(ParameterError):
        linalg.map_elementwise(a, "frobnicate")
    with pytest.raises(ParameterError):
        linalg.map_elementwise(a, "add")
    with pytest.raises(ParameterError):
        linalg.map_elementwise(a, "sigmoid", a)


def test_backends_agree():
    numba_mod = pytest.importorskip("hdnn._kernels_numba")
    from hdnn import _kernels_numpy as np_mod

    rng = np.random.default_rng(5)
    a = rng.normal(size=(6, 7))
    b = rng.normal(size=(7, 5))
    assert np.abs(numba_mod.matmul(a, b) - np_mod.matmul(a, b)).max() < 1e-12
    c = rng.normal(size=(5, 7))
    assert np.abs(numba_mod.matmul_nt(a, c) - np_mod.matmul_nt(a, c)).max() < 1e-12
    d = rng.normal(size=(6, 5))
    assert np.abs(numba_mod.matmul_tn(a, d) - np_mod.matmul_tn(a, d)).max() < 1e-12
    x = rng.normal(scale=10.0, size=(4, 9))
    assert np.abs(numba_mod.sigmoid(x) - np_mod.sigmoid(x)).max() < 1e-15
    for temp in (0.5, 1.0, 3.0):
        assert np.abs(numba_mod.softmax_rows(x, temp)
                      - np_mod.softmax_rows(x, temp)).max() < 1e-14
        assert np.abs(numba_mod.log_softmax_rows(x, temp)
                      - np_mod.log_softmax_rows(x, temp)).max() < 1e-12
