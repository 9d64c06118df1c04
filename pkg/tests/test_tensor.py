import numpy as np
import pytest

from lsksr.errors import InvalidRangeError, InvalidShapeError, ShapeMismatchError
from lsksr.tensor import Rng, elementwise, random_uniform, tensor, zeros


def test_zeros_small():
    t = zeros((1, 1, 2, 2))
    assert t.shape == (1, 1, 2, 2)
    assert np.all(t == 0.0)


def test_zeros_size_is_product_of_dims():
    assert zeros((2, 3, 4, 5)).size == 120


def test_zero_dim_rejected():
    with pytest.raises(InvalidShapeError):
        zeros((1, 0, 1, 1))


def test_random_uniform_deterministic():
    a = random_uniform(Rng(7), (1, 1, 1, 4), 0.0, 1.0)
    b = random_uniform(Rng(7), (1, 1, 1, 4), 0.0, 1.0)
    assert a.tobytes() == b.tobytes()


def test_random_uniform_range():
    t = random_uniform(Rng(7), (1, 1, 1, 4), -0.5, 0.5)
    assert np.all(t >= -0.5) and np.all(t < 0.5)


def test_random_uniform_empty_range_rejected():
    with pytest.raises(InvalidRangeError):
        random_uniform(Rng(7), (1, 1, 1, 4), 1.0, 1.0)


def test_elementwise_add_sub_mul():
    a = tensor([[1, 2]], dims=(1, 1, 1, 2))
    b = tensor([[3, 4]], dims=(1, 1, 1, 2))
    assert elementwise(a, b, "add").ravel().tolist() == [4, 6]
    assert np.all(elementwise(a, a, "sub") == 0.0)
    a2 = tensor([[2, 3]], dims=(1, 1, 1, 2))
    b2 = tensor([[4, 5]], dims=(1, 1, 1, 2))
    assert elementwise(a2, b2, "mul").ravel().tolist() == [8, 15]


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        elementwise(zeros((1, 1, 2, 2)), zeros((1, 1, 2, 3)), "add")


def test_add_commutative_bitexact():
    rng = Rng(11)
    a = random_uniform(rng, (2, 3, 4, 5), -1, 1)
    b = random_uniform(rng, (2, 3, 4, 5), -1, 1)
    assert elementwise(a, b, "add").tobytes() == elementwise(b, a, "add").tobytes()


def test_flat_round_trip_bitexact():
    t = random_uniform(Rng(3), (2, 2, 3, 3), -1, 1)
    flat = t.reshape(-1)
    back = tensor(flat, dims=t.shape)
    assert back.tobytes() == t.tobytes()


def test_outputs_are_immutable():
    t = zeros((1, 1, 2, 2))
    with pytest.raises(ValueError):
        t[0, 0, 0, 0] = 1.0
