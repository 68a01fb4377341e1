import io

import numpy as np
import pytest

from clgnet import tensor as T
from clgnet.errors import IntegrityError
from clgnet.gradcheck import check_gradients, finite_diff_grad, relative_error
from clgnet.io import read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor
from clgnet.tensor import Tensor


def test_fd_sum_of_squares():
    x = Tensor(np.array([1.0, 2.0]))
    g = finite_diff_grad(lambda v: T.sum(T.mul(v, v)), x, h=1e-5)
    assert np.abs(g - [2.0, 4.0]).max() < 1e-8


def test_fd_constant_is_zero():
    x = Tensor(np.array([0.3, -4.0, 7.0]))
    assert np.array_equal(finite_diff_grad(lambda v: Tensor(5.0), x), np.zeros(3))


def test_fd_l1_sign_pattern():
    target = Tensor(np.array([0.0, 1.0, -2.0]))
    x = Tensor(np.array([1.0, -1.0, 0.5]))
    g = finite_diff_grad(lambda v: T.sum(T.abs(T.sub(v, target))), x)
    assert np.allclose(g, [1.0, -1.0, 1.0], atol=1e-9)


def test_fd_leaves_input_untouched():
    x0 = np.random.default_rng(0).standard_normal(6)
    x = Tensor(x0.copy())
    finite_diff_grad(lambda v: T.sum(T.mul(v, v)), x)
    assert np.array_equal(x.data, x0)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0)[()] == 0.0
    assert relative_error(1.0, 1.1)[()] == pytest.approx(0.1 / 1.1)


def test_check_gradients_smooth_function():
    rng = np.random.default_rng(1)
    w = Tensor(rng.standard_normal((4, 3)))
    x = Tensor(rng.standard_normal((3, 4)))
    rep = check_gradients(lambda: T.sum(T.mul(T.mul(w, w), T.reshape(x, (4, 3)))), {"w": w, "x": x}, n_coords=5)
    assert rep.worst < 1e-8
    assert rep.kinked == []


def test_check_gradients_catches_wrong_backward():
    # an op whose recorded gradient is off by a factor of two
    def bad_square(t):
        return T.apply_op("bad", [t], [t.data ** 2], lambda g: (g * t.data,))[0]

    w = Tensor(np.array([0.5, 1.5, -2.0]))
    rep = check_gradients(lambda: T.sum(bad_square(w)), {"w": w}, n_coords=None)
    assert rep.worst > 0.4


def test_tensor_bytes_roundtrip():
    x = np.random.default_rng(2).standard_normal((2, 3, 4))
    t, end = tensor_from_bytes(tensor_to_bytes(x))
    assert np.array_equal(t.data, x)
    assert end == len(tensor_to_bytes(x))


def test_tensor_stream_roundtrip():
    fh = io.BytesIO()
    write_tensor(fh, Tensor(np.arange(6.0).reshape(2, 3)))
    write_tensor(fh, Tensor(np.array(3.5)))
    fh.seek(0)
    assert read_tensor(fh).data.tolist() == [[0, 1, 2], [3, 4, 5]]
    assert read_tensor(fh).data == 3.5


def test_truncated_tensor_rejected():
    blob = tensor_to_bytes(np.ones((3, 3)))
    with pytest.raises(IntegrityError):
        tensor_from_bytes(blob[:-4])
    with pytest.raises(IntegrityError):
        tensor_from_bytes(b"XXXX" + blob[4:])
