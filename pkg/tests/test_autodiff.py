import numpy as np
import pytest

from tsa_aqa import autodiff as ad
from tsa_aqa.autodiff import Tensor, backward
from tsa_aqa.autodiff.tensor import (
    NonFiniteValueError,
    NotEvaluatedError,
    ShapeMismatchError,
)


def tensor(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


def test_forward_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 4))
    w = rng.standard_normal((4, 3))
    a = ad.matmul(tensor(x), tensor(w)).data
    b = ad.matmul(tensor(x), tensor(w)).data
    assert np.array_equal(a, b)


def test_softmax_uniform_on_constant_row():
    out = ad.softmax(tensor([[0.0, 0.0, 0.0]]), axis=-1)
    assert np.allclose(out.data, 1.0 / 3.0, atol=1e-15)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    x = tensor(rng.standard_normal((10, 7)) * 5)
    out = ad.softmax(x, axis=-1)
    assert np.all(np.abs(out.data.sum(axis=-1) - 1.0) <= 1e-12)


def test_layer_norm_of_constant_vector_is_zero_before_affine():
    x = tensor(np.full((1, 6), 3.25))
    gamma = tensor(np.ones(6))
    beta = tensor(np.zeros(6))
    out = ad.layer_norm(x, gamma, beta)
    assert np.allclose(out.data, 0.0)


def test_sum_gradient_is_ones():
    x = tensor(np.arange(12.0).reshape(3, 4))
    total = ad.scale(ad.mean(x), 12.0)
    backward(total)
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_matmul_gradient_wrt_weight_is_xT_seed():
    rng = np.random.default_rng(3)
    x = tensor(rng.standard_normal((4, 3)), grad=False)
    w = tensor(rng.standard_normal((3, 5)))
    out = ad.matmul(Tensor(x.data, requires_grad=False), w)
    seed = rng.standard_normal((4, 5))
    backward(out, seed)
    assert np.allclose(w.grad, x.data.T @ seed, atol=1e-12)


def test_relu_flat_region_has_zero_gradient():
    x = tensor([[-2.0, -0.5, 1.0]])
    out = ad.mean(ad.relu(x))
    backward(out)
    assert np.allclose(x.grad, [[0.0, 0.0, 1.0 / 3.0]])


def test_unused_input_gets_zero_gradient():
    x = tensor([[1.0, 2.0]])
    unused = tensor([[5.0, 6.0]])
    backward(ad.mean(x))
    assert np.array_equal(unused.grad_value(), np.zeros((1, 2)))


def test_gradient_accumulates_across_backward_calls():
    x = tensor([[1.0, 2.0]])
    backward(ad.mean(x))
    backward(ad.mean(x))
    assert np.allclose(x.grad, np.full((1, 2), 1.0))
    x.zero_grad()
    assert x.grad is None


def test_losses_are_nonnegative():
    rng = np.random.default_rng(4)
    p = tensor(rng.uniform(0.01, 0.99, (3, 8)))
    t = (rng.uniform(size=(3, 8)) > 0.5).astype(float)
    assert ad.binary_cross_entropy(p, t).item() >= 0.0
    a = tensor(rng.standard_normal((4, 4)))
    b = tensor(rng.standard_normal((4, 4)))
    assert ad.squared_error(a, b).item() >= 0.0


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatchError):
        ad.matmul(tensor(np.ones((2, 3))), tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatchError):
        ad.add(tensor(np.ones((2, 3))), tensor(np.ones((3, 2))))
    with pytest.raises(ShapeMismatchError):
        ad.max_pool(tensor(np.ones((2, 5))), axis=1, k=2)


def test_nonfinite_rejected_at_boundary():
    with pytest.raises(NonFiniteValueError):
        Tensor(np.array([1.0, np.nan]))
    with pytest.raises(NonFiniteValueError):
        Tensor(np.array([np.inf]))


def test_backward_on_constant_raises_not_evaluated():
    c = Tensor(np.ones((2, 2)), requires_grad=False)
    with pytest.raises(NotEvaluatedError):
        backward(c)


def test_no_grad_disables_tape():
    x = tensor(np.ones((2, 2)))
    with ad.no_grad():
        out = ad.relu(x)
    assert out.parents == () and not out.requires_grad


def test_resample_interpolates_length_two_step():
    x = tensor(np.array([[1.0, 10.0], [5.0, 2.0]]), grad=False)
    out = ad.resample_linear(x, 5)
    expected = np.array(
        [
            [1.0, 10.0],
            [2.0, 8.0],
            [3.0, 6.0],
            [4.0, 4.0],
            [5.0, 2.0],
        ]
    )
    assert np.allclose(out.data, expected)


def test_max_pool_forward_and_routing():
    x = tensor(np.array([[1.0, 3.0, 2.0, 0.0]]))
    out = ad.max_pool(x, axis=1, k=2)
    assert np.array_equal(out.data, [[3.0, 2.0]])
    backward(ad.scale(ad.mean(out), 2.0))
    assert np.array_equal(x.grad, [[0.0, 1.0, 1.0, 0.0]])


def test_float32_mode():
    from tsa_aqa.autodiff import set_default_dtype

    set_default_dtype(np.float32)
    try:
        x = tensor(np.ones((2, 2)))
        assert x.data.dtype == np.float32
        out = ad.relu(x)
        backward(ad.mean(out))
        assert x.grad is not None
    finally:
        set_default_dtype(np.float64)
    with pytest.raises(ValueError):
        set_default_dtype(np.int32)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    params = {
        "w": Tensor(rng.standard_normal((3, 4))),
        "b": Tensor(rng.standard_normal(4)),
        "s": Tensor(np.asarray(2.5)),
    }
    path = tmp_path / "model.tsaw"
    ad.save_checkpoint(params, path)
    loaded = ad.load_checkpoint(path)
    assert set(loaded) == {"w", "b", "s"}
    for name, t in params.items():
        assert np.array_equal(loaded[name], t.data)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.tsaw"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ad.BadMagicError):
        ad.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    params = {"w": Tensor(np.ones((8, 8)))}
    path = tmp_path / "model.tsaw"
    ad.save_checkpoint(params, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 12])
    with pytest.raises(ad.TruncatedFileError):
        ad.load_checkpoint(path)
