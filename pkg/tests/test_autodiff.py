"""Per-op gradient checks for the autodiff engine against finite differences."""

import numpy as np
import pytest

from maescale import autodiff as ad
from maescale.autodiff import Tensor


def numeric_grad(fn, arrays, index, h=1e-6):
    """Central-difference gradient of scalar fn w.r.t. arrays[index]."""
    base = [a.copy() for a in arrays]
    grad = np.zeros_like(base[index])
    flat = grad.ravel()
    target = base[index].ravel()
    for j in range(target.size):
        orig = target[j]
        target[j] = orig + h
        up = fn(*base)
        target[j] = orig - h
        down = fn(*base)
        target[j] = orig
        flat[j] = (up - down) / (2 * h)
    return grad


def check_op(build, arrays, rtol=1e-6):
    """`build` maps Tensors to a scalar Tensor; compare AD grads to numeric."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()

    def scalar(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    for idx, t in enumerate(tensors):
        expected = numeric_grad(scalar, arrays, idx)
        got = t.grad if t.grad is not None else np.zeros_like(arrays[idx])
        np.testing.assert_allclose(got, expected, rtol=rtol, atol=1e-7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_add_broadcast(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    check_op(lambda x, y: ad.tsum(ad.mul(ad.add(x, y), ad.add(x, y))), [a, b])


def test_sub_and_mul(rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 3))
    check_op(lambda x, y: ad.tsum(ad.mul(ad.sub(x, y), x)), [a, b])


def test_matmul_2d(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    check_op(lambda x, y: ad.tsum(ad.mul(x @ y, x @ y)), [a, b])


def test_matmul_batched_with_broadcast(rng):
    a = rng.normal(size=(5, 3, 4))
    b = rng.normal(size=(4, 2))
    check_op(lambda x, y: ad.tsum(ad.mul(x @ y, x @ y)), [a, b])


def test_reshape_swapaxes(rng):
    a = rng.normal(size=(2, 3, 4))
    check_op(lambda x: ad.tsum(ad.mul(ad.swapaxes(ad.reshape(x, (2, 12)), 0, 1), 1.5)), [a])


def test_sum_axis_keepdims(rng):
    a = rng.normal(size=(3, 5))
    check_op(lambda x: ad.tsum(ad.mul(ad.tsum(x, axis=1, keepdims=True), x)), [a])


def test_mean(rng):
    a = rng.normal(size=(4, 6))
    check_op(lambda x: ad.tsum(ad.mul(ad.tmean(x, axis=1), 2.0)), [a])


def test_gelu(rng):
    a = rng.normal(size=(3, 4))
    check_op(lambda x: ad.tsum(ad.gelu(x)), [a])


def test_softmax(rng):
    a = rng.normal(size=(2, 3, 5))
    w = rng.normal(size=(2, 3, 5))
    check_op(lambda x: ad.tsum(ad.mul(ad.softmax(x), w)), [a])


def test_layer_norm(rng):
    x = rng.normal(size=(3, 8))
    g = rng.normal(size=(8,)) + 1.0
    b = rng.normal(size=(8,))
    w = rng.normal(size=(3, 8))
    check_op(lambda xx, gg, bb: ad.tsum(ad.mul(ad.layer_norm(xx, gg, bb), w)), [x, g, b], rtol=1e-5)


def test_softmax_cross_entropy(rng):
    logits = rng.normal(size=(6, 4))
    labels = rng.integers(0, 4, size=6)
    onehot = np.eye(4)[labels]
    check_op(lambda z: ad.softmax_cross_entropy(z, onehot), [logits])


def test_composite_graph(rng):
    x = rng.normal(size=(4, 5))
    w1 = rng.normal(size=(5, 7))
    w2 = rng.normal(size=(7, 3))
    g = rng.normal(size=(7,)) + 1.0
    b = rng.normal(size=(7,))

    def net(xx, ww1, ww2, gg, bb):
        h = ad.gelu(xx @ ww1)
        h = ad.layer_norm(h, gg, bb)
        out = ad.softmax(h @ ww2)
        return ad.tsum(ad.mul(out, out))

    check_op(net, [x, w1, w2, g, b], rtol=1e-5)


def test_backward_requires_scalar(rng):
    t = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        t.backward()


def test_grad_accumulates_on_reuse(rng):
    a = rng.normal(size=(3,))
    t = Tensor(a, requires_grad=True)
    out = ad.tsum(ad.add(t, t))
    out.backward()
    np.testing.assert_allclose(t.grad, 2.0 * np.ones(3))
