"""Autodiff engine: forward values against loop oracles, gradients against finite differences."""

import numpy as np
import pytest

from grff import autodiff as ad
from grff.exceptions import ContractError, DegenerateBatchError, LabelError, ShapeError

TOL = 1e-4


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def P(rng, *shape):
    return ad.Parameter(rng.normal(size=shape))


def weighted_sum(t, w):
    """Scalar loss sum(w * t) with fixed random weights, so every output slot matters."""
    return ad.tsum(ad.mul(t, ad.Tensor(w)))


# -- forward oracles -------------------------------------------------------------

def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
    ref = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(ad.matmul(a, b).data, ref, atol=1e-12)


def test_matmul_rejects_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_conv2d_matches_loop(rng):
    x, k = rng.normal(size=(2, 3, 7, 6)), rng.normal(size=(4, 3, 3, 2))
    out = ad.conv2d_valid(x, k).data
    ref = np.zeros((2, 4, 5, 5))
    for b in range(2):
        for o in range(4):
            for i in range(5):
                for j in range(5):
                    ref[b, o, i, j] = np.sum(x[b, :, i:i + 3, j:j + 2] * k[o])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        ad.conv2d_valid(np.ones((1, 2, 6, 6)), np.ones((3, 1, 5, 5)))


def test_maxpool_matches_window_scan(rng):
    x = rng.integers(0, 4, size=(2, 3, 6, 4)).astype(float)
    out = ad.maxpool2(x).data
    for b in range(2):
        for c in range(3):
            for i in range(3):
                for j in range(2):
                    assert out[b, c, i, j] == x[b, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()


def test_maxpool_ties_route_to_first_cell():
    x = ad.Parameter(np.full((1, 1, 2, 2), 3.0))
    ad.tsum(ad.maxpool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_odd_size():
    with pytest.raises(ShapeError):
        ad.maxpool2(np.ones((1, 1, 3, 4)))


def test_fourier_concatenates_scaled_cos_then_sin(rng):
    a = rng.normal(size=(3, 4))
    out = ad.fourier(a, 0.5, axis=1).data
    np.testing.assert_allclose(out, np.hstack([0.5 * np.cos(a), 0.5 * np.sin(a)]))


def test_softmax_cross_entropy_value():
    logits = np.array([[2.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    labels = np.array([0, 2])
    p0 = np.exp(2) / (np.exp(2) + 1 + np.exp(-1))
    expected = -(np.log(p0) + np.log(1 / 3)) / 2
    assert ad.softmax_cross_entropy(logits, labels).item() == pytest.approx(expected, rel=1e-12)


def test_cross_entropy_label_errors():
    with pytest.raises(LabelError):
        ad.softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ShapeError):
        ad.softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 1, 2]))


def test_batchnorm_train_statistics(rng):
    x = rng.normal(3.0, 2.0, size=(64, 5))
    state = ad.BatchNormState.fresh(5)
    out = ad.batchnorm(x, np.ones(5), np.zeros(5), state, training=True).data
    np.testing.assert_allclose(out.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(0), x.var(0) / (x.var(0) + 1e-5), rtol=1e-10)
    # running stats: momentum 0.1, unbiased variance
    np.testing.assert_allclose(state.running_mean, 0.1 * x.mean(0))
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.var(0, ddof=1))


def test_batchnorm_eval_uses_running_stats(rng):
    state = ad.BatchNormState.fresh(3)
    state.running_mean[:] = [1.0, 2.0, 3.0]
    state.running_var[:] = [4.0, 4.0, 4.0]
    x = np.array([[1.0, 4.0, 3.0]])
    out = ad.batchnorm(x, np.ones(3), np.zeros(3), state, training=False).data
    np.testing.assert_allclose(out, [[0.0, 2.0 / np.sqrt(4 + 1e-5), 0.0]])


def test_batchnorm_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        ad.batchnorm(np.ones((1, 3)), np.ones(3), np.zeros(3), ad.BatchNormState.fresh(3), training=True)


def test_batchnorm_frozen_stats_untouched(rng):
    state = ad.BatchNormState.fresh(4)
    before = state.running_mean.copy(), state.running_var.copy()
    ad.batchnorm(rng.normal(size=(8, 4)), np.ones(4), np.zeros(4), state, training=True, update_stats=False)
    np.testing.assert_array_equal(state.running_mean, before[0])
    np.testing.assert_array_equal(state.running_var, before[1])


# -- gradients -------------------------------------------------------------------

def test_gradcheck_matmul_transpose_reshape(rng):
    a, b = P(rng, 3, 4), P(rng, 5, 4)
    w = rng.normal(size=(5, 3))
    loss = lambda: weighted_sum(ad.reshape(ad.matmul(a, ad.transpose(b)), (5, 3)), w)  # noqa: E731
    assert ad.gradcheck(loss, [a, b]) < TOL


@pytest.mark.parametrize("op", ["cos", "sin", "tanh", "relu", "leaky_relu"])
def test_gradcheck_elementwise(rng, op):
    a = P(rng, 4, 3)
    a.data += np.sign(a.data) * 0.05  # keep kinks away from finite-difference probes
    fn = getattr(ad, op)
    w = rng.normal(size=(4, 3))
    assert ad.gradcheck(lambda: weighted_sum(fn(a), w), [a]) < TOL


def test_gradcheck_add_sub_mul_scale(rng):
    a, b = P(rng, 3, 2), P(rng, 3, 2)
    w = rng.normal(size=(3, 2))
    loss = lambda: weighted_sum(ad.scale(ad.mul(ad.add(a, b), ad.sub(a, b)), 1.7), w)  # noqa: E731
    assert ad.gradcheck(loss, [a, b]) < TOL


def test_gradcheck_linear_bias_concat(rng):
    x, W, b, c = P(rng, 4, 3), P(rng, 3, 5), P(rng, 5), P(rng, 2)
    w = rng.normal(size=(4, 7))
    def loss():
        y = ad.linear(x, W, b)
        z = ad.add_bias(ad.matmul(x, ad.Tensor(np.ones((3, 2)))), c)
        return weighted_sum(ad.concat([y, z], axis=1), w)
    assert ad.gradcheck(loss, [x, W, b, c]) < TOL


def test_gradcheck_slot_linear(rng):
    x, W, b = P(rng, 3, 4), P(rng, 4, 6), P(rng, 6)
    w = rng.normal(size=(3, 2))
    out = ad.slot_linear(x, W, b).data
    for j in range(3):
        np.testing.assert_allclose(out[j], x.data[j] @ W.data[:, 2 * j:2 * j + 2] + b.data[2 * j:2 * j + 2])
    assert ad.gradcheck(lambda: weighted_sum(ad.slot_linear(x, W, b), w), [x, W, b]) < TOL


def test_gradcheck_fourier(rng):
    a = P(rng, 3, 4, 2, 2)
    w = rng.normal(size=(3, 8, 2, 2))
    assert ad.gradcheck(lambda: weighted_sum(ad.fourier(a, 0.3, axis=1), w), [a]) < TOL


def test_gradcheck_sum_mean(rng):
    a = P(rng, 3, 4)
    assert ad.gradcheck(lambda: ad.add(ad.tsum(ad.cos(a)), ad.tmean(ad.sin(a))), [a]) < TOL


def test_gradcheck_batchnorm(rng):
    x, g, b = P(rng, 6, 3), P(rng, 3), P(rng, 3)
    w = rng.normal(size=(6, 3))
    loss = lambda: weighted_sum(ad.batchnorm(x, g, b, ad.BatchNormState.fresh(3), True, False), w)  # noqa: E731
    assert ad.gradcheck(loss, [x, g, b]) < TOL


def test_gradcheck_conv_pool(rng):
    x, k = P(rng, 2, 2, 8, 8), P(rng, 3, 2, 3, 3)
    w = rng.normal(size=(2, 3, 3, 3))
    assert ad.gradcheck(lambda: weighted_sum(ad.maxpool2(ad.conv2d_valid(x, k)), w), [x, k]) < TOL


def test_gradcheck_cross_entropy(rng):
    logits = P(rng, 5, 4)
    labels = np.array([0, 3, 1, 1, 2])
    assert ad.gradcheck(lambda: ad.softmax_cross_entropy(logits, labels), [logits]) < TOL


def test_backward_requires_scalar(rng):
    a = P(rng, 2, 2)
    with pytest.raises(ContractError):
        ad.cos(a).backward()


def test_gradients_accumulate_over_shared_nodes(rng):
    a = P(rng, 3)
    y = ad.cos(a)
    ad.tsum(ad.add(y, y)).backward()
    np.testing.assert_allclose(a.grad, -2 * np.sin(a.data))


def test_no_grad_builds_no_graph(rng):
    a = P(rng, 3)
    with ad.no_grad():
        y = ad.cos(a)
    assert not y.requires_grad and y._parents == ()
    assert ad.is_grad_enabled()


# -- optimizer -------------------------------------------------------------------

def test_adam_matches_recurrence(rng):
    p = ad.Parameter(rng.normal(size=4))
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    opt = ad.Adam(lr, (b1, b2), eps)
    for t in range(1, 6):
        g = rng.normal(size=4)
        p.grad = g.copy()
        opt.step([p])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref = ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        np.testing.assert_allclose(p.data, ref, rtol=1e-12, atol=1e-15)


def test_adam_first_step_is_lr_times_sign(rng):
    p = ad.Parameter(np.zeros(3))
    p.grad = np.array([2.0, -0.5, 1e-3])
    ad.Adam(lr=0.1).step([p])
    np.testing.assert_allclose(p.data, -0.1 * np.sign(p.grad), rtol=1e-4)


def test_adam_requires_gradient():
    p = ad.Parameter(np.zeros(2))
    with pytest.raises(ContractError):
        ad.Adam().step([p])
