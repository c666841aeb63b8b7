import numpy as np
import pytest

from grff import autodiff as ad
from grff.exceptions import ConfigError, ShapeError
from grff.features import (
    RBFKernelSpec,
    approximation_error,
    conv_rff_map,
    rbf_gram,
    rbf_kernel,
    rff_map,
    rff_map_np,
    sample_rbf_weights,
)


def test_spec_rejects_nonpositive_gamma():
    for g in (0.0, -1.0):
        with pytest.raises(ConfigError):
            RBFKernelSpec(g)


def test_spectral_std():
    assert RBFKernelSpec(0.5).spectral_std == pytest.approx(1.0)


def test_rbf_kernel_values():
    spec = RBFKernelSpec(1.0)
    assert rbf_kernel([0, 0], [0, 0], spec) == 1.0
    assert rbf_kernel([1, 0], [0, 0], spec) == pytest.approx(np.exp(-1))
    with pytest.raises(ShapeError):
        rbf_kernel([1, 0], [0], spec)


def test_gram_matches_pairwise_kernel():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    spec = RBFKernelSpec(0.7)
    G = rbf_gram(X, Y, spec)
    for i in range(4):
        for j in range(5):
            assert G[i, j] == pytest.approx(rbf_kernel(X[i], Y[j], spec), rel=1e-12)


def test_weights_follow_spectral_normal():
    spec = RBFKernelSpec(2.0)
    W = sample_rbf_weights(spec, 20000, 3, np.random.default_rng(1))
    assert abs(W.mean()) < 0.03
    assert W.std() == pytest.approx(2.0, rel=0.02)  # sqrt(2 * gamma)


def test_feature_layout_cos_then_sin():
    x = np.array([[1.0, 2.0]])
    W = np.array([[0.5, 0.0], [0.0, 1.0], [1.0, 1.0]])
    z = rff_map(x, W).data[0]
    proj = W @ x[0]
    np.testing.assert_allclose(z, np.sqrt(1 / 3) * np.concatenate([np.cos(proj), np.sin(proj)]))


def test_zero_weights_give_constant_features():
    z = rff_map_np(np.random.default_rng(0).normal(size=(5, 4)), np.zeros((8, 4)))
    np.testing.assert_allclose(z[:, :8], np.sqrt(1 / 8))
    np.testing.assert_allclose(z[:, 8:], 0.0)


def test_numpy_and_tensor_maps_agree():
    rng = np.random.default_rng(3)
    X, W = rng.normal(size=(6, 5)), rng.normal(size=(7, 5))
    np.testing.assert_allclose(rff_map(X, W).data, rff_map_np(X, W), atol=1e-15)


def test_rff_map_shape_errors():
    with pytest.raises(ShapeError):
        rff_map(np.ones((2, 3)), np.ones((4, 2)))


def test_gradients_flow_to_weights_and_inputs():
    rng = np.random.default_rng(4)
    X, W = ad.Parameter(rng.normal(size=(3, 2))), ad.Parameter(rng.normal(size=(4, 2)))
    w = rng.normal(size=(3, 8))
    assert ad.gradcheck(lambda: ad.tsum(ad.mul(rff_map(X, W), ad.Tensor(w))), [X, W]) < 1e-4


def test_unit_norm_rows():
    rng = np.random.default_rng(5)
    Z = rff_map_np(rng.normal(size=(50, 9)), rng.normal(size=(33, 9)))
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)


def test_conv_map_shape_and_layout():
    rng = np.random.default_rng(6)
    X, K = rng.random((2, 1, 28, 28)), rng.uniform(-1, 1, (16, 1, 5, 5))
    Z = conv_rff_map(X, K).data
    assert Z.shape == (2, 32, 12, 12)
    resp = ad.conv2d_valid(X, K).data
    ref = np.concatenate([np.cos(resp), np.sin(resp)], axis=1) * 0.25
    np.testing.assert_allclose(Z, ad.maxpool2(ref).data)


def test_conv_map_rejects_odd_response():
    with pytest.raises(ShapeError):
        conv_rff_map(np.ones((1, 1, 9, 9)), np.ones((2, 1, 5, 5)))


def test_approximation_error_shrinks_with_D():
    X = np.random.default_rng(7).normal(size=(40, 5)) * 0.5
    spec = RBFKernelSpec(1.0)
    errs = [np.mean([approximation_error(X, spec, D, seed=s).mean_abs_error for s in range(5)])
            for D in (16, 256, 4096)]
    assert errs[0] > errs[1] > errs[2]
    # Monte Carlo rate: 256x more features -> roughly 16x smaller error
    assert errs[0] / errs[2] == pytest.approx(16, rel=0.5)


def test_approximation_on_explicit_pairs():
    X = np.random.default_rng(8).normal(size=(10, 3))
    stats = approximation_error(X, RBFKernelSpec(0.5), 512, pairs=np.array([[0, 1], [2, 2]]))
    assert stats.n_pairs == 2
    assert stats.max_abs_error < 0.2
