"""Random Fourier feature maps and the RBF kernel they approximate.

For an RBF kernel ``k(x, x') = exp(-gamma * ||x - x'||^2)`` the spectral
density is the normal law ``N(0, 2 * gamma * I)``: the characteristic
function of ``w ~ N(0, s^2 I)`` evaluated at ``delta = x - x'`` is
``exp(-s^2 ||delta||^2 / 2)``, so ``s^2 = 2 * gamma`` reproduces the kernel.
With ``D`` such weights,

    phi(x) = sqrt(1/D) [cos(w_1.x) ... cos(w_D.x), sin(w_1.x) ... sin(w_D.x)]

satisfies ``E[phi(x).phi(x')] = k(x, x')`` and ``||phi(x)|| = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, ShapeError


@dataclass(frozen=True)
class RBFKernelSpec:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"RBF gamma must be positive, got {self.gamma}")

    @property
    def spectral_std(self) -> float:
        return float(np.sqrt(2.0 * self.gamma))


def rbf_kernel(x, x_prime, spec: RBFKernelSpec) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ShapeError(f"rbf_kernel: {x.shape} vs {x_prime.shape}")
    return float(np.exp(-spec.gamma * np.sum((x - x_prime) ** 2)))


def rbf_gram(X, Y, spec: RBFKernelSpec) -> np.ndarray:
    """Dense kernel matrix between the rows of ``X`` and ``Y``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def sample_rbf_weights(spec: RBFKernelSpec, D: int, d: int, rng) -> np.ndarray:
    """Draw ``D`` spectral weights of dimension ``d`` for an RBF kernel."""
    if D < 1:
        raise ConfigError(f"need at least one weight, got D={D}")
    rng = np.random.default_rng(rng)
    return rng.normal(0.0, spec.spectral_std, size=(D, d))


def rff_map(X, W):
    """Fourier feature map of a (B, d) batch with (D, d) weights -> (B, 2D).

    Accepts tensors or arrays; returns a Tensor (differentiable in both
    arguments when they require grad).
    """
    X, W = ad.as_tensor(X), ad.as_tensor(W)
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[1]:
        raise ShapeError(f"rff_map: inputs {X.shape} do not match weights {W.shape}")
    D = W.shape[0]
    proj = ad.matmul(X, ad.transpose(W))
    return ad.fourier(proj, np.sqrt(1.0 / D), axis=1)


def rff_map_np(X, W) -> np.ndarray:
    """Plain-array version of :func:`rff_map` for two-stage baselines."""
    proj = np.asarray(X, dtype=np.float64) @ np.asarray(W, dtype=np.float64).T
    s = np.sqrt(1.0 / W.shape[0])
    return np.hstack([s * np.cos(proj), s * np.sin(proj)])


def conv_rff_map(X, K):
    """Image feature map: valid conv, scaled cos/sin stacked on channels, 2x2 max-pool.

    ``X`` is (B, C, H, W) and ``K`` is (D, C, 5, 5); the result is
    (B, 2D, (H-4)/2, (W-4)/2) with the cosine block first.
    """
    X, K = ad.as_tensor(X), ad.as_tensor(K)
    if X.ndim != 4 or K.ndim != 4:
        raise ShapeError(f"conv_rff_map: expected 4-d inputs, got {X.shape}, {K.shape}")
    kh, kw = K.shape[2:]
    Ho, Wo = X.shape[2] - kh + 1, X.shape[3] - kw + 1
    if Ho <= 0 or Wo <= 0 or Ho % 2 or Wo % 2:
        raise ShapeError(f"conv_rff_map: response {Ho}x{Wo} is not a positive even size")
    response = ad.conv2d_valid(X, K)
    return ad.maxpool2(ad.fourier(response, np.sqrt(1.0 / K.shape[0]), axis=1))


@dataclass
class ApproximationStats:
    max_abs_error: float
    mean_abs_error: float
    n_pairs: int


def approximation_error(X, spec: RBFKernelSpec, D: int, seed=0, pairs=None) -> ApproximationStats:
    """Compare feature inner products against the exact RBF kernel.

    By default every (i, j) pair of rows of ``X`` is used, diagonal included.
    ``pairs`` may be an (m, 2) index array to restrict the comparison.
    """
    if D < 1:
        raise ConfigError("D must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    W = sample_rbf_weights(spec, D, X.shape[1], np.random.default_rng(seed))
    Z = rff_map_np(X, W)
    if pairs is None:
        err = np.abs(Z @ Z.T - rbf_gram(X, X, spec))
    else:
        pairs = np.asarray(pairs)
        a, b = pairs[:, 0], pairs[:, 1]
        approx = np.einsum("ij,ij->i", Z[a], Z[b])
        exact = np.exp(-spec.gamma * ((X[a] - X[b]) ** 2).sum(1))
        err = np.abs(approx - exact)
    return ApproximationStats(float(err.max()), float(err.mean()), int(err.size))
