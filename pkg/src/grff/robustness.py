"""Gradient attacks and the fixed-versus-resampled-noise evaluation.

Inputs are in pixel units ([0, 255]); the network scales them internally,
so epsilon and the step size are in pixel units too.  During an attack the
generated kernels are held constant: the attacker differentiates through
the convolutions and the cos/sin feature maps with respect to the image
only, always under the same noise draw.

The protocol compares three accuracies:

* ``acc0``: clean inputs, noise ``N1``
* ``acc1``: adversarial inputs built against ``N1``, evaluated with ``N1``
* ``acc2``: the same adversarial inputs evaluated with an independent ``N2``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .datasets import write_idx
from .exceptions import ConfigError
from .generators import PREDICT_STREAM, RESAMPLE_STREAM, NoiseStream
from .model import GRFFNetwork, _batched_logits

PIXEL_BOUNDS = (0.0, 255.0)


def iterations_for(epsilon) -> int:
    """``min(eps + 4, floor(1.25 eps))``; floor makes eps=12 give 15."""
    return int(min(epsilon + 4, np.floor(1.25 * epsilon)))


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float = 1.0
    iterations: int | None = None
    bounds: tuple = PIXEL_BOUNDS
    batch_size: int = 500

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.iterations is not None and self.iterations < 1 and self.epsilon > 0:
            raise ConfigError("iterations must be >= 1 when epsilon > 0")
        if self.bounds[0] >= self.bounds[1]:
            raise ConfigError(f"invalid bounds {self.bounds}")

    @property
    def n_iterations(self) -> int:
        if self.iterations is not None:
            return int(self.iterations)
        return iterations_for(self.epsilon)


def attack_weights(net: GRFFNetwork, noise):
    """Eval-mode kernels for ``noise``, detached from the generators."""
    with ad.no_grad():
        return [w.detach() for w in net.generate(noise, "eval")]


def input_gradient(net: GRFFNetwork, X, labels, weights) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the input batch."""
    x = ad.Tensor(np.asarray(X, dtype=np.float64), requires_grad=True)
    loss = ad.softmax_cross_entropy(net.logits_from_weights(x, weights), labels)
    loss.backward()
    return x.grad


def _batches(n, size):
    for s in range(0, n, size):
        yield slice(s, s + size)


def fgsm_attack(net: GRFFNetwork, X, y_true, config: AttackConfig, noise) -> np.ndarray:
    """Single signed-gradient step of size epsilon that increases the loss on ``y_true``."""
    X = np.asarray(X, dtype=np.float64)
    if config.epsilon == 0:
        return X.copy()
    weights = attack_weights(net, noise)
    y_true = np.asarray(y_true)
    out = np.empty_like(X)
    lo, hi = config.bounds
    for sl in _batches(len(X), config.batch_size):
        g = input_gradient(net, X[sl], y_true[sl], weights)
        out[sl] = np.clip(X[sl] + config.epsilon * np.sign(g), lo, hi)
    return out


def least_likely_labels(net: GRFFNetwork, X, weights, batch_size=1000) -> np.ndarray:
    return _batched_logits(net, X, weights, batch_size).argmin(axis=1)


def iter_ll_attack(net: GRFFNetwork, X, config: AttackConfig, noise) -> np.ndarray:
    """Iteratively push inputs toward their clean least-likely class.

    ``X <- clip(X - alpha * sign(grad L(X, y_ll)))`` where the clip keeps
    each pixel within epsilon of its clean value and inside the bounds.
    ``y_ll`` is computed once from the clean input.
    """
    X = np.asarray(X, dtype=np.float64)
    if config.epsilon == 0:
        return X.copy()
    weights = attack_weights(net, noise)
    lo, hi = config.bounds
    out = np.empty_like(X)
    for sl in _batches(len(X), config.batch_size):
        x0 = X[sl]
        y_ll = least_likely_labels(net, x0, weights)
        lower = np.maximum(x0 - config.epsilon, lo)
        upper = np.minimum(x0 + config.epsilon, hi)
        xa = x0.copy()
        for _ in range(config.n_iterations):
            g = input_gradient(net, xa, y_ll, weights)
            xa = np.clip(xa - config.alpha * np.sign(g), lower, upper)
        out[sl] = xa
    return out


@dataclass
class ProtocolResult:
    epsilon: float
    iterations: int
    acc0: float
    acc1: float
    acc2: float
    X_adv: np.ndarray
    pred1: np.ndarray
    pred2: np.ndarray


def protocol_noise(net: GRFFNetwork, seed):
    """``(N1, N2)``: stored frozen noise if any, else two independent streams."""
    if net.frozen_noise is not None:
        return net.frozen_noise, net.frozen_noise
    dim = net.noise_spec.noise_dim
    n1 = net.sample_noise(NoiseStream(dim, seed, (PREDICT_STREAM,)))
    n2 = net.sample_noise(NoiseStream(dim, seed, (RESAMPLE_STREAM,)))
    return n1, n2


def robustness_protocol(net: GRFFNetwork, X, y, config: AttackConfig, seed=0,
                        attack="iter_ll", resample_draws=1) -> ProtocolResult:
    """Clean, fixed-noise adversarial and resampled-noise adversarial accuracy.

    ``resample_draws > 1`` replaces the single ``N2`` prediction by a
    majority vote over that many independent draws.
    A network with ``frozen_noise`` set (the comparison CNN) uses the same
    noise for both evaluations, so ``acc2 == acc1``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n1, n2 = protocol_noise(net, seed)
    w1 = attack_weights(net, n1)
    pred0 = _batched_logits(net, X, w1, 1000).argmax(axis=1)
    if attack == "iter_ll":
        X_adv = iter_ll_attack(net, X, config, n1)
    elif attack == "fgsm":
        X_adv = fgsm_attack(net, X, y, config, n1)
    else:
        raise ConfigError(f"unknown attack {attack!r}")
    pred1 = _batched_logits(net, X_adv, w1, 1000).argmax(axis=1)
    if resample_draws == 1 or net.frozen_noise is not None:
        pred2 = _batched_logits(net, X_adv, attack_weights(net, n2), 1000).argmax(axis=1)
    else:
        stream = NoiseStream(net.noise_spec.noise_dim, seed, (RESAMPLE_STREAM,))
        votes = np.zeros((len(X), net.num_classes), dtype=np.int64)
        for _ in range(resample_draws):
            p = _batched_logits(net, X_adv, attack_weights(net, net.sample_noise(stream)), 1000)
            votes[np.arange(len(X)), p.argmax(axis=1)] += 1
        pred2 = votes.argmax(axis=1)
    return ProtocolResult(config.epsilon, config.n_iterations if config.epsilon > 0 else 0,
                          float((pred0 == y).mean()), float((pred1 == y).mean()),
                          float((pred2 == y).mean()), X_adv, pred1, pred2)


def dump_adversarial(directory, result: ProtocolResult, y_true, prefix="adv"):
    """Write the adversarial images as IDX plus ``index,true,pred_fixed,pred_resampled`` CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images = np.clip(np.round(result.X_adv), 0, 255).astype(np.uint8)
    if images.ndim == 4:
        images = images[:, 0] if images.shape[1] == 1 else images
    write_idx(directory / f"{prefix}-images.idx", images)
    path = directory / f"{prefix}-labels.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "true", "pred_fixed", "pred_resampled"])
        for i, (t, a, b) in enumerate(zip(y_true, result.pred1, result.pred2)):
            writer.writerow([i, int(t), int(a), int(b)])
    return path
