"""GRFF networks: stacked generators, layered feature maps and a linear head.

Layer ``k`` draws ``D_k`` noise vectors, turns them into weights with its
generator, and maps the previous layer's features ``Z^{k-1}`` (``Z^0`` is
the input) through the Fourier feature map.  The linear head reads the
last layer.  For vectors the width chain is ``d -> 2 D_1 -> ... -> 2 D_K``;
for images each layer is conv -> cos/sin -> concat -> 2x2 max-pool.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .exceptions import ConfigError, ShapeError
from .features import conv_rff_map, rff_map
from .generators import (
    PREDICT_STREAM,
    RESAMPLE_STREAM,
    Generator,
    NoiseSpec,
    NoiseStream,
    build_generator,
    build_image_generator,
    generate_weights,
)

FIRST_HIDDEN = (128, 64, 64)
LATER_HIDDEN = (512, 256, 256)
IMAGE_HIDDEN = (128, 256)
KERNEL_SIZE = 5


@dataclass
class LinearHead:
    weight: Parameter
    bias: Parameter

    @classmethod
    def init(cls, fan_in, n_out, rng):
        bound = 1.0 / np.sqrt(fan_in)
        return cls(Parameter(rng.uniform(-bound, bound, (fan_in, n_out))),
                   Parameter(np.zeros(n_out)))

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, Z):
        return ad.linear(Z, self.weight, self.bias)


@dataclass
class GRFFNetwork:
    variant: str
    generators: list
    D_list: tuple
    head: LinearHead
    noise_spec: NoiseSpec
    num_classes: int
    input_shape: tuple
    input_scale: float = 1.0
    frozen_noise: list | None = None
    normalization: dict | None = None
    meta: dict = field(default_factory=dict)
    weight_scales: tuple | None = None  # per-layer constant multiplying generated weights

    @property
    def K(self) -> int:
        return len(self.generators)

    def parameters(self):
        return [p for g in self.generators for p in g.parameters()] + self.head.parameters()

    def trainable_parameters(self):
        params = [p for g in self.generators if not g.frozen for p in g.parameters()]
        return params + self.head.parameters()

    def feature_shapes(self):
        """Per-sample feature shape after each layer, ``Z^1 .. Z^K``."""
        shapes = []
        if self.variant == "vector":
            return [(2 * D,) for D in self.D_list]
        c, h, w = self.input_shape
        for D in self.D_list:
            c, h, w = 2 * D, (h - KERNEL_SIZE + 1) // 2, (w - KERNEL_SIZE + 1) // 2
            shapes.append((c, h, w))
        return shapes

    def sample_noise(self, stream: NoiseStream):
        return [stream.draw(D) for D in self.D_list]

    # -- forward -----------------------------------------------------------------
    def generate(self, noise_batches, mode="train"):
        """Weights for every layer; frozen generators are treated as constants."""
        if len(noise_batches) != self.K:
            raise ShapeError(f"expected {self.K} noise batches, got {len(noise_batches)}")
        weights = []
        for k, (gen, noise) in enumerate(zip(self.generators, noise_batches)):
            if noise.shape[0] != self.D_list[k]:
                raise ShapeError(f"layer {k + 1}: noise batch has {noise.shape[0]} rows, "
                                 f"expected D={self.D_list[k]}")
            if gen.frozen or not ad.is_grad_enabled():
                with ad.no_grad():
                    weights.append(generate_weights(gen, noise, mode))
            else:
                weights.append(generate_weights(gen, noise, mode))
        return weights

    def _prepare(self, X):
        X = ad.as_tensor(X)
        expected = tuple(self.input_shape)
        if X.shape[1:] != expected:
            raise ShapeError(f"input has per-sample shape {X.shape[1:]}, network expects {expected}")
        if self.input_scale != 1.0:
            X = ad.scale(X, self.input_scale)
        return X

    def layer_features(self, X, weights):
        """Feature tensors ``[Z^1, ..., Z^K]`` for fixed layer weights."""
        Z = self._prepare(X)
        feats = []
        for k, W in enumerate(weights):
            if self.weight_scales is not None and self.weight_scales[k] != 1.0:
                W = ad.scale(W, self.weight_scales[k])
            try:
                Z = rff_map(Z, W) if self.variant == "vector" else conv_rff_map(Z, W)
            except ShapeError as exc:
                raise ShapeError(f"layer {k + 1}: {exc}") from exc
            feats.append(Z)
        return feats

    def logits_from_weights(self, X, weights):
        Z = self.layer_features(X, weights)[-1]
        if self.variant == "image":
            Z = ad.reshape(Z, (Z.shape[0], -1))
        return self.head(Z)

    def forward(self, X, noise_batches, mode="train"):
        return self.logits_from_weights(X, self.generate(noise_batches, mode))

    __call__ = forward

    # -- state -------------------------------------------------------------------
    def state(self) -> dict:
        """Deep copy of every trainable array and batchnorm statistic."""
        gens = []
        for g in self.generators:
            blocks = []
            for b in g.blocks:
                entry = {"weight": b.weight.data.copy(), "bias": b.bias.data.copy()}
                if b.bn is not None:
                    entry.update(gamma=b.gamma.data.copy(), beta=b.beta.data.copy(),
                                 running_mean=b.bn.running_mean.copy(),
                                 running_var=b.bn.running_var.copy())
                blocks.append(entry)
            gens.append(blocks)
        return {"generators": gens,
                "head": {"weight": self.head.weight.data.copy(), "bias": self.head.bias.data.copy()}}

    def load_state(self, state: dict):
        for g, blocks in zip(self.generators, state["generators"]):
            for b, entry in zip(g.blocks, blocks):
                b.weight.data = entry["weight"].copy()
                b.bias.data = entry["bias"].copy()
                if b.bn is not None:
                    b.gamma.data = entry["gamma"].copy()
                    b.beta.data = entry["beta"].copy()
                    b.bn.running_mean = entry["running_mean"].copy()
                    b.bn.running_var = entry["running_var"].copy()
        self.head.weight.data = state["head"]["weight"].copy()
        self.head.bias.data = state["head"]["bias"].copy()

    def copy(self) -> "GRFFNetwork":
        return copy.deepcopy(self)


def _check_classes(num_classes):
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2 (binary tasks use two outputs)")


def build_vector_network(d, num_classes=2, D_list=(256, 64), seed=0, noise_dim=100,
                         first_hidden=FIRST_HIDDEN, later_hidden=LATER_HIDDEN) -> GRFFNetwork:
    """Vector-input GRFF; generator k emits weights living in layer k-1's feature space."""
    D_list = tuple(int(D) for D in D_list)
    if not D_list or min(D_list) < 1 or d < 1:
        raise ConfigError(f"invalid dimensions d={d}, D_list={D_list}")
    _check_classes(num_classes)
    seeds = np.random.SeedSequence(seed).spawn(len(D_list) + 1)
    gens = []
    in_dim = d
    for k, D in enumerate(D_list):
        hidden = first_hidden if k == 0 else later_hidden
        gens.append(build_generator((noise_dim, *hidden, in_dim), seed=seeds[k]))
        in_dim = 2 * D
    head = LinearHead.init(in_dim, num_classes, np.random.default_rng(seeds[-1]))
    return GRFFNetwork("vector", gens, D_list, head, NoiseSpec(noise_dim, seed),
                       num_classes, (d,))


def build_image_network(input_shape=(1, 28, 28), num_classes=10, D_list=(16, 8), seed=0,
                        noise_dim=100, hidden=IMAGE_HIDDEN, input_scale=1.0 / 255.0,
                        weight_scales="fan_in") -> GRFFNetwork:
    """Convolutional GRFF for (C, H, W) images with pixel values scaled by ``input_scale``.

    Generated kernels live in (-1, 1).  With ``weight_scales="fan_in"`` layer
    ``k``'s kernels are multiplied by ``1/sqrt(C_k * 25)`` so that conv
    responses start at unit scale rather than in the regime where cos/sin
    are pure noise.  Pass ``None`` to use the raw kernels.
    """
    D_list = tuple(int(D) for D in D_list)
    _check_classes(num_classes)
    seeds = np.random.SeedSequence(seed).spawn(len(D_list) + 1)
    c, h, w = (int(v) for v in input_shape)
    gens, fan_in = [], []
    for k, D in enumerate(D_list):
        fan_in.append(c * KERNEL_SIZE * KERNEL_SIZE)
        if (h - KERNEL_SIZE + 1) <= 0 or (h - KERNEL_SIZE + 1) % 2 or (w - KERNEL_SIZE + 1) % 2:
            raise ConfigError(f"layer {k + 1}: {h}x{w} map cannot be convolved and pooled")
        gens.append(build_image_generator((D, c, KERNEL_SIZE, KERNEL_SIZE), seed=seeds[k],
                                          hidden=hidden, noise_dim=noise_dim))
        c, h, w = 2 * D, (h - KERNEL_SIZE + 1) // 2, (w - KERNEL_SIZE + 1) // 2
    head = LinearHead.init(c * h * w, num_classes, np.random.default_rng(seeds[-1]))
    if weight_scales == "fan_in":
        weight_scales = tuple(1.0 / np.sqrt(f) for f in fan_in)
    elif weight_scales is not None:
        weight_scales = tuple(float(v) for v in weight_scales)
        if len(weight_scales) != len(D_list):
            raise ConfigError("weight_scales needs one entry per layer")
    return GRFFNetwork("image", gens, D_list, head, NoiseSpec(noise_dim, seed), num_classes,
                       tuple(int(v) for v in input_shape), input_scale, weight_scales=weight_scales)


def forward(net: GRFFNetwork, X, noise_batches, mode="train"):
    return net.forward(X, noise_batches, mode)


# -- inference -------------------------------------------------------------------

def _batched_logits(net, X, weights, batch_size):
    X = np.asarray(X.data if isinstance(X, ad.Tensor) else X, dtype=np.float64)
    out = []
    with ad.no_grad():
        for start in range(0, len(X), batch_size):
            out.append(net.logits_from_weights(X[start:start + batch_size], weights).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, net.num_classes))


def eval_logits(net, X, noise_batches, batch_size=1000) -> np.ndarray:
    """Eval-mode logits for one set of noise batches."""
    with ad.no_grad():
        weights = net.generate(noise_batches, "eval")
    return _batched_logits(net, X, weights, batch_size)


def _vote(net, X, stream, draws, batch_size):
    if draws == 1:
        return eval_logits(net, X, net.sample_noise(stream), batch_size).argmax(axis=1)
    votes = np.zeros((len(X), net.num_classes), dtype=np.int64)
    for _ in range(draws):
        pred = eval_logits(net, X, net.sample_noise(stream), batch_size).argmax(axis=1)
        votes[np.arange(len(X)), pred] += 1
    return votes.argmax(axis=1)


def predict(net: GRFFNetwork, X, seed=0, draws=1, batch_size=1000) -> np.ndarray:
    """Class indices from one fresh noise draw per layer (or the stored frozen noise).

    ``draws > 1`` enables a majority vote over independent draws.
    """
    if net.frozen_noise is not None:
        return eval_logits(net, X, net.frozen_noise, batch_size).argmax(axis=1)
    return _vote(net, X, NoiseStream(net.noise_spec.noise_dim, seed, (PREDICT_STREAM,)),
                 draws, batch_size)


def predict_resampled(net: GRFFNetwork, X, seed=0, draws=1, batch_size=1000) -> np.ndarray:
    """Like :func:`predict`, but always from a stream disjoint from every other one."""
    return _vote(net, X, NoiseStream(net.noise_spec.noise_dim, seed, (RESAMPLE_STREAM,)),
                 draws, batch_size)


def evaluate(net: GRFFNetwork, X, y, noise_batches, batch_size=1000):
    """(mean cross-entropy, accuracy) under the given noise."""
    logits = eval_logits(net, X, noise_batches, batch_size)
    y = np.asarray(y)
    logp = ad.log_softmax(logits)
    loss = float(-logp[np.arange(len(y)), y].mean())
    acc = float((logits.argmax(axis=1) == y).mean())
    return loss, acc


def extract_features(net: GRFFNetwork, X, layer: int, noise_batches, batch_size=1000) -> np.ndarray:
    """Flattened eval-mode features of layer ``layer`` (1-based)."""
    if not 1 <= layer <= net.K:
        raise ConfigError(f"layer must be in [1, {net.K}], got {layer}")
    with ad.no_grad():
        weights = net.generate(noise_batches, "eval")
    X = np.asarray(X, dtype=np.float64)
    out = []
    with ad.no_grad():
        for start in range(0, len(X), batch_size):
            Z = net.layer_features(X[start:start + batch_size], weights[:layer])[-1]
            out.append(Z.data.reshape(Z.shape[0], -1))
    return np.concatenate(out, axis=0)


def freeze_noise(net: GRFFNetwork, seed=0) -> GRFFNetwork:
    """Copy of ``net`` whose inference always uses one stored noise draw.

    With the noise fixed the model is an ordinary deterministic network
    (for images: a CNN with cos/sin activations).
    """
    fixed = net.copy()
    fixed.frozen_noise = fixed.sample_noise(
        NoiseStream(net.noise_spec.noise_dim, seed, (PREDICT_STREAM,)))
    return fixed


# -- PCA -------------------------------------------------------------------------

@dataclass
class PCAResult:
    projected: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray
    mean: np.ndarray


def pca_top_components(features, k=3) -> PCAResult:
    """Project centred ``features`` (n, F) on the top-``k`` covariance eigenvectors.

    Each component's sign is fixed so that its largest-magnitude loading is
    positive.
    """
    F = np.asarray(features, dtype=np.float64)
    n, m = F.shape
    if k < 1 or k > min(n, m):
        raise ConfigError(f"k={k} must be in [1, min(n, F)] = [1, {min(n, m)}]")
    mean = F.mean(axis=0)
    C = F - mean
    cov = C.T @ C / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order[:k]]
    pivot = np.abs(evecs).argmax(axis=0)
    signs = np.sign(evecs[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    total = evals.sum()
    ratios = evals[:k] / total if total > 0 else np.zeros(k)
    return PCAResult(C @ evecs, ratios, evecs, mean)
