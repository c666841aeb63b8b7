"""Noise-to-weight generator networks.

A generator pushes i.i.d. standard-normal noise through an MLP.  Every
hidden block is ``linear -> batchnorm -> leaky ReLU``; the last block is
``linear -> tanh`` with no normalization, so generated weights lie in
(-1, 1).  Batch normalization runs over the *noise* batch: the ``D``
noise vectors of one draw are the samples being normalized.

Image generators (ReLU hidden activations) have a final layer of
``D * C * 25`` units, one ``C x 5 x 5`` block per kernel slot.  Noise row
``j`` is read out through slot ``j`` only, so every output channel has
its own learned kernel distribution while batch normalization still runs
over the ``D`` noise rows.  They are plain MLPs whose output is reshaped,
rather than transposed-convolution stacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Parameter
from .exceptions import ConfigError, ShapeError

# Independent noise streams derived from one seed.
TRAIN_STREAM = 0
VALIDATION_STREAM = 1
PREDICT_STREAM = 2
RESAMPLE_STREAM = 3

DEFAULT_MAX_KERNEL_OUTPUTS = 100_000


@dataclass(frozen=True)
class NoiseSpec:
    noise_dim: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ConfigError(f"noise_dim must be positive, got {self.noise_dim}")

    def stream(self, *key) -> "NoiseStream":
        return NoiseStream(self.noise_dim, self.seed, key)


class NoiseStream:
    """Deterministic source of standard-normal noise rows.

    Streams with different ``key`` tuples are statistically independent
    (they are children of one ``SeedSequence``).  ``position`` counts the
    rows handed out so far.
    """

    def __init__(self, noise_dim: int, seed: int, key=()):
        self.noise_dim = int(noise_dim)
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.reset()

    def reset(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._rng = np.random.Generator(np.random.PCG64(seq))
        self.position = 0

    def draw(self, count: int) -> np.ndarray:
        if count < 1:
            raise ConfigError(f"noise count must be >= 1, got {count}")
        self.position += count
        return self._rng.standard_normal((count, self.noise_dim))


def sample_noise(spec: NoiseSpec, count: int, stream: NoiseStream | None = None) -> np.ndarray:
    """``count`` noise rows; with no ``stream`` a fresh one is started from ``spec.seed``."""
    if stream is None:
        stream = spec.stream(TRAIN_STREAM)
    return stream.draw(count)


@dataclass
class DenseBlock:
    weight: Parameter
    bias: Parameter
    gamma: Parameter | None = None
    beta: Parameter | None = None
    bn: BatchNormState | None = None

    def parameters(self):
        return [p for p in (self.weight, self.bias, self.gamma, self.beta) if p is not None]


@dataclass
class Generator:
    widths: tuple
    out_shape: tuple
    activation: str = "leaky_relu"
    slope: float = 0.2
    blocks: list = field(default_factory=list)
    frozen: bool = False
    slots: int = 1

    @property
    def slot_dim(self) -> int:
        return self.widths[-1] // self.slots

    @property
    def noise_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def parameters(self):
        return [p for b in self.blocks for p in b.parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def _activate(self, h):
        if self.activation == "relu":
            return ad.relu(h)
        return ad.leaky_relu(h, self.slope)

    def __call__(self, noise, training=True, update_stats=True):
        """Flat (D, out_dim) output for a (D, noise_dim) noise batch."""
        h = ad.as_tensor(noise)
        if h.ndim != 2 or h.shape[1] != self.noise_dim:
            raise ShapeError(f"generator expects (D, {self.noise_dim}) noise, got {h.shape}")
        if self.slots > 1 and h.shape[0] != self.slots:
            raise ShapeError(f"slotted generator needs exactly {self.slots} noise rows, got {h.shape[0]}")
        for block in self.blocks[:-1]:
            h = ad.linear(h, block.weight, block.bias)
            h = ad.batchnorm(h, block.gamma, block.beta, block.bn, training, update_stats)
            h = self._activate(h)
        last = self.blocks[-1]
        if self.slots > 1:
            return ad.tanh(ad.slot_linear(h, last.weight, last.bias))
        return ad.tanh(ad.linear(h, last.weight, last.bias))


def _uniform_fan_in(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def build_generator(widths, seed=0, activation="leaky_relu", slope=0.2,
                    out_shape=None, momentum=0.1, eps=1e-5, slots=1) -> Generator:
    """Initialise an MLP generator with layer widths ``[noise_dim, h1, ..., out_dim]``.

    With ``slots > 1`` the last layer is split into that many equal column
    blocks and ``out_shape`` describes one block.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or min(widths) < 1:
        raise ConfigError(f"generator widths must list >= 2 positive sizes, got {widths}")
    if activation not in ("leaky_relu", "relu"):
        raise ConfigError(f"unknown generator activation {activation!r}")
    rng = np.random.default_rng(seed)
    blocks = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        weight = Parameter(_uniform_fan_in(rng, fan_in, fan_out))
        bias = Parameter(np.zeros(fan_out))
        if i < len(widths) - 2:
            blocks.append(DenseBlock(weight, bias, Parameter(np.ones(fan_out)),
                                     Parameter(np.zeros(fan_out)),
                                     BatchNormState.fresh(fan_out, momentum, eps)))
        else:
            blocks.append(DenseBlock(weight, bias))
    slots = int(slots)
    if slots < 1 or widths[-1] % slots:
        raise ConfigError(f"output width {widths[-1]} does not split into {slots} slots")
    per_slot = widths[-1] // slots
    out_shape = (per_slot,) if out_shape is None else tuple(out_shape)
    if int(np.prod(out_shape)) != per_slot:
        raise ConfigError(f"out_shape {out_shape} does not hold {per_slot} values")
    return Generator(widths, out_shape, activation, slope, blocks, slots=slots)


def expected_parameter_count(widths) -> int:
    """Closed form: dense weights and biases everywhere, BN affine on hidden blocks."""
    widths = list(widths)
    dense = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    return dense + 2 * sum(widths[1:-1])


def build_image_generator(out_kernels, seed=0, hidden=(128, 256), noise_dim=100,
                          max_outputs=DEFAULT_MAX_KERNEL_OUTPUTS) -> Generator:
    """Generator for ``D`` convolution kernels of shape ``(C, kh, kw)``.

    ``out_kernels`` is ``(D, C, kh, kw)``; the final layer has ``D*C*kh*kw``
    units, split into ``D`` slots.  That width is capped by ``max_outputs``
    because it grows with the layer size.
    """
    D, C, kh, kw = (int(v) for v in out_kernels)
    total = D * C * kh * kw
    if total > max_outputs:
        raise ConfigError(
            f"image generator would emit {total} values (> {max_outputs}); "
            "per-layer kernel generation does not scale to layers this wide")
    widths = (noise_dim, *hidden, total)
    return build_generator(widths, seed, activation="relu", out_shape=(C, kh, kw), slots=D)


def generate_weights(gen: Generator, noise, mode="train", update_stats=None):
    """Generated weight batch, shaped ``(D, *gen.out_shape)``.

    ``mode`` is "train" (batch statistics over the noise batch) or "eval"
    (running statistics).  ``update_stats`` defaults to "not frozen".
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if update_stats is None:
        update_stats = not gen.frozen
    flat = gen(noise, training=training, update_stats=training and update_stats)
    if len(gen.out_shape) == 1:
        return flat
    return ad.reshape(flat, (flat.shape[0], *gen.out_shape))
