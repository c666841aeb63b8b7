"""Progressive, phase-scheduled training of GRFF networks.

Training runs ``K`` phases.  In phase ``j`` (1-based) only the last ``j``
generators and the linear head receive Adam updates; earlier generators
stay frozen.  So the head and the last generator are trained first, and
generators are unfrozen one at a time in reverse layer order.  Every
iteration draws fresh noise for all ``K`` layers.

Adam moments are per-parameter, so a generator that becomes trainable at
a phase boundary starts from zero moments while already-active
parameters keep theirs.  Frozen generators still normalize with the
statistics of the current noise batch, but their running statistics are
left untouched.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, NumericalError, ScheduleExhaustedError
from .generators import TRAIN_STREAM, VALIDATION_STREAM, NoiseStream
from .model import GRFFNetwork, evaluate

logger = logging.getLogger(__name__)

# Layer-count presets: (D_list, epochs per phase).
LAYER_PRESETS = {
    1: ((256,), (1000,)),
    2: ((256, 64), (200, 1000)),
    3: ((64, 64, 64), (200, 200, 1000)),
    4: ((64, 64, 64, 64), (200, 200, 200, 1000)),
}


@dataclass(frozen=True)
class PhaseSchedule:
    epochs: tuple

    def __post_init__(self):
        object.__setattr__(self, "epochs", tuple(int(e) for e in self.epochs))
        if not self.epochs or min(self.epochs) < 0 or sum(self.epochs) == 0:
            raise ConfigError(f"phase epochs must be non-negative with a positive total: {self.epochs}")

    @property
    def K(self) -> int:
        return len(self.epochs)

    @property
    def total(self) -> int:
        return sum(self.epochs)

    @property
    def boundaries(self) -> tuple:
        return tuple(int(b) for b in np.cumsum(self.epochs))


@dataclass(frozen=True)
class Phase:
    index: int
    trainable_generators: tuple


def phase_of_epoch(schedule: PhaseSchedule, epoch: int) -> Phase:
    """Phase ``j`` for a 0-based epoch and the 0-based generators it trains."""
    if epoch < 0 or epoch >= schedule.total:
        raise ScheduleExhaustedError(f"epoch {epoch} outside schedule of {schedule.total} epochs")
    for j, bound in enumerate(schedule.boundaries, start=1):
        if epoch < bound:
            K = schedule.K
            return Phase(j, tuple(range(K - j, K)))
    raise AssertionError("unreachable")


@dataclass
class TrainConfig:
    D_list: tuple = (256, 64)
    epochs: tuple = (200, 1000)
    batch_size: int = 128
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        self.D_list = tuple(int(D) for D in self.D_list)
        self.epochs = tuple(int(e) for e in self.epochs)
        self.betas = tuple(float(b) for b in self.betas)

    @classmethod
    def preset(cls, K: int, **overrides) -> "TrainConfig":
        if K not in LAYER_PRESETS:
            raise ConfigError(f"no preset for K={K}; choose from {sorted(LAYER_PRESETS)}")
        D_list, epochs = LAYER_PRESETS[K]
        return cls(D_list=D_list, epochs=epochs, **overrides)

    @property
    def schedule(self) -> PhaseSchedule:
        return PhaseSchedule(self.epochs)

    def validate(self, net: GRFFNetwork | None = None):
        if len(self.D_list) != len(self.epochs):
            raise ConfigError(f"D_list has {len(self.D_list)} layers but epochs has {len(self.epochs)}")
        PhaseSchedule(self.epochs)
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        if net is not None and tuple(net.D_list) != self.D_list:
            raise ConfigError(f"network D_list {net.D_list} != config D_list {self.D_list}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    phase: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "phase", "train_loss", "train_acc", "val_loss", "val_acc"])
        for r in self.records:
            writer.writerow([r.epoch, r.phase, repr(r.train_loss), repr(r.train_acc),
                             repr(r.val_loss), repr(r.val_acc)])
        return buf.getvalue()


def set_phase(net: GRFFNetwork, phase: Phase):
    active = set(phase.trainable_generators)
    for k, gen in enumerate(net.generators):
        gen.frozen = k not in active


def iterate_minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def epoch_step(net: GRFFNetwork, X, y, config: TrainConfig, epoch: int,
               noise_stream: NoiseStream, rng, optimizer=None):
    """One pass over (X, y) in the phase that owns ``epoch``.

    Returns the sample-weighted mean loss and the training accuracy.
    """
    phase = phase_of_epoch(config.schedule, epoch)
    set_phase(net, phase)
    optimizer = optimizer or ad.Adam(config.lr, config.betas, config.eps)
    params = net.trainable_parameters()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    total_loss = 0.0
    correct = 0
    for idx in iterate_minibatches(len(X), config.batch_size, rng):
        noise = net.sample_noise(noise_stream)
        logits = net.forward(X[idx], noise, "train")
        loss = ad.softmax_cross_entropy(logits, y[idx])
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        ad.zero_grad(params)
        loss.backward()
        optimizer.step(params)
        total_loss += value * len(idx)
        correct += int((logits.data.argmax(axis=1) == y[idx]).sum())
    return total_loss / len(X), correct / len(X)


def select_best_on_validation(history: History, snapshots=None):
    """Epoch with maximal validation accuracy (earliest on ties) and its snapshot.

    ``snapshots`` may be a mapping or sequence indexed by epoch.
    """
    if not history.records:
        raise ConfigError("empty history")
    accs = history.column("val_acc")
    best = int(np.argmax(accs))  # argmax returns the first maximum
    epoch = history.records[best].epoch
    if snapshots is None:
        return epoch, None
    return epoch, snapshots[epoch]


def train_progressive(net: GRFFNetwork, train, val, config: TrainConfig,
                      noise_stream: NoiseStream | None = None, on_epoch=None):
    """Run the whole phase schedule and restore the best-validation snapshot.

    ``train`` and ``val`` are ``(X, y)`` pairs.  When ``val`` is None the
    training metrics stand in for validation.  Returns ``(net, history)``.
    """
    config.validate(net)
    Xtr, ytr = train
    Xva, yva = val if val is not None else (None, None)
    noise_stream = noise_stream or NoiseStream(net.noise_spec.noise_dim, config.seed, (TRAIN_STREAM,))
    val_stream = NoiseStream(net.noise_spec.noise_dim, config.seed, (VALIDATION_STREAM,))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    optimizer = ad.Adam(config.lr, config.betas, config.eps)
    history = History()
    best_acc, best_state = -np.inf, None
    for epoch in range(config.schedule.total):
        train_loss, train_acc = epoch_step(net, Xtr, ytr, config, epoch, noise_stream, rng, optimizer)
        if Xva is not None and len(Xva):
            val_loss, val_acc = evaluate(net, Xva, yva, net.sample_noise(val_stream))
        else:
            val_loss, val_acc = train_loss, train_acc
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        phase = phase_of_epoch(config.schedule, epoch).index
        history.records.append(EpochRecord(epoch, phase, train_loss, train_acc, val_loss, val_acc))
        if val_acc > best_acc:
            best_acc, best_state, history.best_epoch = val_acc, net.state(), epoch
        if on_epoch is not None:
            on_epoch(history.records[-1])
        logger.debug("epoch %d phase %d loss %.4f acc %.4f val %.4f", epoch, phase,
                     train_loss, train_acc, val_acc)
    net.load_state(best_state)
    for gen in net.generators:
        gen.frozen = False
    return net, history
