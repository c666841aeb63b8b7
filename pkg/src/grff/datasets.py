"""Dataset generation, ingestion, normalization and splitting.

Supported on-disk formats:

* sparse ``label idx:val idx:val ...`` text (1-based indices, LIBSVM style)
* CSV with a header row and a ``label`` column
* IDX binaries (MNIST): big-endian, magic ``0x00000803`` for images and
  ``0x00000801`` for labels
* the UCI MONK's problems text layout (``class a1 ... a6 id``)
"""

from __future__ import annotations

import csv
import gzip
import itertools
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ConsistencyError, FormatError, LabelError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ConsistencyError(f"{len(self.X)} samples but {len(self.y)} labels")
        if self.num_classes is None:
            self.num_classes = int(self.y.max()) + 1 if len(self.y) else 0
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise LabelError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1:]

    def subset(self, idx, name=None) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx], name=name or self.name,
                       meta=dict(self.meta))


# -- synthetic -------------------------------------------------------------------

def make_synthetic(n, d, seed=0) -> Dataset:
    """Gaussian inputs labelled by whether ``||x||^2`` exceeds ``sqrt(d)``.

    ``x ~ N(0, I_d)``, ``y = sign(||x||^2 - sqrt(d))`` mapped -1 -> 0, +1 -> 1.
    """
    if n < 1 or d < 1:
        raise ConfigError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    return Dataset(X, synthetic_labels(X), 2, f"synthetic-d{d}", {"source": "synthetic", "seed": seed})


def synthetic_labels(X) -> np.ndarray:
    X = np.atleast_2d(X)
    return (np.sum(X * X, axis=1) - np.sqrt(X.shape[1]) > 0).astype(np.int64)


# -- MONK's problems -------------------------------------------------------------

MONKS_VALUES = (3, 3, 2, 3, 4, 2)
MONKS_TRAIN_SIZES = {1: 124, 2: 169, 3: 122}


def monks_rule(problem, a) -> int:
    a1, a2, a3, a4, a5, a6 = a
    if problem == 1:
        return int(a1 == a2 or a5 == 1)
    if problem == 2:
        return int(sum(v == 1 for v in a) == 2)
    if problem == 3:
        return int((a5 == 3 and a4 == 1) or (a5 != 4 and a2 != 3))
    raise ConfigError(f"MONK's problem must be 1, 2 or 3, got {problem}")


def monks_universe() -> np.ndarray:
    """All 432 attribute combinations, in lexicographic order."""
    return np.array(list(itertools.product(*[range(1, k + 1) for k in MONKS_VALUES])),
                    dtype=np.float64)


def make_monks(problem, seed=0, label_noise=None):
    """Rule-generated MONK's problem: ``(train, test)``.

    The test set is the full 432-instance universe with noiseless labels.
    The training set is a seeded sample of the published size; problem 3
    has 5% of its training labels flipped, as in the original benchmark.
    Use :func:`load_monks` when the original files are available.
    """
    X = monks_universe()
    y = np.array([monks_rule(problem, row) for row in X.astype(int)])
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(problem,)))
    idx = np.sort(rng.choice(len(X), MONKS_TRAIN_SIZES[problem], replace=False))
    ytr = y[idx].copy()
    if label_noise is None:
        label_noise = 0.05 if problem == 3 else 0.0
    n_flip = int(round(label_noise * len(idx)))
    if n_flip:
        flip = rng.choice(len(idx), n_flip, replace=False)
        ytr[flip] = 1 - ytr[flip]
    meta = {"source": "rules", "problem": problem, "seed": seed, "label_noise": label_noise}
    return (Dataset(X[idx], ytr, 2, f"monks{problem}-train", dict(meta)),
            Dataset(X, y, 2, f"monks{problem}-test", dict(meta)))


def load_monks(path) -> Dataset:
    """Read a UCI MONK's file: ``class a1 a2 a3 a4 a5 a6 id`` per line."""
    rows, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 7:
                raise ParseError(f"expected class and 6 attributes, got {len(parts)} fields", lineno)
            try:
                labels.append(int(parts[0]))
                rows.append([float(v) for v in parts[1:7]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
    return Dataset(np.array(rows), np.array(labels), 2, Path(path).stem, {"source": str(path)})


# -- normalization ---------------------------------------------------------------

@dataclass
class MinMaxRecord:
    minimum: np.ndarray
    maximum: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        out = (X - self.minimum) / safe
        out[..., span <= 0] = 0.0
        return np.clip(out, 0.0, 1.0)

    def to_dict(self):
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}


def minmax_normalize(train: Dataset, others=()):
    """Scale every feature to [0, 1] using statistics of ``train`` only.

    Constant training features map to 0; values of other sets outside the
    training range are clipped.  Returns ``(train, [others...], record)``.
    """
    if len(train) == 0:
        raise ConfigError("cannot normalize with an empty training set")
    record = MinMaxRecord(train.X.min(axis=0), train.X.max(axis=0))

    def norm(ds):
        meta = dict(ds.meta, normalization="minmax")
        return replace(ds, X=record.apply(ds.X), meta=meta)

    return norm(train), [norm(o) for o in others], record


# -- sparse index:value text -----------------------------------------------------

def load_sparse_text(path, dim=None, label_map=None) -> Dataset:
    """Parse ``label idx:val ...`` lines (1-based indices) into a dense dataset.

    Labels are remapped to 0-based classes in sorted order of their numeric
    value unless ``label_map`` is given; the mapping is stored in ``meta``.
    """
    raw_labels, entries = [], []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ParseError(f"non-numeric label {parts[0]!r}", lineno) from None
            row = []
            for token in parts[1:]:
                idx, sep, val = token.partition(":")
                if not sep:
                    raise ParseError(f"malformed feature {token!r}", lineno)
                try:
                    i, v = int(idx), float(val)
                except ValueError:
                    raise ParseError(f"non-numeric feature {token!r}", lineno) from None
                if i < 1:
                    raise ParseError(f"feature index {i} is not 1-based", lineno)
                row.append((i, v))
                max_index = max(max_index, i)
            raw_labels.append(label)
            entries.append(row)
    d = max_index if dim is None else int(dim)
    if max_index > d:
        raise ParseError(f"feature index {max_index} exceeds declared dimension {d}")
    X = np.zeros((len(entries), d))
    for r, row in enumerate(entries):
        for i, v in row:
            X[r, i - 1] = v
    if label_map is None:
        label_map = {lab: k for k, lab in enumerate(sorted(set(raw_labels)))}
    try:
        y = np.array([label_map[lab] for lab in raw_labels], dtype=np.int64)
    except KeyError as exc:
        raise ParseError(f"label {exc.args[0]} missing from label map") from None
    meta = {"source": str(path), "label_map": {repr(k): v for k, v in label_map.items()}}
    return Dataset(X, y, max(len(label_map), 2), Path(path).stem, meta)


def write_sparse_text(path, X, labels):
    """Write rows as sparse text; zeros are omitted and floats use ``repr``."""
    with open(path, "w") as fh:
        for row, lab in zip(np.asarray(X), labels):
            feats = " ".join(f"{i + 1}:{float(row[i])!r}" for i in np.flatnonzero(row))
            lab = float(lab)
            text = repr(int(lab)) if lab.is_integer() else repr(lab)
            fh.write(f"{text} {feats}".rstrip() + "\n")


# -- CSV -------------------------------------------------------------------------

def load_csv(path, label_column="label") -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV file") from None
        if label_column not in header:
            raise ParseError(f"no {label_column!r} column in header")
        li = header.index(label_column)
        rows, raw = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
            try:
                raw.append(float(rec[li]))
                rows.append([float(v) for j, v in enumerate(rec) if j != li])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    label_map = {lab: k for k, lab in enumerate(sorted(set(raw)))}
    y = np.array([label_map[lab] for lab in raw], dtype=np.int64)
    return Dataset(np.array(rows).reshape(len(rows), -1), y, max(len(label_map), 2),
                   Path(path).stem, {"source": str(path), "label_map": {repr(k): v for k, v in label_map.items()}})


# -- IDX (MNIST) -----------------------------------------------------------------

def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path, expected_magic=None) -> np.ndarray:
    with _open(path) as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise FormatError(f"{path}: truncated IDX header")
        magic = struct.unpack(">I", header)[0]
        if expected_magic is not None and magic != expected_magic:
            raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        if magic >> 8 != 0x08:
            raise FormatError(f"{path}: only unsigned-byte IDX files are supported (magic 0x{magic:08x})")
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        payload = fh.read()
    count = int(np.prod(dims))
    if len(payload) != count:
        raise FormatError(f"{path}: header promises {count} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array):
    array = np.asarray(array)
    if array.dtype != np.uint8:
        if array.min() < 0 or array.max() > 255 or not np.all(array == np.round(array)):
            raise FormatError("IDX export needs integer values in [0, 255]")
        array = array.astype(np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """MNIST-style IDX pair -> (n, 1, 28, 28) pixels in [0, 255] and labels 0-9."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.astype(np.float64)[:, None, :, :]
    return Dataset(X, labels.astype(np.int64), 10, Path(images_path).stem,
                   {"source": str(images_path), "pixel_range": [0, 255]})


def mnist_subset_from_mlxtend() -> Dataset:
    """The 5000-digit MNIST sample bundled with ``mlxtend`` (optional dependency)."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise FormatError("mlxtend is not installed; pip install mlxtend") from exc
    X, y = mnist_data()
    return Dataset(np.asarray(X, dtype=np.float64).reshape(-1, 1, 28, 28), y, 10,
                   "mnist-5k", {"source": "mlxtend.data.mnist_data", "pixel_range": [0, 255]})


# -- splitting -------------------------------------------------------------------

def split(dataset: Dataset, ratios=(0.4, 0.1, 0.5), seed=0):
    """Seeded shuffle then contiguous (train, val, test) partition.

    Sizes are ``floor(ratio * n)`` for train and validation; test takes the
    remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(ratios[0] * n + 1e-9))
    n_val = int(np.floor(ratios[1] * n + 1e-9))
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    for name, idx, r in zip(("train", "validation", "test"), parts, ratios):
        if r > 0 and len(idx) == 0:
            raise ConfigError(f"{name} partition is empty for n={n}, ratios={ratios}")
    return tuple(dataset.subset(idx, f"{dataset.name}-{nm}")
                 for idx, nm in zip(parts, ("train", "val", "test")))


def carve_validation(train: Dataset, fraction=0.2, seed=0):
    """Hold out ``fraction`` of a pre-divided training set for validation."""
    if not 0 < fraction < 1:
        raise ConfigError(f"validation fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(train))
    n_val = int(round(fraction * len(train)))
    if n_val == 0 or n_val == len(train):
        raise ConfigError(f"validation carve of {fraction} leaves an empty partition")
    return (train.subset(order[n_val:], f"{train.name}-train"),
            train.subset(order[:n_val], f"{train.name}-val"))
