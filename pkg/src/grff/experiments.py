"""Config-driven experiment runner.

An experiment is described by an INI file::

    [experiment]
    kind = benchmark          ; synthetic-sweep | benchmark | layers-study | robustness | train-single
    dataset = monks1
    methods = grff, rff
    repetitions = 5
    seed = 0
    output = runs/monks1

    [train]
    D_list = 256, 64
    epochs = 200, 1000

Every key has a typed default tagged with where it comes from ("published"
for published settings, "decided" for choices made here, "user" once the
config sets it).  The resolved config and tags are written to
``manifest.json``; passing that manifest back to :func:`run_experiment`
re-executes the run.

Outputs (all written atomically, all byte-reproducible):

* ``manifest.json``
* ``metrics.csv``: one row per repetition and method
* ``summary.csv`` and ``summary.txt``: mean and sample std per group,
  the text file in the ``95.83±2.15`` style
* ``curves/*.csv`` and ``models/*.json`` for GRFF runs
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    LAMBDA_GRID,
    GAMMA_GRID,
    POOL_FACTOR,
    fit_mlp_baseline,
    grid_search_rff,
    mlp_widths,
)
from .datasets import (
    Dataset,
    carve_validation,
    load_csv,
    load_mnist_idx,
    load_monks,
    load_sparse_text,
    make_monks,
    make_synthetic,
    minmax_normalize,
    mnist_subset_from_mlxtend,
    split,
)
from .exceptions import ConfigError, DataError
from .io import atomic_write, save_model
from .model import build_image_network, build_vector_network, extract_features, pca_top_components, predict
from .generators import PREDICT_STREAM, NoiseStream
from .robustness import AttackConfig, dump_adversarial, robustness_protocol
from .training import LAYER_PRESETS, History, TrainConfig, train_progressive

logger = logging.getLogger(__name__)

KINDS = ("synthetic-sweep", "benchmark", "layers-study", "robustness", "train-single")
METHODS = ("grff", "rff", "rff-aligned", "mlp")
DATASETS = ("synthetic", "monks1", "monks2", "monks3", "mnist", "sparse", "csv")
MANIFEST_FORMAT = "grff-manifest"

# (section, key) -> (type, default, provenance)
SCHEMA = {
    ("experiment", "kind"): ("str", None, "user"),
    ("experiment", "dataset"): ("str", "synthetic", "decided"),
    ("experiment", "methods"): ("strlist", ("grff",), "decided"),
    ("experiment", "repetitions"): ("int", 5, "published"),
    ("experiment", "seed"): ("int", 0, "decided"),
    ("experiment", "output"): ("str", "runs", "decided"),
    ("experiment", "save_models"): ("bool", True, "decided"),
    ("data", "path"): ("str", "", "decided"),
    ("data", "labels_path"): ("str", "", "decided"),
    ("data", "test_path"): ("str", "", "decided"),
    ("data", "test_labels_path"): ("str", "", "decided"),
    ("data", "n_train"): ("int", 10000, "published"),
    ("data", "n_test"): ("int", 1000, "published"),
    ("data", "d"): ("int", 10, "decided"),
    ("data", "dims"): ("intlist", tuple(range(2, 21, 2)), "published"),
    ("data", "split"): ("floatlist", (0.4, 0.1, 0.5), "published"),
    ("data", "normalize"): ("bool", True, "published"),
    ("data", "subset"): ("int", 0, "decided"),
    ("train", "D_list"): ("intlist", (256, 64), "published"),
    ("train", "epochs"): ("intlist", (200, 1000), "published"),
    ("train", "batch_size"): ("int", 128, "decided"),
    ("train", "lr"): ("float", 1e-3, "decided"),
    ("train", "betas"): ("floatlist", (0.9, 0.999), "decided"),
    ("train", "eps"): ("float", 1e-8, "decided"),
    ("train", "val_fraction"): ("float", 0.2, "published"),
    ("train", "layers"): ("intlist", (1, 2, 3, 4), "published"),
    ("train", "epoch_scale"): ("float", 1.0, "decided"),
    ("baselines", "D"): ("int", 0, "decided"),
    ("baselines", "lambdas"): ("floatlist", LAMBDA_GRID, "decided"),
    ("baselines", "gammas"): ("floatlist", GAMMA_GRID, "published"),
    ("baselines", "pool_factor"): ("int", POOL_FACTOR, "decided"),
    ("attack", "epsilons"): ("floatlist", (4.0, 8.0, 12.0, 16.0), "published"),
    ("attack", "alpha"): ("float", 1.0, "published"),
    ("attack", "method"): ("str", "iter_ll", "published"),
    ("attack", "resample_draws"): ("int", 1, "decided"),
    ("attack", "n_attack"): ("int", 0, "decided"),
    ("attack", "compare_cnn"): ("bool", True, "published"),
    ("attack", "dump"): ("bool", False, "decided"),
    ("attack", "model"): ("str", "", "decided"),
}

IMAGE_DEFAULTS = {("train", "D_list"): (16, 8), ("train", "epochs"): (10, 30)}


# -- config ----------------------------------------------------------------------

def _parse(kind, text):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    items = [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]
    conv = {"intlist": int, "floatlist": float, "strlist": str}[kind]
    return tuple(conv(t) for t in items)


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


@dataclass
class ExperimentConfig:
    values: dict      # (section, key) -> value
    provenance: dict  # (section, key) -> "published" | "decided" | "user" | "env"
    source: str = ""

    def __getitem__(self, key):
        return self.values[key]

    @property
    def kind(self) -> str:
        return self.values[("experiment", "kind")]

    @property
    def seed(self) -> int:
        return self.values[("experiment", "seed")]

    @property
    def output(self) -> Path:
        return Path(self.values[("experiment", "output")])

    def train_config(self, seed=0, **overrides) -> TrainConfig:
        v = self.values
        kw = dict(D_list=v["train", "D_list"], epochs=v["train", "epochs"],
                  batch_size=v["train", "batch_size"], lr=v["train", "lr"],
                  betas=v["train", "betas"], eps=v["train", "eps"], seed=seed,
                  val_fraction=v["train", "val_fraction"])
        kw.update(overrides)
        return TrainConfig(**kw)

    def train_config_factory(self):
        return lambda seed: self.train_config(seed)

    def attack_config(self, epsilon) -> AttackConfig:
        return AttackConfig(float(epsilon), alpha=self.values["attack", "alpha"])

    def manifest(self) -> dict:
        sections = {}
        for (sec, key), val in sorted(self.values.items()):
            sections.setdefault(sec, {})[key] = {"value": _jsonable(val),
                                                  "provenance": self.provenance[sec, key]}
        return {"format": MANIFEST_FORMAT, "version": 1, "package_version": __version__,
                "seed": self.seed, "config": sections}


def _validate(values, errors):
    kind = values.get(("experiment", "kind"))
    if kind not in KINDS:
        errors.append(f"[experiment] kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    if values["experiment", "dataset"] not in DATASETS:
        errors.append(f"[experiment] dataset: must be one of {', '.join(DATASETS)}")
    for m in values["experiment", "methods"]:
        if m not in METHODS:
            errors.append(f"[experiment] methods: unknown method {m!r}")
    if values["experiment", "repetitions"] < 1:
        errors.append("[experiment] repetitions: must be >= 1")
    D_list, epochs = values["train", "D_list"], values["train", "epochs"]
    if len(D_list) != len(epochs):
        errors.append(f"[train] epochs: {len(epochs)} phases for {len(D_list)} layers")
    if not D_list or min(D_list) < 1:
        errors.append("[train] D_list: sizes must be positive")
    if epochs and (min(epochs) < 0 or sum(epochs) == 0):
        errors.append("[train] epochs: must be non-negative with a positive total")
    if values["train", "batch_size"] < 1:
        errors.append("[train] batch_size: must be >= 1")
    if not values["train", "lr"] > 0:
        errors.append("[train] lr: must be positive")
    if not 0 < values["train", "val_fraction"] < 1:
        errors.append("[train] val_fraction: must be in (0, 1)")
    for K in values["train", "layers"]:
        if K not in LAYER_PRESETS:
            errors.append(f"[train] layers: no preset for K={K}")
    ratios = values["data", "split"]
    if len(ratios) != 3 or abs(sum(ratios) - 1) > 1e-9 or min(ratios) < 0:
        errors.append("[data] split: need three non-negative ratios summing to 1")
    if values["data", "n_train"] < 2 or values["data", "n_test"] < 1:
        errors.append("[data] n_train/n_test: too small")
    if values["data", "d"] < 1 or (values["data", "dims"] and min(values["data", "dims"]) < 1):
        errors.append("[data] d/dims: dimensions must be positive")
    if values["attack", "alpha"] <= 0:
        errors.append("[attack] alpha: must be positive")
    if any(e < 0 for e in values["attack", "epsilons"]):
        errors.append("[attack] epsilons: must be non-negative")
    if values["attack", "method"] not in ("iter_ll", "fgsm"):
        errors.append("[attack] method: must be iter_ll or fgsm")
    if kind == "robustness" and values["experiment", "dataset"] != "mnist":
        errors.append("[experiment] dataset: robustness runs need image data (mnist)")


def _resolve(raw: dict, provenance_in=None, source="") -> ExperimentConfig:
    """``raw`` maps (section, key) -> string or parsed value."""
    errors = []
    values, prov = {}, {}
    for key in raw:
        if key not in SCHEMA:
            errors.append(f"[{key[0]}] {key[1]}: unknown setting")
    dataset = str(raw.get(("experiment", "dataset"), "synthetic")).strip()
    for key, (typ, default, origin) in SCHEMA.items():
        if key in raw:
            val = raw[key]
            if isinstance(val, str):
                try:
                    val = _parse(typ, val)
                except ValueError as exc:
                    # keep the default so semantic checks still report on the rest
                    errors.append(f"[{key[0]}] {key[1]}: {exc}")
                    val = default
            elif isinstance(val, list):
                val = tuple(val)
            values[key] = val
            prov[key] = (provenance_in or {}).get(key, "user")
        else:
            if dataset == "mnist" and key in IMAGE_DEFAULTS:
                default, origin = IMAGE_DEFAULTS[key], "decided"
            if key == ("experiment", "kind"):
                errors.append("[experiment] kind: required")
                continue
            values[key] = default
            prov[key] = origin
    env_seed = os.environ.get("GRFF_SEED")
    if env_seed is not None and env_seed.strip():
        try:
            values["experiment", "seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"GRFF_SEED must be an integer, got {env_seed!r}") from None
        prov["experiment", "seed"] = "env"
    if ("experiment", "kind") in values:
        _validate(values, errors)
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return ExperimentConfig(values, prov, source)


def parse_config_text(text, source="<string>") -> ExperimentConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: malformed manifest: {exc}") from None
        if doc.get("format") != MANIFEST_FORMAT:
            raise ConfigError(f"{source}: not a run manifest")
        raw, prov = {}, {}
        for sec, keys in doc["config"].items():
            for key, entry in keys.items():
                raw[sec, key] = entry["value"]
                prov[sec, key] = entry["provenance"]
        return _resolve(raw, prov, source)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw = {(sec, key): val for sec in parser.sections() for key, val in parser[sec].items()}
    return _resolve(raw, None, source)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text, str(path))


# -- seeds and data --------------------------------------------------------------

def derive_seed(master, *key) -> int:
    """Independent 32-bit seed for a (master, key...) combination."""
    seq = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1)[0])


def _need(path, what):
    if not path:
        raise ConfigError(f"[data] {what}: required for this dataset")
    if not Path(path).exists():
        raise DataError(f"data file not found: {path}")
    return path


def load_dataset(cfg: ExperimentConfig):
    """``(full, None)`` for datasets to be split, ``(train, test)`` for pre-divided ones."""
    name = cfg["experiment", "dataset"]
    path, test_path = cfg["data", "path"], cfg["data", "test_path"]
    if name.startswith("monks"):
        problem = int(name[-1])
        if path:
            train = load_monks(_need(path, "path"))
            test = load_monks(_need(test_path, "test_path"))
            return train, test
        return make_monks(problem, seed=cfg.seed)
    if name in ("sparse", "csv"):
        loader = load_sparse_text if name == "sparse" else load_csv
        full = loader(_need(path, "path"))
        if test_path:
            kwargs = {}
            if name == "sparse":
                kwargs = {"dim": full.X.shape[1],
                          "label_map": {float(k): v for k, v in full.meta["label_map"].items()}}
            return full, loader(_need(test_path, "test_path"), **kwargs)
        return full, None
    if name == "mnist":
        if path:
            full = load_mnist_idx(_need(path, "path"), _need(cfg["data", "labels_path"], "labels_path"))
        else:
            full = mnist_subset_from_mlxtend()
        n = cfg["data", "subset"]
        if n:
            idx = np.sort(np.random.default_rng(derive_seed(cfg.seed, 99)).permutation(len(full))[:n])
            full = full.subset(idx)
        if test_path:
            return full, load_mnist_idx(_need(test_path, "test_path"),
                                        _need(cfg["data", "test_labels_path"], "test_labels_path"))
        return full, None
    raise ConfigError(f"dataset {name!r} has no loader")


def repetition_data(cfg: ExperimentConfig, base, rep, d=None):
    """(train, val, test) for one repetition; validation is carved fresh each time."""
    seed = derive_seed(cfg.seed, rep, 0 if d is None else d, 0)
    name = cfg["experiment", "dataset"]
    vf = cfg["train", "val_fraction"]
    if name == "synthetic":
        full = make_synthetic(cfg["data", "n_train"], d, seed)
        test = make_synthetic(cfg["data", "n_test"], d, derive_seed(cfg.seed, rep, d, 1))
        train, val = carve_validation(full, vf, seed)
        return train, val, test
    full, test = base
    if test is None:
        train, val, test = split(full, cfg["data", "split"], seed)
    else:
        train, val = carve_validation(full, vf, seed)
    if cfg["data", "normalize"] and name != "mnist":
        train, (val, test), record = minmax_normalize(train, [val, test])
        train.meta["normalization_record"] = record.to_dict()
    return train, val, test


# -- methods ---------------------------------------------------------------------

def _acc(pred, y) -> float:
    return float((np.asarray(pred) == np.asarray(y)).mean())


def train_grff(train: Dataset, val: Dataset, tc: TrainConfig, seed):
    if train.X.ndim == 4:
        net = build_image_network(train.X.shape[1:], train.num_classes, tc.D_list, seed)
    else:
        net = build_vector_network(train.X.shape[1], train.num_classes, tc.D_list, seed)
    net, history = train_progressive(net, (train.X, train.y), (val.X, val.y), tc)
    record = train.meta.get("normalization_record")
    if record is not None:
        net.normalization = {"kind": "minmax", **record}
    net.meta = {"dataset": train.name, "train_config": {k: _jsonable(v) for k, v in tc.to_dict().items()},
                "best_epoch": history.best_epoch}
    return net, history


def run_method(method, cfg: ExperimentConfig, train, val, test, tc: TrainConfig, seed):
    """Metrics dict for one method; GRFF also returns (net, history)."""
    extra = None
    if method == "grff":
        net, history = train_grff(train, val, tc, seed)
        row = {"train_acc": _acc(predict(net, train.X, seed), train.y),
               "val_acc": history.records[history.best_epoch].val_acc,
               "test_acc": _acc(predict(net, test.X, seed), test.y)}
        extra = (net, history)
    elif method in ("rff", "rff-aligned"):
        if train.num_classes != 2 or train.X.ndim != 2:
            raise ConfigError(f"method {method} supports binary vector data only")
        D = cfg["baselines", "D"] or tc.D_list[0]
        res = grid_search_rff((train.X, train.y), (val.X, val.y), D, seed,
                              cfg["baselines", "gammas"], cfg["baselines", "lambdas"],
                              aligned=method == "rff-aligned")
        row = {"train_acc": _acc(res.model.predict(train.X), train.y), "val_acc": res.val_acc,
               "test_acc": _acc(res.model.predict(test.X), test.y)}
    elif method == "mlp":
        X = train.X.reshape(len(train.X), -1)
        widths = mlp_widths(X.shape[1], tc.D_list, train.num_classes)
        flat = lambda ds: ds.X.reshape(len(ds.X), -1)  # noqa: E731
        mlp, _ = fit_mlp_baseline((X, train.y), (flat(val), val.y), widths, tc)
        row = {"train_acc": _acc(mlp.predict(X), train.y),
               "val_acc": _acc(mlp.predict(flat(val)), val.y),
               "test_acc": _acc(mlp.predict(flat(test)), test.y)}
    else:
        raise ConfigError(f"unknown method {method!r}")
    row["test_error"] = 1.0 - row["test_acc"]
    return row, extra


# -- outputs ---------------------------------------------------------------------

def emit_curves(history: History) -> str:
    """Per-epoch CSV: epoch, phase, train_loss, train_acc, val_loss, val_acc."""
    if not history.records:
        raise ConfigError("cannot emit curves for an empty history")
    return history.to_csv()


def emit_pca(net, X, y, layer, seed=0, k=3) -> str:
    """Top-``k`` principal components of layer features, one row per sample plus its label."""
    if not 1 <= layer <= net.K:
        raise ConfigError(f"layer must be in [1, {net.K}], got {layer}")
    noise = net.frozen_noise or net.sample_noise(NoiseStream(net.noise_spec.noise_dim, seed, (PREDICT_STREAM,)))
    res = pca_top_components(extract_features(net, X, layer, noise), k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"c{i + 1}" for i in range(k)] + ["label"])
    for row, lab in zip(res.projected, y):
        w.writerow([repr(float(v)) for v in row] + [int(lab)])
    return buf.getvalue()


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def summarize(rows, group_keys, metrics):
    """Mean and sample standard deviation (ddof=1; 0 for one repetition) per group."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
    out = []
    for key, members in groups.items():
        entry = dict(zip(group_keys, key), n=len(members))
        for m in metrics:
            vals = np.array([r[m] for r in members], dtype=np.float64)
            entry[m + "_mean"] = float(vals.mean())
            entry[m + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


def summary_table(summary, group_keys, metrics) -> str:
    """Fixed-width table with percentages as ``mean±std`` to two decimals."""
    header = list(group_keys) + list(metrics)
    lines = ["\t".join(header)]
    for s in summary:
        cells = [str(s[k]) for k in group_keys]
        cells += [f"{100 * s[m + '_mean']:.2f}±{100 * s[m + '_std']:.2f}" for m in metrics]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


class RunWriter:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = cfg.output
        self.root.mkdir(parents=True, exist_ok=True)

    def write(self, rel, text):
        atomic_write(self.root / rel, text)

    def manifest(self):
        self.write("manifest.json", json.dumps(self.cfg.manifest(), indent=1, sort_keys=True) + "\n")

    def table(self, rows, header, group_keys, metrics):
        self.write("metrics.csv", _csv_text(header, [[r[h] for h in header] for r in rows]))
        summary = summarize(rows, group_keys, metrics)
        sh = list(group_keys) + ["n"] + [m + s for m in metrics for s in ("_mean", "_std")]
        self.write("summary.csv", _csv_text(sh, [[s[h] for h in sh] for s in summary]))
        self.write("summary.txt", summary_table(summary, group_keys, metrics))
        return summary

    def grff_artifacts(self, tag, net, history):
        self.write(f"curves/{tag}.csv", emit_curves(history))
        if self.cfg["experiment", "save_models"]:
            (self.root / "models").mkdir(exist_ok=True)
            save_model(net, self.root / "models" / f"{tag}.json")


METRIC_HEADER = ["kind", "dataset", "d", "K", "method", "repetition", "seed",
                 "train_acc", "val_acc", "test_acc", "test_error"]
GROUP = ["dataset", "d", "K", "method"]
METRICS = ["train_acc", "val_acc", "test_acc", "test_error"]


def _vector_runs(cfg: ExperimentConfig, writer: RunWriter, settings):
    """``settings`` yields (d, K, TrainConfig-factory, methods) tuples."""
    base = None if cfg["experiment", "dataset"] == "synthetic" else load_dataset(cfg)
    rows = []
    for d, K, make_tc, methods in settings:
        for rep in range(cfg["experiment", "repetitions"]):
            train, val, test = repetition_data(cfg, base, rep, d)
            seed = derive_seed(cfg.seed, rep, d or 0, K, 2)
            tc = make_tc(seed)
            for method in methods:
                logger.info("%s d=%s K=%s rep=%d method=%s", cfg.kind, d, K, rep, method)
                row, extra = run_method(method, cfg, train, val, test, tc, seed)
                dim = d if d is not None else int(np.prod(train.X.shape[1:]))
                rows.append(dict(kind=cfg.kind, dataset=cfg["experiment", "dataset"], d=dim, K=K,
                                 method=method, repetition=rep, seed=seed, **row))
                if extra is not None:
                    writer.grff_artifacts(f"{method}-d{dim}-K{K}-rep{rep}", *extra)
    return writer.table(rows, METRIC_HEADER, GROUP, METRICS)


def _scaled(epochs, scale):
    return tuple(max(1, int(np.ceil(e * scale))) if e else 0 for e in epochs)


def run_vector_experiment(cfg: ExperimentConfig, writer: RunWriter):
    K = len(cfg["train", "D_list"])
    methods = cfg["experiment", "methods"]
    if cfg.kind == "synthetic-sweep":
        settings = [(d, K, cfg.train_config_factory(), methods) for d in cfg["data", "dims"]]
    elif cfg.kind == "layers-study":
        scale = cfg["train", "epoch_scale"]
        settings = []
        for k in cfg["train", "layers"]:
            D_list, epochs = LAYER_PRESETS[k]

            def make(seed, D_list=D_list, epochs=epochs):
                return cfg.train_config(seed, D_list=D_list, epochs=_scaled(epochs, scale))
            settings.append((cfg["data", "d"] if cfg["experiment", "dataset"] == "synthetic" else None,
                             k, make, ["grff"]))
    else:
        d = cfg["data", "d"] if cfg["experiment", "dataset"] == "synthetic" else None
        if cfg.kind == "train-single":
            methods = ["grff"]
        settings = [(d, K, cfg.train_config_factory(), methods)]
    return _vector_runs(cfg, writer, settings)


ROBUST_HEADER = ["model", "repetition", "seed", "epsilon", "iterations", "acc0", "acc1", "acc2"]


def run_robustness(cfg: ExperimentConfig, writer: RunWriter):
    from .io import load_model

    base = load_dataset(cfg)
    rows = []
    for rep in range(cfg["experiment", "repetitions"]):
        train, val, test = repetition_data(cfg, base, rep)
        seed = derive_seed(cfg.seed, rep, 0, 0, 2)
        if cfg["attack", "model"]:
            net = load_model(cfg["attack", "model"])
        else:
            net, history = train_grff(train, val, cfg.train_config(seed), seed)
            writer.grff_artifacts(f"grff-image-rep{rep}", net, history)
        n = cfg["attack", "n_attack"] or len(test)
        X, y = test.X[:n], test.y[:n]
        models = [("grff", net)]
        if cfg["attack", "compare_cnn"]:
            from .model import freeze_noise
            models.append(("cnn", freeze_noise(net, seed)))
        for label, model in models:
            for eps in cfg["attack", "epsilons"]:
                res = robustness_protocol(model, X, y, cfg.attack_config(eps), seed,
                                          cfg["attack", "method"], cfg["attack", "resample_draws"])
                logger.info("%s rep=%d eps=%s acc0=%.4f acc1=%.4f acc2=%.4f",
                            label, rep, eps, res.acc0, res.acc1, res.acc2)
                rows.append(dict(model=label, repetition=rep, seed=seed, epsilon=float(eps),
                                 iterations=res.iterations, acc0=res.acc0, acc1=res.acc1, acc2=res.acc2))
                if cfg["attack", "dump"]:
                    dump_adversarial(writer.root / "adversarial", res, y,
                                     prefix=f"{label}-rep{rep}-eps{eps:g}")
    return writer.table(rows, ROBUST_HEADER, ["model", "epsilon"], ["acc0", "acc1", "acc2"])


def run_experiment(config) -> list:
    """Execute a config (path, text-parsed :class:`ExperimentConfig`) and write all outputs.

    Returns the summary rows.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    writer = RunWriter(cfg)
    writer.manifest()
    if cfg.kind == "robustness":
        return run_robustness(cfg, writer)
    if cfg["experiment", "dataset"] == "mnist" and cfg.kind != "train-single":
        if set(cfg["experiment", "methods"]) - {"grff", "mlp"}:
            raise ConfigError("image data supports methods grff and mlp only")
    return run_vector_experiment(cfg, writer)
