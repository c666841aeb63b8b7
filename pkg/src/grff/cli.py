"""Command line entry point.

    grff run <config>                      run an experiment config or manifest
    grff attack <config>                   run a robustness config
    grff pca <model> <data> --layer k      top-3 principal components of layer features
    grff eval <model> <data>               loss and accuracy of a saved model

``GRFF_SEED`` overrides the config seed.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .exceptions import ConfigError, DataError, GRFFError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _load_data(path, fmt="auto", labels=None):
    from pathlib import Path

    from .datasets import load_csv, load_mnist_idx, load_monks, load_sparse_text

    if not Path(path).exists():
        raise DataError(f"data file not found: {path}")
    if labels is not None and not Path(labels).exists():
        raise DataError(f"data file not found: {labels}")
    if fmt == "auto":
        name = str(path).lower()
        if labels is not None:
            fmt = "idx"
        elif name.endswith(".csv"):
            fmt = "csv"
        elif "monks" in name:
            fmt = "monks"
        else:
            fmt = "sparse"
    if fmt == "idx":
        if labels is None:
            raise ConfigError("--labels is required for IDX image files")
        return load_mnist_idx(path, labels)
    if fmt == "csv":
        return load_csv(path)
    if fmt == "monks":
        return load_monks(path)
    return load_sparse_text(path)


def _prepared(net, ds):
    X = ds.X
    norm = net.normalization
    if norm and norm.get("kind") == "minmax":
        from .datasets import MinMaxRecord

        X = MinMaxRecord(np.array(norm["minimum"]), np.array(norm["maximum"])).apply(X)
    if X.shape[1:] != tuple(net.input_shape):
        if X.ndim == 2 and net.variant == "vector" and X.shape[1] < net.input_shape[0]:
            # sparse text omits trailing all-zero columns
            X = np.hstack([X, np.zeros((len(X), net.input_shape[0] - X.shape[1]))])
        else:
            raise DataError(f"data has per-sample shape {X.shape[1:]}, model expects {tuple(net.input_shape)}")
    return X


def cmd_run(args, force_kind=None):
    from .experiments import load_config, run_experiment

    cfg = load_config(args.config)
    if force_kind is not None and cfg.kind != force_kind:
        raise ConfigError(f"[experiment] kind: `grff attack` needs kind = {force_kind}, got {cfg.kind}")
    summary = run_experiment(cfg)
    for row in summary:
        print(json.dumps(row, sort_keys=True))
    print(f"outputs written to {cfg.output}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args):
    from .io import load_model
    from .model import evaluate
    from .generators import PREDICT_STREAM, RESAMPLE_STREAM, NoiseStream

    net = load_model(args.model)
    ds = _load_data(args.data, args.format, args.labels)
    X = _prepared(net, ds)
    if net.frozen_noise is not None:
        noise = net.frozen_noise
    else:
        key = RESAMPLE_STREAM if args.resample else PREDICT_STREAM
        noise = net.sample_noise(NoiseStream(net.noise_spec.noise_dim, args.seed, (key,)))
    loss, acc = evaluate(net, X, ds.y, noise)
    if not np.isfinite(loss):
        raise NumericalError("non-finite evaluation loss")
    print(json.dumps({"n": len(ds), "loss": loss, "accuracy": acc}, sort_keys=True))
    return EXIT_OK


def cmd_pca(args):
    from .experiments import emit_pca
    from .io import atomic_write, load_model

    net = load_model(args.model)
    ds = _load_data(args.data, args.format, args.labels)
    text = emit_pca(net, _prepared(net, ds), ds.y, args.layer, args.seed)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="grff", description="Generative random Fourier feature experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config or manifest")
    run.add_argument("config")
    attack = sub.add_parser("attack", help="run a robustness experiment config")
    attack.add_argument("config")

    for name, helptext in (("pca", "export PCA of layer features"), ("eval", "evaluate a saved model")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("model")
        sp.add_argument("data")
        sp.add_argument("--labels", help="IDX label file (image data)")
        sp.add_argument("--format", default="auto", choices=["auto", "csv", "sparse", "idx", "monks"])
        sp.add_argument("--seed", type=int, default=0, help="noise seed when the model has no frozen noise")
        if name == "pca":
            sp.add_argument("--layer", type=int, required=True)
            sp.add_argument("--out", help="output CSV (default stdout)")
        else:
            sp.add_argument("--resample", action="store_true", help="use the resampling noise stream")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "attack": lambda a: cmd_run(a, "robustness"),
                "eval": cmd_eval, "pca": cmd_pca}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GRFFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
