"""Model files and atomic output helpers.

A model file is UTF-8 JSON::

    {"format": "grff-model", "version": 1, "sha256": "<hex>", "payload": {...}}

``sha256`` covers the canonical (sorted keys, compact) JSON encoding of
``payload``.  Arrays are stored as ``{"dtype", "shape", "data"}`` with
``data`` the base64 of the little-endian bytes, so round trips are
bit-exact.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .exceptions import ChecksumError, FormatError, MigrationError
from .generators import NoiseSpec, build_generator
from .model import GRFFNetwork, LinearHead

FORMAT_NAME = "grff-model"
FORMAT_VERSION = 1


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a)
    le = a.astype(a.dtype.newbyteorder("<"))
    return {"dtype": a.dtype.str.lstrip("<>|="), "shape": list(a.shape),
            "data": base64.b64encode(le.tobytes()).decode("ascii")}


def decode_array(obj) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    dtype = np.dtype("<" + obj["dtype"]) if obj["dtype"][0] in "fiuc" else np.dtype(obj["dtype"])
    return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("=")).reshape(obj["shape"])


def _canonical(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def model_payload(net: GRFFNetwork) -> dict:
    state = net.state()
    gens = []
    for g, blocks in zip(net.generators, state["generators"]):
        bn = g.blocks[0].bn
        gens.append({
            "widths": list(g.widths), "out_shape": list(g.out_shape),
            "activation": g.activation, "slope": g.slope, "slots": g.slots,
            "momentum": bn.momentum if bn else 0.1, "eps": bn.eps if bn else 1e-5,
            "blocks": [{k: encode_array(v) for k, v in b.items()} for b in blocks],
        })
    return {
        "variant": net.variant,
        "D_list": list(net.D_list),
        "noise_spec": {"noise_dim": net.noise_spec.noise_dim, "seed": net.noise_spec.seed},
        "num_classes": net.num_classes,
        "input_shape": list(net.input_shape),
        "input_scale": float(net.input_scale).hex(),
        "generators": gens,
        "head": {k: encode_array(v) for k, v in state["head"].items()},
        "frozen_noise": None if net.frozen_noise is None else [encode_array(n) for n in net.frozen_noise],
        "normalization": net.normalization,
        "meta": net.meta,
        "weight_scales": None if net.weight_scales is None else [float(v).hex() for v in net.weight_scales],
    }


def network_from_payload(p) -> GRFFNetwork:
    gens, gen_states = [], []
    for g in p["generators"]:
        gen = build_generator(g["widths"], seed=0, activation=g["activation"], slope=g["slope"],
                              out_shape=g["out_shape"], momentum=g["momentum"], eps=g["eps"],
                              slots=g.get("slots", 1))
        gens.append(gen)
        gen_states.append([{k: decode_array(v) for k, v in b.items()} for b in g["blocks"]])
    head_state = {k: decode_array(v) for k, v in p["head"].items()}
    head = LinearHead(Parameter(head_state["weight"]), Parameter(head_state["bias"]))
    frozen = p["frozen_noise"]
    net = GRFFNetwork(p["variant"], gens, tuple(p["D_list"]), head,
                      NoiseSpec(**p["noise_spec"]), p["num_classes"], tuple(p["input_shape"]),
                      float.fromhex(p["input_scale"]),
                      None if frozen is None else [decode_array(n) for n in frozen],
                      p["normalization"], p["meta"],
                      None if p.get("weight_scales") is None
                      else tuple(float.fromhex(v) for v in p["weight_scales"]))
    net.load_state({"generators": gen_states, "head": head_state})
    return net


def dumps_model(net: GRFFNetwork) -> str:
    payload = model_payload(net)
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION,
           "sha256": hashlib.sha256(_canonical(payload)).hexdigest(), "payload": payload}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_model(net: GRFFNetwork, path):
    atomic_write(path, dumps_model(net))


def loads_model(text: str) -> GRFFNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"model file is truncated or corrupt: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise FormatError("not a grff model file")
    if doc.get("version") != FORMAT_VERSION:
        raise MigrationError(f"model format version {doc.get('version')} is not supported "
                             f"(this build reads version {FORMAT_VERSION})")
    payload = doc.get("payload")
    if payload is None or hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("sha256"):
        raise ChecksumError("model payload does not match its checksum")
    try:
        return network_from_payload(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model payload: {exc}") from exc


def load_model(path) -> GRFFNetwork:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
