"""Versioned JSON checkpoints.

A checkpoint carries everything needed to reproduce forward passes and
resume optimization bit-identically: config snapshot, every named parameter
(flat values + shape + trainable flag), Adam accumulators, the training
generator's state, and the epoch counter. Serialization is canonical
(sorted keys, repr-roundtripped floats), so save -> load -> save is
byte-identical.
"""

import json
from dataclasses import dataclass

import numpy as np

from ..diffcore import AdamState, ParamStore
from ..errors import CheckpointError
from .config import Config, config_from_dict, config_to_dict

FORMAT_VERSION = 1
KINDS = ("arm", "mpm")


@dataclass
class Checkpoint:
    version: int
    kind: str
    epoch: int
    config: Config
    params: dict  # name -> ndarray
    trainable: dict  # name -> bool
    adam: dict  # parsed adam block or None
    rng_state: dict  # generator state or None


def checkpoint_document(kind, cfg, store, adam=None, epoch=0, rng_state=None):
    if kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    params = {}
    for name, tensor in store.items():
        params[name] = {
            "shape": list(tensor.data.shape),
            "data": tensor.data.reshape(-1).tolist(),
            "trainable": store.is_trainable(name),
        }
    adam_block = None
    if adam is not None:
        adam_block = {
            "t": adam.t,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "m": {n: v.reshape(-1).tolist() for n, v in adam.m.items()},
            "v": {n: v.reshape(-1).tolist() for n, v in adam.v.items()},
        }
    return {
        "version": FORMAT_VERSION,
        "kind": kind,
        "epoch": epoch,
        "config": config_to_dict(cfg),
        "params": params,
        "adam": adam_block,
        "rng_state": rng_state,
    }


def save_checkpoint(path, kind, cfg, store, adam=None, epoch=0, rng_state=None):
    doc = checkpoint_document(kind, cfg, store, adam, epoch, rng_state)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    try:
        with open(path, "w") as fh:
            fh.write(blob)
            fh.write("\n")
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


def _require(doc, key, context):
    if key not in doc:
        raise CheckpointError(f"{context}: missing field {key!r}")
    return doc[key]


def load_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint {path}: invalid JSON: {e}") from e
    ctx = f"checkpoint {path}"
    version = _require(doc, "version", ctx)
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{ctx}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    kind = _require(doc, "kind", ctx)
    if kind not in KINDS:
        raise CheckpointError(f"{ctx}: unknown kind {kind!r}")
    try:
        cfg = config_from_dict(_require(doc, "config", ctx))
    except Exception as e:
        raise CheckpointError(f"{ctx}: bad config block: {e}") from e
    raw_params = _require(doc, "params", ctx)
    params, trainable = {}, {}
    for name, entry in raw_params.items():
        shape = _require(entry, "shape", f"{ctx} param {name}")
        data = _require(entry, "data", f"{ctx} param {name}")
        expected = int(np.prod(shape)) if shape else 1
        if len(data) != expected:
            raise CheckpointError(
                f"{ctx} param {name}: shape {shape} expects {expected} values, "
                f"got {len(data)}"
            )
        params[name] = np.array(data, dtype=np.float64).reshape(shape)
        trainable[name] = bool(entry.get("trainable", True))
    return Checkpoint(
        version=version,
        kind=kind,
        epoch=_require(doc, "epoch", ctx),
        config=cfg,
        params=params,
        trainable=trainable,
        adam=doc.get("adam"),
        rng_state=doc.get("rng_state"),
    )


def store_from_params(params, trainable):
    store = ParamStore()
    for name in params:
        store.add(name, params[name], trainable=trainable[name])
    return store


def adam_from_block(store, block):
    """Rebuild optimizer state from a checkpoint's adam block."""
    if block is None:
        return None
    state = AdamState(store, lr=block["lr"], beta1=block["beta1"],
                      beta2=block["beta2"], eps=block["eps"])
    state.t = int(block["t"])
    for name in list(state.m):
        if name not in block["m"] or name not in block["v"]:
            raise CheckpointError(f"adam state missing accumulators for {name!r}")
        shape = store[name].data.shape
        state.m[name] = np.array(block["m"][name], dtype=np.float64).reshape(shape)
        state.v[name] = np.array(block["v"][name], dtype=np.float64).reshape(shape)
    return state


def rng_state_of(generator):
    return generator.bit_generator.state


def generator_from_state(state):
    gen = np.random.default_rng()
    gen.bit_generator.state = state
    return gen
