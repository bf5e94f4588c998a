"""Versioned JSON checkpoints: architecture, flat float64 parameter arrays, seed.

Floats are written with Python's shortest round-trip decimal text (at most
17 significant digits), so save -> load reproduces every value bit-exactly.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DatasetFormatError
from .network import Network
from .specs import spec_from_obj, spec_to_obj

CHECKPOINT_VERSION = 1


def checkpoint_to_obj(network: Network, rng_seed: int) -> dict:
    params = {}
    for name, arr in network.parameters().items():
        params[name] = arr.reshape(-1).tolist()
    for name, arr in network.buffers().items():
        params[name] = arr.reshape(-1).tolist()
    return {
        "version": CHECKPOINT_VERSION,
        "arch": [spec_to_obj(layer.spec) for layer in network.layers],
        "input_shape": list(network.input_shape),
        "params": params,
        "rng_seed": rng_seed,
    }


def network_from_checkpoint_obj(obj: dict) -> tuple[Network, int]:
    if not isinstance(obj, dict):
        raise DatasetFormatError("checkpoint must be a JSON object")
    unknown = set(obj) - {"version", "arch", "input_shape", "params", "rng_seed"}
    if unknown:
        raise DatasetFormatError(f"checkpoint has unknown keys {sorted(unknown)}")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {obj.get('version')!r}")
    try:
        specs = [spec_from_obj(o) for o in obj["arch"]]
        network = Network.build(specs, tuple(obj["input_shape"]), seed=obj["rng_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad checkpoint architecture: {exc}") from None
    stored = obj["params"]
    targets = {**network.parameters(), **network.buffers()}
    missing = set(targets) - set(stored)
    extra = set(stored) - set(targets)
    if missing or extra:
        raise DatasetFormatError(
            f"checkpoint parameters do not match architecture"
            f" (missing {sorted(missing)}, unexpected {sorted(extra)})")
    for name, arr in targets.items():
        values = np.asarray(stored[name], dtype=float)
        if values.size != arr.size:
            raise DatasetFormatError(
                f"parameter {name!r} has {values.size} values, expected {arr.size}")
        if not np.all(np.isfinite(values)):
            raise DatasetFormatError(f"parameter {name!r} contains non-finite values")
        arr[...] = values.reshape(arr.shape)
    return network, int(obj["rng_seed"])
