"""Checkpoint I/O: a human-readable manifest plus a float64 blob.

The manifest is line-oriented ``key value`` text describing the ansatz
(cell kind, sizes, curvature, flags), the run (seed, epoch) and one
``tensor <name> <shape> <manifold>`` line per parameter in storage order.
``best.ckpt`` holds the little-endian 64-bit floats of every tensor
concatenated in exactly that order.
"""

from __future__ import annotations

import os
from typing import Dict, Tuple

import numpy as np

from .ansatz import AnsatzConfig, ParameterStore

MANIFEST_NAME = "manifest"
BLOB_NAME = "best.ckpt"
FORMAT_TAG = "hypervmc-checkpoint-1"


def save_checkpoint(directory: str, config: AnsatzConfig, store: ParameterStore,
                    meta: Dict[str, object]) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = [f"format {FORMAT_TAG}"]
    lines.append(f"cell {config.cell}")
    lines.append(f"d_h {config.d_h}")
    lines.append(f"d_v {config.d_v}")
    lines.append(f"n_sites {config.n_sites}")
    lines.append(f"n_x {config.n_x or 0}")
    lines.append(f"n_y {config.n_y or 0}")
    lines.append(f"complex_output {int(config.complex_output)}")
    lines.append(f"curvature {config.curvature!r}")
    lines.append(f"marshall_sign {int(config.marshall_sign)}")
    for key in ("seed", "epoch"):
        lines.append(f"{key} {meta.get(key, 0)}")
    for name in store.order:
        shape = "x".join(str(s) for s in store.tensors[name].shape)
        lines.append(f"tensor {name} {shape} {store.manifolds[name]}")
    with open(os.path.join(directory, MANIFEST_NAME), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    blob = store.to_flat().astype("<f8")
    with open(os.path.join(directory, BLOB_NAME), "wb") as fh:
        fh.write(blob.tobytes())


def load_checkpoint(directory: str) -> Tuple[AnsatzConfig, ParameterStore, Dict[str, object]]:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    blob_path = os.path.join(directory, BLOB_NAME)
    fields: Dict[str, str] = {}
    tensor_lines = []
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, rest = line.partition(" ")
            if key == "tensor":
                tensor_lines.append(rest.split())
            else:
                fields[key] = rest
    if fields.get("format") != FORMAT_TAG:
        raise ValueError(f"unrecognized checkpoint format {fields.get('format')!r}")

    config = AnsatzConfig(
        cell=fields["cell"],
        d_h=int(fields["d_h"]),
        n_sites=int(fields["n_sites"]),
        n_x=int(fields["n_x"]) or None,
        n_y=int(fields["n_y"]) or None,
        complex_output=bool(int(fields["complex_output"])),
        curvature=float(fields["curvature"]),
        marshall_sign=bool(int(fields["marshall_sign"])),
        d_v=int(fields["d_v"]),
    )
    store = ParameterStore.initialize(config, seed=0)
    expected = [(name, store.tensors[name].shape, store.manifolds[name]) for name in store.order]
    declared = [
        (name, tuple(int(s) for s in shape.split("x")), manifold)
        for name, shape, manifold in tensor_lines
    ]
    if expected != declared:
        raise ValueError("manifest tensor table does not match the declared ansatz")

    blob = np.frombuffer(open(blob_path, "rb").read(), dtype="<f8")
    if blob.size != store.n_parameters:
        raise ValueError(
            f"blob holds {blob.size} floats, manifest declares {store.n_parameters}")
    store.load_flat(np.asarray(blob, dtype=np.float64))
    meta = {
        "seed": int(fields.get("seed", 0)),
        "epoch": int(fields.get("epoch", 0)),
    }
    return config, store, meta
