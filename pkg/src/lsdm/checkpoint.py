"""Checkpoint persistence: a JSON index plus a float32 binary payload.

Arrays are stored as little-endian float32 in one blob; the index records
per-array offsets and shapes. Round trips are bit-exact on the stored
float32 values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class CheckpointState:
    config: dict
    arrays: dict[str, np.ndarray]
    step: int = 0
    seed: int = 0


def save_checkpoint(state: CheckpointState, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_name = path.stem + ".bin"
    index = {"version": CHECKPOINT_VERSION, "config": state.config,
             "step": state.step, "seed": state.seed, "blob": blob_name, "arrays": {}}
    chunks = []
    offset = 0
    for name in sorted(state.arrays):
        arr = np.ascontiguousarray(state.arrays[name], dtype="<f4")
        index["arrays"][name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(arr.tobytes())
        offset += arr.size
    (path.parent / blob_name).write_bytes(b"".join(chunks))
    path.write_text(json.dumps(index, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> CheckpointState:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    index = json.loads(path.read_text())
    version = index.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} not supported (expected {CHECKPOINT_VERSION})")
    blob = (path.parent / index["blob"]).read_bytes()
    data = np.frombuffer(blob, dtype="<f4")
    arrays = {}
    total = 0
    for name, meta in index["arrays"].items():
        size = int(np.prod(meta["shape"])) if meta["shape"] else 1
        off = meta["offset"]
        if off + size > data.size:
            raise CheckpointError(f"truncated payload: array {name!r} extends past blob end")
        arrays[name] = data[off:off + size].reshape(meta["shape"]).copy()
        total += size
    if total != data.size:
        raise CheckpointError(f"payload size mismatch: index covers {total} floats, blob has {data.size}")
    return CheckpointState(config=index["config"], arrays=arrays,
                           step=index["step"], seed=index["seed"])


def require_arrays(state: CheckpointState, names: list[str]) -> None:
    missing = [n for n in names if n not in state.arrays]
    if missing:
        raise CheckpointError(f"checkpoint missing named array(s): {missing}")
