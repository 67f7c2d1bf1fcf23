"""Self-describing binary checkpoints: named float64 arrays + model config.

Layout:

    magic        b"EVCK1\\n"
    header_len   little-endian uint64
    header       UTF-8 JSON: model config, training step, RNG state,
                 array table [{name, shape, offset}]
    payload      concatenated little-endian float64 array data

Loading a saved checkpoint reproduces every array bitwise; all writes go
through a temp-file rename so partially written files never exist under
the final name.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..model import ModelConfig, NowcastModel

MAGIC = b"EVCK1\n"


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    model_config: ModelConfig
    step: int
    rng_state: dict | None = None

    def build_model(self) -> NowcastModel:
        model = NowcastModel(self.model_config, seed=0)
        model.load_state_arrays(self.arrays)
        return model


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(path, arrays: dict[str, np.ndarray], model_config: ModelConfig,
                    step: int = 0, rng_state: dict | None = None) -> None:
    table = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        table.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload += arr.tobytes()
    header = json.dumps({
        "model_config": dataclasses.asdict(model_config),
        "step": step,
        "rng_state": rng_state,
        "arrays": table,
    }, sort_keys=True).encode("utf-8")
    blob = MAGIC + struct.pack("<Q", len(header)) + header + bytes(payload)
    atomic_write_bytes(path, blob)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    if len(blob) < offset + 8:
        raise CheckpointError(f"{path} is truncated before the header length")
    (header_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    payload = blob[offset + header_len:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(payload):
            raise CheckpointError(f"{path}: array {entry['name']!r} overruns the payload")
        arrays[entry["name"]] = np.frombuffer(
            payload, dtype="<f8", count=count, offset=start
        ).reshape(shape).astype(np.float64)
    try:
        model_config = ModelConfig(**header["model_config"])
    except TypeError as exc:
        raise CheckpointError(f"{path} carries an invalid model config: {exc}") from exc
    return Checkpoint(
        arrays=arrays,
        model_config=model_config,
        step=int(header["step"]),
        rng_state=header.get("rng_state"),
    )
