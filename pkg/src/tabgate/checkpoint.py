"""Checkpoint I/O: a JSON manifest plus one little-endian float64 blob.

Layout inside a checkpoint directory:
  manifest.json  {"version": "1", "entries": [{"path", "shape", "offset"}, ...]}
  params.bin     concatenated '<f8' row-major array bytes at the listed offsets
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = "1"
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"


def atomic_write_bytes(path: Path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(state: dict[str, np.ndarray], directory) -> Path:
    directory = Path(directory)
    entries = []
    chunks = []
    offset = 0
    for path, arr in state.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"path": path, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"version": FORMAT_VERSION, "entries": entries}
    atomic_write_bytes(directory / BLOB_NAME, b"".join(chunks))
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=1, sort_keys=True))
    return directory


def load_checkpoint(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')!r}")
    blob = (directory / BLOB_NAME).read_bytes()
    state = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        state[entry["path"]] = arr.reshape(shape).astype(np.float64)
    return state
