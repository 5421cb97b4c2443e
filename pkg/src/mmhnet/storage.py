"""Manifest + raw-array persistence, shared by checkpoints and episodes.

A saved bundle is a directory with two files:

  manifest.txt  one line per array: ``name<TAB>d0,d1,...<TAB>byte_offset``
  data.bin      all arrays concatenated as little-endian float64

Writes are atomic (write to a temp name, then rename), and a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

MANIFEST = "manifest.txt"
DATA = "data.bin"


def _atomic_write(path: str, payload: bytes):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_arrays(out_dir: str, arrays: dict[str, np.ndarray]):
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    blobs = []
    offset = 0
    for name in arrays:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        shape = ",".join(str(s) for s in a.shape) if a.ndim else "0"
        lines.append(f"{name}\t{shape}\t{offset}")
        raw = a.tobytes()
        blobs.append(raw)
        offset += len(raw)
    _atomic_write(os.path.join(out_dir, DATA), b"".join(blobs))
    _atomic_write(os.path.join(out_dir, MANIFEST), ("\n".join(lines) + "\n").encode())


def load_arrays(in_dir: str) -> dict[str, np.ndarray]:
    with open(os.path.join(in_dir, MANIFEST)) as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    with open(os.path.join(in_dir, DATA), "rb") as f:
        blob = f.read()
    out: dict[str, np.ndarray] = {}
    for ln in lines:
        name, shape_s, off_s = ln.split("\t")
        shape = tuple(int(s) for s in shape_s.split(",")) if shape_s != "0" else ()
        n = int(np.prod(shape)) if shape else 1
        off = int(off_s)
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        out[name] = arr.astype(np.float64)
    return out


def save_text(path: str, text: str):
    _atomic_write(path, text.encode())
