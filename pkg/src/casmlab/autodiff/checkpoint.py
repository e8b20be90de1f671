"""Checkpoint files: a JSON header line followed by a raw float64 blob.

Layout::

    <UTF-8 JSON header, one line, terminated by a newline>
    <little-endian float64 values of every tensor, concatenated>

The header is ``{"format_version": 1, "tensors": [{"name", "shape",
"byte_offset"}], "meta": {...}}`` where ``byte_offset`` is relative to the
start of the blob and follows from the shapes in order.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import OrderedDict

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, arrays, meta=None) -> None:
    """Atomically write ``{name: array}`` (and optional JSON ``meta``) to ``path``."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "byte_offset": offset})
        offset += a.nbytes
        blobs.append(a.tobytes())
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "tensors": entries, "meta": meta or {}}, sort_keys=True
    ).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + b"\n")
            for b in blobs:
                fh.write(b)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Return ``(OrderedDict name -> array, meta)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"\n")
    if end < 0:
        raise OSError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
    except ValueError as exc:
        raise OSError(f"{path}: unreadable checkpoint header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise OSError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    blob = raw[end + 1:]
    arrays = OrderedDict()
    expected = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if entry["byte_offset"] != expected:
            raise OSError(f"{path}: offset mismatch for {entry['name']}")
        chunk = blob[expected:expected + 8 * count]
        if len(chunk) != 8 * count:
            raise OSError(f"{path}: truncated data for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        expected += 8 * count
    return arrays, header.get("meta", {})
