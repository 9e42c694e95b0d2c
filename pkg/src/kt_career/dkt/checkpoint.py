"""Flat checkpoint files for trained models.

Layout: one UTF-8 JSON header line (sorted keys, terminated by a single
newline) followed by the raw little-endian float64 bytes of every
parameter array in declaration order. The header records the format
version, array shapes, and the training configuration the model was
produced under, so a file is self-describing and the same model always
serializes to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .model import DktParams

FORMAT_VERSION = 1


def save_checkpoint(path, params: DktParams, config_echo: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "n_skills": params.n_skills,
        "hidden_size": params.hidden_size,
        "shapes": {
            name: list(a.shape)
            for name, a in zip(params.field_names(), params.arrays())
        },
        "config": dict(config_echo or {}),
    }
    blob = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays()
    )
    data = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + blob
    Path(path).write_bytes(data)


def load_checkpoint(path) -> tuple[DktParams, dict]:
    """Read a checkpoint back; returns the parameters and the header dict."""
    raw = Path(path).read_bytes()
    split = raw.find(b"\n")
    if split < 0:
        raise SchemaError(f"{path}: not a checkpoint file (no header line)")
    try:
        header = json.loads(raw[:split].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable checkpoint header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(
            f"{path}: checkpoint format version {version!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    shapes = header.get("shapes")
    if not isinstance(shapes, dict):
        raise SchemaError(f"{path}: checkpoint header lacks array shapes")

    blob = raw[split + 1 :]
    arrays = []
    offset = 0
    for name in DktParams.field_names():
        if name not in shapes:
            raise SchemaError(f"{path}: checkpoint header lacks shape for {name}")
        shape = tuple(int(d) for d in shapes[name])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise SchemaError(
                f"{path}: checkpoint truncated while reading {name} "
                f"(wanted {nbytes} bytes, found {len(chunk)})"
            )
        arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).copy())
        offset += nbytes
    if offset != len(blob):
        raise SchemaError(
            f"{path}: {len(blob) - offset} trailing bytes after parameter data"
        )
    return DktParams(*arrays), header
