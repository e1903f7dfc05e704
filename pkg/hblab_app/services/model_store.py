"""HBNN model container.

    b"HBNN" | u16 version | u32 len | layer descriptors (JSON list)
            | u32 len | header (JSON: seed, dtype, metadata)
            | f64 parameters, little-endian, layer order, weights before bias
"""

from __future__ import annotations

import json
import logging
import struct

import numpy as np

from hblab_app.core.errors import ContractError, FormatError
from hblab_app.core.network import Model, layer_descriptor, layer_from_descriptor, param_shapes
from hblab_app.services.artifact_io import write_artifact

logger = logging.getLogger(__name__)

MAGIC = b"HBNN"
VERSION = 1
_HEAD = struct.Struct("<4sH")
_LEN = struct.Struct("<I")


def _json_block(obj) -> bytes:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LEN.pack(len(text)) + text


def encode(model: Model) -> bytes:
    model.check_shapes()
    header = {"seed": int(model.seed), "dtype": model.dtype, "metadata": model.metadata}
    params = [
        np.asarray(group[key], dtype="<f8").ravel()
        for group in model.params
        for key in ("w", "b")
        if key in group
    ]
    flat = np.concatenate(params) if params else np.empty(0, dtype="<f8")
    return (
        _HEAD.pack(MAGIC, VERSION)
        + _json_block([layer_descriptor(layer) for layer in model.spec])
        + _json_block(header)
        + flat.tobytes()
    )


def _take_block(blob: bytes, offset: int, source: str, what: str):
    if len(blob) < offset + _LEN.size:
        raise FormatError(f"{source}: truncated before {what}")
    (length,) = _LEN.unpack_from(blob, offset)
    start, end = offset + _LEN.size, offset + _LEN.size + length
    if len(blob) < end:
        raise FormatError(f"{source}: truncated {what}")
    try:
        return json.loads(blob[start:end].decode("utf-8")), end
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: unreadable {what}: {exc}") from exc


def decode(blob: bytes, source: str = "<bytes>") -> Model:
    if len(blob) < _HEAD.size:
        raise FormatError(f"{source}: truncated header")
    magic, version = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{source}: not an HBNN file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported HBNN version {version}")
    descriptors, offset = _take_block(blob, _HEAD.size, source, "layer descriptors")
    header, offset = _take_block(blob, offset, source, "model header")
    try:
        spec = tuple(layer_from_descriptor(d) for d in descriptors)
        shapes = param_shapes(spec)
        dtype = np.dtype(header["dtype"])
        seed = int(header["seed"])
        metadata = dict(header.get("metadata", {}))
    except (ContractError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{source}: bad model description: {exc}") from exc

    total = sum(int(np.prod(s)) for group in shapes for s in group.values())
    if len(blob) - offset != total * 8:
        raise FormatError(f"{source}: parameter block is {len(blob) - offset} bytes, spec needs {total * 8}")
    flat = np.frombuffer(blob, dtype="<f8", offset=offset)
    params, pos = [], 0
    for group in shapes:
        out = {}
        for key in ("w", "b"):
            if key in group:
                size = int(np.prod(group[key]))
                out[key] = flat[pos:pos + size].reshape(group[key]).astype(dtype)
                pos += size
        params.append(out)
    return Model(spec=spec, params=params, seed=seed, dtype=dtype.name, metadata=metadata)


def save(model: Model, path: str) -> str:
    blob = encode(model)
    write_artifact(path, lambda fh: fh.write(blob))
    logger.info("saved %s network (%d layers) to %s", model.task, len(model.spec), path)
    return path


def load(path: str) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    return decode(blob, source=str(path))
