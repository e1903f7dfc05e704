"""HBDS dataset container.

Layout (little-endian):
    b"HBDS" | u16 version | u32 manifest length | manifest (canonical JSON, UTF-8)
    then one record per sample:
    u32 realization | u32 copy | f32 input[rows*N_T*3] | u32 label  (selection)
                                                       | f64 target[2*N_T] (precoder)
"""

from __future__ import annotations

import json
import logging
import struct

import numpy as np

from hblab_app.config.schemas import DatasetManifest
from hblab_app.core.dataset import Dataset
from hblab_app.core.errors import ConfigError, FormatError
from hblab_app.services.artifact_io import write_artifact

logger = logging.getLogger(__name__)

MAGIC = b"HBDS"
VERSION = 1
_HEADER = struct.Struct("<4sHI")


def record_dtype(manifest: DatasetManifest) -> np.dtype:
    fields = [("n", "<u4"), ("l", "<u4"), ("x", "<f4", tuple(manifest.input_shape))]
    if manifest.task == "selection":
        fields.append(("y", "<u4"))
    else:
        fields.append(("y", "<f8", (manifest.output_dim,)))
    return np.dtype(fields)


def encode(dataset: Dataset) -> bytes:
    manifest = dataset.manifest
    if len(dataset) != manifest.num_samples:
        raise ConfigError(f"dataset holds {len(dataset)} samples, manifest says {manifest.num_samples}")
    text = manifest.canonical_json().encode("utf-8")
    records = np.empty(len(dataset), dtype=record_dtype(manifest))
    records["n"] = dataset.realization
    records["l"] = dataset.copy
    records["x"] = dataset.inputs
    records["y"] = dataset.labels if manifest.task == "selection" else dataset.targets
    return _HEADER.pack(MAGIC, VERSION, len(text)) + text + records.tobytes()


def _read_header(blob: bytes, source: str) -> tuple[DatasetManifest, int]:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, length = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{source}: not an HBDS file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported HBDS version {version}")
    end = _HEADER.size + length
    if len(blob) < end:
        raise FormatError(f"{source}: truncated manifest")
    try:
        manifest = DatasetManifest.from_json(blob[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, ConfigError, TypeError) as exc:
        raise FormatError(f"{source}: unreadable manifest: {exc}") from exc
    return manifest, end


def decode(blob: bytes, source: str = "<bytes>") -> Dataset:
    manifest, offset = _read_header(blob, source)
    dtype = record_dtype(manifest)
    payload = len(blob) - offset
    if payload != manifest.num_samples * dtype.itemsize:
        raise FormatError(
            f"{source}: payload is {payload} bytes, manifest needs {manifest.num_samples} x {dtype.itemsize}"
        )
    records = np.frombuffer(blob, dtype=dtype, offset=offset)
    selection = manifest.task == "selection"
    return Dataset(
        manifest=manifest,
        inputs=records["x"].astype(np.float32),
        realization=records["n"].astype(np.uint32),
        copy=records["l"].astype(np.uint32),
        labels=records["y"].astype(np.uint32) if selection else None,
        targets=None if selection else records["y"].astype(np.float64),
    )


def save(dataset: Dataset, path: str) -> str:
    blob = encode(dataset)
    write_artifact(path, lambda fh: fh.write(blob))
    logger.info("saved %s dataset (%d samples) to %s", dataset.task, len(dataset), path)
    return path


def load(path: str) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    return decode(blob, source=str(path))


def read_manifest(path: str) -> DatasetManifest:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) == _HEADER.size:
            _, _, length = _HEADER.unpack(head)
            head += f.read(length)
    manifest, _ = _read_header(head, str(path))
    return manifest


def manifest_dump(manifest: DatasetManifest) -> str:
    """Human-readable canonical form: sorted keys, two-space indent."""
    return json.dumps(json.loads(manifest.canonical_json()), sort_keys=True, indent=2) + "\n"
