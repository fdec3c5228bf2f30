"""Writers for the fusion engine's on-disk interfaces.

Feature file, little-endian: magic "HCMF" | u32 version=1 | u8 modality
{0=text,1=audio,2=video} | u32 T | u32 D | T*D float32 row-major.
Manifest: JSON {version, dims:{text,audio,video}, clips:[...]} with
label objects omitted (extraction produces unlabeled clips).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"HCMF"
FEATURE_VERSION = 1
MANIFEST_VERSION = 1
MODALITY_CODES = {"text": 0, "audio": 1, "video": 2}

_HEADER = struct.Struct("<4sIBII")


def write_feature_file(path, modality: str, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"feature matrix must be (T >= 1, D), got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("feature matrix contains non-finite entries")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, MODALITY_CODES[modality],
                              data.shape[0], data.shape[1]))
        fh.write(data.tobytes())


def manifest_json(dims: dict, clips: list) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "dims": {k: int(v) for k, v in dims.items()},
        "clips": clips,
    }


def write_manifest(path, dims: dict, clips: list) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_json(dims, clips), indent=2, sort_keys=True))
    return path
