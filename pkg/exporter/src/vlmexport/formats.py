"""Writers for the engine's wire and file formats.

The exporter owns nothing about these formats; it reproduces them exactly:
detections and classification logits as JSON Lines, label rasters as CSIL
(magic, version 0x01, u32 LE width/height, row-major bytes).
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Mapping

import numpy as np

LABEL_MAGIC = b"CSIL"
FORMAT_VERSION = 1
IGNORE_ID = 255

_HEADER = struct.Struct("<4sBII")


def detection_record(
    image_id: str, query_class: str, concept: str,
    box: tuple[float, float, float, float], score: float,
) -> str:
    return json.dumps({
        "image_id": image_id,
        "query_class": query_class,
        "concept": concept,
        "box": list(box),
        "score": score,
    })


def classification_record(patch_id: str, logits: Mapping[str, float]) -> str:
    return json.dumps({"patch_id": patch_id, "logits": dict(logits)})


def write_jsonl(path, lines: Iterable[str]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")
            count += 1
    return count


def write_label_raster(labels: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.asarray(labels, dtype=np.uint8))
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"label raster must be 2-D and non-empty, got {arr.shape}")
    height, width = arr.shape
    return _HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, width, height) + arr.tobytes()
