"""Detection records, per-class score thresholding, greedy NMS, and patch
extraction from pseudo-labels.

Detections travel as JSON Lines: one object per line with fields image_id,
query_class (class *name*), concept, box ([x_min, y_min, x_max, y_max] in
pixels), and score. Parsing resolves names against the target taxonomy and
normalizes fractional coordinates to the covering integer box.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from .raster import BBox, LabelRaster, crop
from .taxonomy import Taxonomy

DEFAULT_DETECTION_THRESHOLD = 0.1
DEFAULT_NMS_IOU = 0.3


class WireFormatError(ValueError):
    """Raised when a JSONL record is malformed or names an unknown class."""


@dataclass(frozen=True)
class Detection:
    """One scored box proposed by a zero-shot detector for a query class."""

    image_id: str
    query_class: int
    concept: str
    box: BBox
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Patch:
    """A detection paired with its cropped pseudo-label and image crop reference.

    ``image_crop_ref`` holds the (image_id, box) actually cropped, i.e. the
    detection box clipped to the raster extent.
    """

    patch_id: str
    detection: Detection
    cropped_label: LabelRaster
    image_crop_ref: tuple[str, BBox]

    def __post_init__(self) -> None:
        box = self.image_crop_ref[1]
        if (self.cropped_label.height, self.cropped_label.width) != (box.height, box.width):
            raise ValueError(
                f"patch {self.patch_id}: cropped label shape "
                f"{self.cropped_label.width}x{self.cropped_label.height} != box {box.as_tuple()}"
            )

    @property
    def box(self) -> BBox:
        return self.image_crop_ref[1]


@dataclass(frozen=True)
class DetectorThresholds:
    """Per-class detection score thresholds plus the NMS IoU threshold."""

    per_class: Mapping[int, float] | None = None
    nms_iou: float = DEFAULT_NMS_IOU
    default: float = DEFAULT_DETECTION_THRESHOLD

    def __post_init__(self) -> None:
        per_class = dict(self.per_class or {})
        for cid, value in per_class.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"threshold {value} for class {cid} outside [0, 1]")
        if not (0.0 <= self.nms_iou <= 1.0):
            raise ValueError(f"nms iou {self.nms_iou} outside [0, 1]")
        if not (0.0 <= self.default <= 1.0):
            raise ValueError(f"default threshold {self.default} outside [0, 1]")
        object.__setattr__(self, "per_class", per_class)

    def threshold_for(self, class_id: int) -> float:
        return self.per_class.get(class_id, self.default)


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def filter_by_score(dets: Iterable[Detection], thresholds: DetectorThresholds) -> list[Detection]:
    """Keep detections scoring at or above their class threshold; order preserved."""
    return [d for d in dets if d.score >= thresholds.threshold_for(d.query_class)]


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-class non-maximum suppression.

    Within each query class, boxes are visited in descending score order
    (ties by input order) and kept iff their IoU with every already-kept box
    of that class is <= ``iou_threshold``. Output preserves input order.
    """
    keep = [False] * len(dets)
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, det in enumerate(dets):
        by_class[det.query_class].append(i)
    for indices in by_class.values():
        ranked = sorted(indices, key=lambda i: -dets[i].score)
        kept_boxes: list[BBox] = []
        for i in ranked:
            if all(box_iou(dets[i].box, kb) <= iou_threshold for kb in kept_boxes):
                keep[i] = True
                kept_boxes.append(dets[i].box)
    return [d for i, d in enumerate(dets) if keep[i]]


def extract_patches(
    pseudo_label: LabelRaster, dets: Iterable[Detection], image_id: str
) -> list[Patch]:
    """Crop the pseudo-label under each detection box.

    Boxes are clipped to the raster; detections empty after clipping are
    dropped. Patch ids are ``image_id + "#" + ordinal`` over the surviving
    sequence.
    """
    patches: list[Patch] = []
    for det in dets:
        clipped = det.box.clip(pseudo_label.width, pseudo_label.height)
        if clipped is None:
            continue
        patches.append(
            Patch(
                patch_id=f"{image_id}#{len(patches)}",
                detection=det,
                cropped_label=crop(pseudo_label, clipped),
                image_crop_ref=(image_id, clipped),
            )
        )
    return patches


# ---------------------------------------------------------------------------
# JSONL wire format


def detections_to_jsonl(dets: Iterable[Detection], taxonomy: Taxonomy) -> str:
    """One LF-terminated JSON object per detection; class by name."""
    lines = []
    for det in dets:
        record = {
            "image_id": det.image_id,
            "query_class": taxonomy.class_by_id(det.query_class).name,
            "concept": det.concept,
            "box": list(det.box.as_tuple()),
            "score": det.score,
        }
        lines.append(json.dumps(record))
    return "".join(line + "\n" for line in lines)


def detections_from_jsonl(text: str, taxonomy: Taxonomy) -> list[Detection]:
    """Parse the detections wire format; fractional boxes widen to integers."""
    dets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            box = raw["box"]
            det = Detection(
                image_id=str(raw["image_id"]),
                query_class=taxonomy.class_by_name(raw["query_class"]).id,
                concept=str(raw["concept"]),
                box=BBox(
                    math.floor(box[0]), math.floor(box[1]),
                    math.ceil(box[2]), math.ceil(box[3]),
                ),
                score=float(raw["score"]),
            )
        except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise WireFormatError(f"detections line {lineno}: {exc}") from exc
        dets.append(det)
    return dets


def group_by_image(dets: Iterable[Detection]) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = defaultdict(list)
    for det in dets:
        grouped[det.image_id].append(det)
    return dict(grouped)
