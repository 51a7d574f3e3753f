"""Export jobs: detections, classification logits, label conversion.

The division of labor with the engine is strict: this side runs models and
emits raw outputs (no thresholds, no NMS, no softmax); the engine owns all
filtering and normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .backends import ClassifierBackend, DetectorBackend
from .formats import IGNORE_ID, classification_record, detection_record, write_label_raster
from .taxonomy import TaxonomyDocumentError, TaxonomyView

DEFAULT_PROMPT_TEMPLATE = "a photo of a {concept}"


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportJob:
    """One export run: images, taxonomy, model choices, prompt template.

    ``image_id`` is the file stem; detection queries default to every class
    in the taxonomy document, and classification prompts always cover the
    document's whole concept set.
    """

    images: tuple[Path, ...]
    taxonomy: TaxonomyView
    detector_model: str = "mock"
    classifier_model: str = "mock"
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    classes: tuple[str, ...] = ()

    def query_classes(self) -> list[str]:
        names = self.taxonomy.class_names()
        if not self.classes:
            return names
        unknown = set(self.classes) - set(names)
        if unknown:
            raise TaxonomyDocumentError(f"unknown query classes {sorted(unknown)}")
        return [n for n in names if n in set(self.classes)]

    def image_by_id(self, image_id: str) -> Path:
        for path in self.images:
            if path.stem == image_id:
                return path
        raise ExportError(f"patch references unknown image {image_id!r}")


def _open_image(path: Path) -> Image.Image:
    try:
        return Image.open(path).convert("RGB")
    except OSError as exc:
        raise ExportError(f"cannot read image {path}: {exc}") from exc


def export_detections(job: ExportJob, backend: DetectorBackend) -> list[str]:
    """One JSONL line per raw detection; bare concept strings as queries."""
    concept_owner = {}
    queries = []
    for class_name in job.query_classes():
        for concept in job.taxonomy.concepts_of(class_name):
            if concept not in concept_owner:
                concept_owner[concept] = class_name
                queries.append(concept)
    lines = []
    for path in job.images:
        image = _open_image(path)
        for det in backend.detect(image, queries):
            lines.append(detection_record(
                image_id=path.stem,
                query_class=concept_owner[det.concept],
                concept=det.concept,
                box=det.box,
                score=max(0.0, min(1.0, det.score)),
            ))
    return lines


def read_patches_manifest(text: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            records.append({
                "patch_id": str(raw["patch_id"]),
                "image_id": str(raw["image_id"]),
                "box": [float(v) for v in raw["box"]],
            })
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ExportError(f"patches manifest line {lineno}: {exc}") from exc
    return records


def export_classifications(
    job: ExportJob, manifest: Sequence[dict], backend: ClassifierBackend
) -> list[str]:
    """One JSONL line per patch with raw logits over the whole concept set.

    The prompt template is applied to every concept; logits are emitted
    unnormalized so the engine's softmax is the single normalization point.
    """
    pairs = job.taxonomy.all_concepts()
    prompts = [job.prompt_template.format(concept=concept) for _, concept in pairs]
    lines = []
    cache: dict[str, Image.Image] = {}
    for record in manifest:
        image_id = record["image_id"]
        if image_id not in cache:
            cache[image_id] = _open_image(job.image_by_id(image_id))
        image = cache[image_id]
        x0, y0, x1, y1 = record["box"]
        x0 = max(0, int(x0)); y0 = max(0, int(y0))
        x1 = min(image.size[0], int(np.ceil(x1))); y1 = min(image.size[1], int(np.ceil(y1)))
        if x1 <= x0 or y1 <= y0:
            raise ExportError(f"patch {record['patch_id']!r} has an empty crop")
        crop = image.crop((x0, y0, x1, y1))
        values = backend.logits(crop, prompts)
        logits = {concept: float(v) for (_, concept), v in zip(pairs, values)}
        lines.append(classification_record(record["patch_id"], logits))
    return lines


def convert_dataset_labels(
    label_images: Iterable[Path],
    taxonomy: TaxonomyView,
    table: dict[int, int | None],
    out_dir: Path,
) -> list[Path]:
    """Convert dataset label images to engine rasters through an id table.

    ``table`` maps old ids to new ids; None sends a class to the ignore
    value; the ignore value itself always passes through. Any other
    uncovered id in an image is an error.
    """
    lut = np.full(256, -1, dtype=np.int32)
    lut[IGNORE_ID] = IGNORE_ID
    for old, new in table.items():
        lut[int(old)] = IGNORE_ID if new is None else int(new)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in label_images:
        try:
            image = Image.open(path)
        except OSError as exc:
            raise ExportError(f"cannot read label image {path}: {exc}") from exc
        labels = np.asarray(image.convert("P") if image.mode == "P" else image.convert("L"))
        mapped = lut[labels]
        if (mapped < 0).any():
            missing = sorted(np.unique(labels[(mapped < 0)]))
            raise ExportError(f"{path.name}: ids {missing} not covered by the table")
        out_path = out_dir / f"{path.stem}.csil"
        out_path.write_bytes(write_label_raster(mapped.astype(np.uint8)))
        written.append(out_path)
    return written


def load_conversion_table(text: str, taxonomy: TaxonomyView) -> dict[int, int | None]:
    """Parse ``{"old-name": "new-name" | null}`` into an id table."""
    raw = json.loads(text)
    table: dict[int, int | None] = {}
    for old_name, new_name in raw.items():
        old = taxonomy.id_of(old_name)
        table[old] = None if new_name is None else taxonomy.id_of(new_name)
    return table
