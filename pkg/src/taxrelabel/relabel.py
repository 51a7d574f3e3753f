"""Schedule-gated relabeling of pseudo-labels: extract, filter, relabel, paste.

``apply_csi`` is the per-image pipeline step. Before the relabel start step
it is the identity. From that step on it thresholds and deduplicates the
image's detections, crops patches from the pseudo-label, prechecks them for
relabelable pixels, confirms them with the zero-shot classifier, rewrites
map-from pixels to the detected class, and pastes the patches back in
descending detection-score order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .detect import (
    Detection,
    DetectorThresholds,
    Patch,
    extract_patches,
    filter_by_score,
    nms,
)
from .raster import ConfidenceRaster, LabelRaster
from .taxonomy import RelabelMap, Taxonomy
from .zsfilter import ClassifierThresholds, ConceptScores, classify_patch, precheck_contains_from

DEFAULT_RELABEL_CONFIDENCE = 1.0

ScoreSource = Union[Mapping[str, ConceptScores], Callable[[Patch], ConceptScores]]


class ScoreLookupError(KeyError):
    """A surviving patch has no classification record (data mismatch)."""


@dataclass(frozen=True)
class RelabelSchedule:
    """Step schedule: when map collection and relabeling begin."""

    relabel_start_step: int = 12000
    collect_start_step: int = 8000
    total_steps: int = 40000

    def __post_init__(self) -> None:
        if not (0 <= self.collect_start_step <= self.relabel_start_step <= self.total_steps):
            raise ValueError(
                f"schedule must satisfy 0 <= collect ({self.collect_start_step}) <= "
                f"relabel ({self.relabel_start_step}) <= total ({self.total_steps})"
            )

    def in_collection_window(self, step: int) -> bool:
        return self.collect_start_step <= step < self.relabel_start_step

    def in_relabel_phase(self, step: int) -> bool:
        return step >= self.relabel_start_step


@dataclass(frozen=True)
class PipelineThresholds:
    """Detector and classifier thresholds used by one relabeling run."""

    detector: DetectorThresholds = field(default_factory=DetectorThresholds)
    classifier: ClassifierThresholds = field(default_factory=ClassifierThresholds)


@dataclass
class RelabelReport:
    """Counters for one ``apply_csi`` call; applied = extracted - excluded."""

    patches_extracted: int = 0
    patches_prechecked_out: int = 0
    patches_filtered_out: int = 0
    patches_applied: int = 0
    pixels_relabeled_per_class: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._check()

    def _check(self) -> None:
        counters = (
            self.patches_extracted,
            self.patches_prechecked_out,
            self.patches_filtered_out,
            self.patches_applied,
        )
        if any(c < 0 for c in counters):
            raise ValueError("report counters must be non-negative")
        expected = self.patches_extracted - self.patches_prechecked_out - self.patches_filtered_out
        if self.patches_applied != expected:
            raise ValueError(
                f"applied ({self.patches_applied}) != extracted - excluded ({expected})"
            )

    def merged(self, other: "RelabelReport") -> "RelabelReport":
        pixels = dict(self.pixels_relabeled_per_class)
        for cid, n in other.pixels_relabeled_per_class.items():
            pixels[cid] = pixels.get(cid, 0) + n
        return RelabelReport(
            patches_extracted=self.patches_extracted + other.patches_extracted,
            patches_prechecked_out=self.patches_prechecked_out + other.patches_prechecked_out,
            patches_filtered_out=self.patches_filtered_out + other.patches_filtered_out,
            patches_applied=self.patches_applied + other.patches_applied,
            pixels_relabeled_per_class=pixels,
        )

    def to_dict(self) -> dict:
        return {
            "patches_extracted": self.patches_extracted,
            "patches_prechecked_out": self.patches_prechecked_out,
            "patches_filtered_out": self.patches_filtered_out,
            "patches_applied": self.patches_applied,
            "pixels_relabeled_per_class": {
                str(k): v for k, v in sorted(self.pixels_relabeled_per_class.items())
            },
        }

    def summary_lines(self) -> list[str]:
        lines = [
            f"patches extracted:      {self.patches_extracted}",
            f"patches prechecked out: {self.patches_prechecked_out}",
            f"patches filtered out:   {self.patches_filtered_out}",
            f"patches applied:        {self.patches_applied}",
        ]
        for cid, n in sorted(self.pixels_relabeled_per_class.items()):
            lines.append(f"pixels relabeled to class {cid}: {n}")
        return lines


def relabel_patch(patch: Patch, relabel_map: RelabelMap) -> Patch:
    """Rewrite pixels of the query class's map-from ids to the query class.

    Only entries whose to-id equals the patch's detected class apply; all
    other pixels pass through untouched.
    """
    query = patch.detection.query_class
    entries = relabel_map.entries_for_target(query)
    if not entries:
        raise ValueError(f"query class {query} is not a to-id of any map entry")
    from_ids = [e.from_id for e in entries]
    data = patch.cropped_label.data.copy()
    data[np.isin(data, from_ids)] = query
    return Patch(
        patch_id=patch.patch_id,
        detection=patch.detection,
        cropped_label=LabelRaster(data),
        image_crop_ref=patch.image_crop_ref,
    )


def apply_csi(
    step: int,
    pseudo_label: LabelRaster,
    confidence: ConfidenceRaster,
    dets: list[Detection],
    scores_source: ScoreSource | None,
    relabel_map: RelabelMap,
    taxonomy: Taxonomy,
    thresholds: PipelineThresholds,
    schedule: RelabelSchedule,
    relabel_confidence: float = DEFAULT_RELABEL_CONFIDENCE,
) -> tuple[LabelRaster, ConfidenceRaster, RelabelReport]:
    """Run one image through the relabeling pipeline at a training step.

    Returns the inputs unchanged (with an all-zero report) before the
    relabel start step. ``scores_source`` maps patch ids to classification
    records or computes them per patch; passing None disables the classifier
    filter (every prechecked patch is applied), which models running on
    detector output alone. A missing record for a surviving patch raises
    :class:`ScoreLookupError`.

    Accepted patches are relabeled against the whole-image pseudo-label
    crops taken *before* any paste, then pasted in descending detection
    score order: where boxes overlap, the last (lowest-score) paste wins.
    Relabeled pixels get ``relabel_confidence``; every other pasted pixel
    carries its original confidence value back.
    """
    if (pseudo_label.width, pseudo_label.height) != (confidence.width, confidence.height):
        raise ValueError("pseudo-label and confidence raster shapes differ")
    report = RelabelReport()
    if not schedule.in_relabel_phase(step):
        return pseudo_label, confidence, report

    image_ids = {d.image_id for d in dets}
    if len(image_ids) > 1:
        raise ValueError(f"detections span multiple images: {sorted(image_ids)}")
    image_id = image_ids.pop() if image_ids else ""

    kept = filter_by_score(dets, thresholds.detector)
    kept = nms(kept, thresholds.detector.nms_iou)
    patches = extract_patches(pseudo_label, kept, image_id)
    report.patches_extracted = len(patches)

    surviving: list[Patch] = []
    for patch in patches:
        if not precheck_contains_from(patch, relabel_map):
            report.patches_prechecked_out += 1
            continue
        if scores_source is not None:
            scores = _lookup_scores(scores_source, patch)
            verdict = classify_patch(
                scores, patch.detection.query_class, taxonomy, thresholds.classifier
            )
            if not verdict.accepted:
                report.patches_filtered_out += 1
                continue
        surviving.append(patch)
    report.patches_applied = len(surviving)
    report._check()

    out_label = pseudo_label.data.copy()
    out_conf = confidence.data.copy()
    for patch in sorted(surviving, key=lambda p: -p.detection.score):
        box = patch.box
        before = patch.cropped_label.data
        after = relabel_patch(patch, relabel_map).cropped_label.data
        changed = before != after
        conf_crop = confidence.data[box.y_min:box.y_max, box.x_min:box.x_max].copy()
        conf_crop[changed] = np.float32(relabel_confidence)
        out_label[box.y_min:box.y_max, box.x_min:box.x_max] = after
        out_conf[box.y_min:box.y_max, box.x_min:box.x_max] = conf_crop

    for to_id in sorted(relabel_map.to_ids):
        from_ids = [e.from_id for e in relabel_map.entries_for_target(to_id)]
        gained = int(np.count_nonzero(np.isin(pseudo_label.data, from_ids) & (out_label == to_id)))
        if gained:
            report.pixels_relabeled_per_class[to_id] = gained

    return LabelRaster(out_label), ConfidenceRaster(out_conf), report


def _lookup_scores(scores_source: ScoreSource, patch: Patch) -> ConceptScores:
    if callable(scores_source):
        return scores_source(patch)
    try:
        return scores_source[patch.patch_id]
    except KeyError:
        raise ScoreLookupError(
            f"no classification record for surviving patch {patch.patch_id!r}"
        ) from None
