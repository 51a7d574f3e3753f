"""Simulated zero-shot detector and classifier.

With zero noise the detector returns exactly the tight component boxes of
the queried class at score 1.0 and the classifier names each patch's
dominant ground-truth class; the noise knobs degrade them in controlled,
seed-deterministic ways for ablation studies.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from ..detect import Detection, Patch
from ..raster import IGNORE_ID, BBox, connected_components
from ..taxonomy import Taxonomy
from ..zsfilter import ConceptScores
from .world import SceneConfig, SimWorld

# logit levels for the simulated classifier: the answer's first concept is
# boosted far above the clipped noise floor of every other concept
_ANSWER_LOGIT = 6.0
_NOISE_SCALE = 0.5
_NOISE_CLIP = 2.0


@dataclass(frozen=True)
class NoiseConfig:
    """Oracle degradation knobs.

    ``false_positive_rate`` proposes boxes of confusable-class objects under
    the queried class: the rate is the population fraction of partner
    objects that fire, chosen as the most query-like ones by their object
    offset (so the same objects misfire on every visit, like a real
    detector). ``box_jitter_px`` perturbs every box edge by at most that
    many pixels; ``classifier_correct_prob`` is the chance the classifier
    names the dominant class instead of its confusable partner; scores are
    drawn uniformly from ``score_range``.
    """

    box_jitter_px: int = 0
    false_positive_rate: float = 0.0
    classifier_correct_prob: float = 1.0
    score_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.box_jitter_px < 0:
            raise ValueError("box jitter must be >= 0")
        for name in ("false_positive_rate", "classifier_correct_prob"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} {value} outside [0, 1]")
        lo, hi = self.score_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"score range ({lo}, {hi}) invalid")


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from a tuple of integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def simulate_detector(
    world: SimWorld,
    query_class: int,
    image_id: str,
    taxonomy: Taxonomy,
    scene: SceneConfig,
    noise: NoiseConfig,
    seed: int,
) -> list[Detection]:
    """Detections for one query class over one scene, seed-deterministic.

    True positives are the 4-connected components of the class in the
    ground-truth labels; false positives are drawn from components of the
    query class's confusable partners.
    """
    rng = np.random.default_rng(seed)
    concept = taxonomy.class_by_id(query_class).concepts[0]
    dets: list[Detection] = []

    for box in connected_components(world.gt_labels, query_class):
        jittered = _jitter_box(box, rng, noise.box_jitter_px, world.width, world.height)
        dets.append(
            Detection(
                image_id=image_id,
                query_class=query_class,
                concept=concept,
                box=jittered,
                score=_draw_score(rng, noise),
            )
        )
    for partner in scene.confusable_partners(query_class):
        for box in connected_components(world.gt_labels, partner):
            if _fires_false_positive(world, scene, noise, rng, query_class, partner, box):
                jittered = _jitter_box(box, rng, noise.box_jitter_px, world.width, world.height)
                dets.append(
                    Detection(
                        image_id=image_id,
                        query_class=query_class,
                        concept=concept,
                        box=jittered,
                        score=_draw_score(rng, noise),
                    )
                )
    return dets


def _fires_false_positive(
    world: SimWorld,
    scene: SceneConfig,
    noise: NoiseConfig,
    rng: np.random.Generator,
    query_class: int,
    partner: int,
    box: BBox,
) -> bool:
    """Whether a partner-class component triggers a false detection.

    The rate sets the population quantile: components whose mean feature
    leans toward the query prototype by more than the (1 - rate) quantile of
    the object-offset distribution fire, every time. Without object-level
    variation there is no lean to measure, so firing falls back to an
    independent draw per component.
    """
    rate = noise.false_positive_rate
    if rate <= 0.0:
        return False
    if rate >= 1.0:
        return True
    if scene.object_noise == 0.0:
        return bool(rng.uniform() < rate)
    axis = np.asarray(scene.prototypes[query_class]) - np.asarray(scene.prototypes[partner])
    unit = axis / np.linalg.norm(axis)
    crop = world.features[box.y_min:box.y_max, box.x_min:box.x_max]
    mask = world.gt_labels.data[box.y_min:box.y_max, box.x_min:box.x_max] == partner
    if not mask.any():
        return False
    lean = float((crop[mask].mean(axis=0) - np.asarray(scene.prototypes[partner])) @ unit)
    threshold = scene.object_noise * NormalDist().inv_cdf(1.0 - rate)
    return lean > threshold


def simulate_classifier(
    patch: Patch,
    world: SimWorld,
    concept_index: Sequence[tuple[int, str]],
    scene: SceneConfig,
    noise: NoiseConfig,
    seed: int,
) -> ConceptScores:
    """Concept logits for a patch, keyed to the run's concept index.

    With probability ``classifier_correct_prob`` the boosted concept belongs
    to the patch's dominant ground-truth class, otherwise to its confusable
    partner. A dominant class outside the concept index gets no boost at
    all, leaving only the noise floor (the patch then reads as nothing in
    particular).
    """
    rng = np.random.default_rng(seed)
    box = patch.box
    gt_crop = world.gt_labels.data[box.y_min:box.y_max, box.x_min:box.x_max]
    dominant = _dominant_class(gt_crop)

    answer: int | None = dominant
    if rng.uniform() >= noise.classifier_correct_prob:
        partners = scene.confusable_partners(dominant) if dominant is not None else ()
        answer = partners[0] if partners else None
    index_classes = {cid for cid, _ in concept_index}
    if answer is not None and answer not in index_classes:
        answer = None

    logits: dict[str, float] = {}
    boosted = False
    for cid, concept in concept_index:
        value = float(np.clip(rng.normal(0.0, _NOISE_SCALE), -_NOISE_CLIP, _NOISE_CLIP))
        if answer is not None and cid == answer and not boosted:
            value = _ANSWER_LOGIT + abs(float(rng.normal(0.0, 0.1)))
            boosted = True
        logits[concept] = value
    return ConceptScores(patch_id=patch.patch_id, logits=logits)


def _dominant_class(gt_crop: np.ndarray) -> int | None:
    counts = np.bincount(gt_crop.ravel(), minlength=256)
    counts[IGNORE_ID] = 0
    if counts.sum() == 0:
        return None
    return int(counts.argmax())  # argmax takes the lowest id on ties


def _jitter_box(box: BBox, rng: np.random.Generator, jitter: int, width: int, height: int) -> BBox:
    if jitter == 0:
        return box
    offsets = rng.integers(-jitter, jitter + 1, size=4)
    x_min = int(np.clip(box.x_min + offsets[0], 0, width - 1))
    y_min = int(np.clip(box.y_min + offsets[1], 0, height - 1))
    x_max = int(np.clip(box.x_max + offsets[2], x_min + 1, width))
    y_max = int(np.clip(box.y_max + offsets[3], y_min + 1, height))
    return BBox(x_min, y_min, x_max, y_max)


def _draw_score(rng: np.random.Generator, noise: NoiseConfig) -> float:
    lo, hi = noise.score_range
    if lo == hi:
        return lo
    return float(rng.uniform(lo, hi))
