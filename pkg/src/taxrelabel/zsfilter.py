"""Zero-shot classification filtering of patches and the map-presence precheck.

A patch survives when the classifier's predicted class (softmax over the
run's whole concept set, class probability = best of its concepts) matches
the detection's query class at or above the class threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detect import Patch, WireFormatError
from .raster import class_histogram
from .taxonomy import RelabelMap, Taxonomy

DEFAULT_CLASSIFICATION_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConceptScores:
    """Raw similarity logits over the queried concept set for one patch."""

    patch_id: str
    logits: Mapping[str, float]

    def __post_init__(self) -> None:
        logits = dict(self.logits)
        if not logits:
            raise ValueError(f"patch {self.patch_id}: empty concept logits")
        object.__setattr__(self, "logits", logits)


@dataclass(frozen=True)
class ClassifierThresholds:
    """Per-class probability thresholds for accepting a classified patch."""

    per_class: Mapping[int, float] | None = None
    default: float = DEFAULT_CLASSIFICATION_THRESHOLD

    def __post_init__(self) -> None:
        per_class = dict(self.per_class or {})
        for cid, value in per_class.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"threshold {value} for class {cid} outside [0, 1]")
        if not (0.0 <= self.default <= 1.0):
            raise ValueError(f"default threshold {self.default} outside [0, 1]")
        object.__setattr__(self, "per_class", per_class)

    def threshold_for(self, class_id: int) -> float:
        return self.per_class.get(class_id, self.default)


@dataclass(frozen=True)
class PatchVerdict:
    accepted: bool
    predicted_class: int
    probability: float


def softmax(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax; rejects empty or non-finite input."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("softmax of empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax input must be finite")
    shifted = np.exp(arr - arr.max())
    return shifted / shifted.sum()


def build_concept_index(taxonomy: Taxonomy, class_ids: Iterable[int]) -> list[tuple[int, str]]:
    """Canonical (class_id, concept) ordering for a set of query classes.

    Classes follow taxonomy declaration order; concepts keep their per-class
    order. This ordering is the deterministic tie-break for argmax.
    """
    wanted = set(class_ids)
    index = []
    for cls in taxonomy.classes:
        if cls.id in wanted:
            for concept in cls.concepts:
                index.append((cls.id, concept))
    return index


def classify_patch(
    scores: ConceptScores,
    query_class: int,
    taxonomy: Taxonomy,
    thresholds: ClassifierThresholds,
) -> PatchVerdict:
    """Decide whether a patch's classification confirms its detection.

    Softmax runs over all scored concepts; a class's probability is the max
    over its concepts; argmax ties break by canonical concept order. The
    patch is accepted iff the predicted class equals ``query_class`` and its
    probability is >= the query class's threshold (inclusive).
    """
    concept_owners: dict[str, list[int]] = {}
    for cls in taxonomy.classes:
        for concept in cls.concepts:
            concept_owners.setdefault(concept, []).append(cls.id)
    for concept in scores.logits:
        if concept not in concept_owners:
            raise ValueError(f"concept {concept!r} not attributable to any class in {taxonomy.name!r}")

    # canonical order over the scored concepts: taxonomy class order, then concept order
    ordered: list[tuple[int, str]] = []
    seen = set()
    for cls in taxonomy.classes:
        for concept in cls.concepts:
            if concept in scores.logits and concept not in seen:
                ordered.append((cls.id, concept))
                seen.add(concept)

    probs = softmax([scores.logits[c] for _, c in ordered])
    best: dict[int, tuple[float, int]] = {}  # class -> (probability, first index achieving it)
    for idx, ((_, concept), p) in enumerate(zip(ordered, probs)):
        for owner in concept_owners[concept]:
            if owner not in best or p > best[owner][0]:
                best[owner] = (float(p), idx)
    class_rank = {cls.id: i for i, cls in enumerate(taxonomy.classes)}
    predicted = min(best, key=lambda cid: (-best[cid][0], best[cid][1], class_rank[cid]))
    probability = best[predicted][0]
    accepted = predicted == query_class and probability >= thresholds.threshold_for(query_class)
    return PatchVerdict(accepted=accepted, predicted_class=predicted, probability=probability)


def precheck_contains_from(patch: Patch, relabel_map: RelabelMap) -> bool:
    """True iff the cropped pseudo-label holds any pixel of any map from-class.

    Running this before classification skips patches that could not change
    anything, saving classifier calls.
    """
    if not relabel_map.entries:
        return False
    histogram = class_histogram(patch.cropped_label)
    return any(from_id in histogram for from_id in relabel_map.from_ids)


# ---------------------------------------------------------------------------
# JSONL wire format


def classifications_to_jsonl(scores: Iterable[ConceptScores]) -> str:
    """One LF-terminated JSON object per patch with its raw concept logits."""
    lines = []
    for record in scores:
        lines.append(json.dumps({"patch_id": record.patch_id, "logits": dict(record.logits)}))
    return "".join(line + "\n" for line in lines)


def classifications_from_jsonl(text: str) -> list[ConceptScores]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            logits = {str(k): float(v) for k, v in raw["logits"].items()}
            records.append(ConceptScores(patch_id=str(raw["patch_id"]), logits=logits))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise WireFormatError(f"classifications line {lineno}: {exc}") from exc
    return records
