"""Auto-configuration of relabeling-map entries from accepted patches.

During the collection window, each accepted patch for an open-taxonomy
class votes for the source class dominating its cropped pseudo-label. At
the end of the window the most-voted candidate sharing the target class's
category becomes that class's map-from entry.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .detect import Patch
from .raster import class_histogram
from .taxonomy import (
    MapEntry,
    MapOrigin,
    RelabelMap,
    Taxonomy,
    ensure_valid_map,
)

logger = logging.getLogger(__name__)

DEFAULT_AREA_FRACTION_THRESHOLD = 0.2


@dataclass(frozen=True)
class AutoMapConfig:
    """Knobs for candidate selection; ties always break to the lowest class id."""

    area_fraction_threshold: float = DEFAULT_AREA_FRACTION_THRESHOLD

    def __post_init__(self) -> None:
        if not (0.0 < self.area_fraction_threshold <= 1.0):
            raise ValueError(
                f"area fraction threshold {self.area_fraction_threshold} outside (0, 1]"
            )


@dataclass
class CandidateCounts:
    """Vote counts per (to-class, from-class) over one collection window."""

    window: tuple[int, int]
    counts: dict[int, dict[int, int]] = field(default_factory=dict)

    @classmethod
    def empty(cls, window: tuple[int, int]) -> "CandidateCounts":
        return cls(window=(int(window[0]), int(window[1])))

    def add(self, to_class: int, from_class: int, amount: int = 1) -> None:
        per_to = self.counts.setdefault(to_class, {})
        per_to[from_class] = per_to.get(from_class, 0) + amount


def collect_candidates(
    patch: Patch, source: Taxonomy, config: AutoMapConfig
) -> tuple[int, int] | None:
    """Vote increment (to-class, from-class) for one accepted patch, or None.

    Only source-taxonomy pixels count; ignore pixels and already-relabeled
    target-only pixels affect neither the fractions nor the outcome. The
    candidate is the most frequent source class whose share of those pixels
    is >= the area fraction threshold (ties to the lowest id).
    """
    histogram = class_histogram(patch.cropped_label)
    source_hist = {cid: n for cid, n in histogram.items() if source.has_id(cid)}
    total = sum(source_hist.values())
    if total == 0:
        return None
    eligible = [
        (cid, n) for cid, n in source_hist.items() if n / total >= config.area_fraction_threshold
    ]
    if not eligible:
        return None
    best_id, _ = min(eligible, key=lambda kv: (-kv[1], kv[0]))
    return (patch.detection.query_class, best_id)


def merge_counts(a: CandidateCounts, b: CandidateCounts) -> CandidateCounts:
    """Pointwise sum of two accumulators over the same window."""
    if a.window != b.window:
        raise ValueError(f"cannot merge counts over windows {a.window} and {b.window}")
    merged = CandidateCounts.empty(a.window)
    for src in (a, b):
        for to_class, per_to in src.counts.items():
            for from_class, n in per_to.items():
                merged.add(to_class, from_class, n)
    return merged


def finalize_map(
    counts: CandidateCounts,
    source: Taxonomy,
    target: Taxonomy,
    predefined: RelabelMap,
) -> RelabelMap:
    """Select one from-entry per counted to-class and merge with the predefined map.

    Candidates must share the to-class's category; a to-class with no
    same-category candidate is skipped with a warning. The merged map must
    validate (a shared from-id between predefined and auto entries is an
    error).
    """
    entries = list(predefined.entries)
    for to_id in sorted(counts.counts):
        to_category = target.class_by_id(to_id).category
        candidates = [
            (from_id, n)
            for from_id, n in counts.counts[to_id].items()
            if source.class_by_id(from_id).category == to_category
        ]
        if not candidates:
            logger.warning(
                "no same-category candidate for class %s (%s); it will not be relabeled",
                to_id,
                target.class_by_id(to_id).name,
            )
            continue
        best_id, _ = min(candidates, key=lambda kv: (-kv[1], kv[0]))
        entries.append(MapEntry(from_id=best_id, to_id=to_id))
    merged = RelabelMap(entries=tuple(entries), origin=MapOrigin.AUTO_CONFIGURED)
    return ensure_valid_map(merged, source, target)


# ---------------------------------------------------------------------------
# checkpoint format


def counts_to_json(counts: CandidateCounts, source: Taxonomy, target: Taxonomy) -> str:
    payload = {
        "window": list(counts.window),
        "counts": {
            target.class_by_id(to_id).name: {
                source.class_by_id(from_id).name: n
                for from_id, n in sorted(counts.counts[to_id].items())
            }
            for to_id in sorted(counts.counts)
        },
    }
    return json.dumps(payload, indent=2)


def counts_from_json(text: str, source: Taxonomy, target: Taxonomy) -> CandidateCounts:
    raw = json.loads(text)
    window = raw["window"]
    counts = CandidateCounts.empty((window[0], window[1]))
    for to_name, per_to in raw["counts"].items():
        to_id = target.class_by_name(to_name).id
        for from_name, n in per_to.items():
            counts.add(to_id, source.class_by_name(from_name).id, int(n))
    return counts
