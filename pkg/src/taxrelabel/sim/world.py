"""Synthetic scenes: per-pixel feature vectors around class prototypes plus
ground-truth labels, with confusable class pairs placed close in feature
space so a linear per-pixel model genuinely confuses them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from ..raster import LabelRaster


class ScenePlacementError(RuntimeError):
    """Requested objects do not fit in the scene extent."""


@dataclass(frozen=True)
class SceneConfig:
    """Geometry and feature-space layout of generated scenes.

    ``prototypes`` maps every placeable class id (including the background)
    to its feature-space center. Classes named in ``confusable_pairs`` must
    sit within ``confusable_eps`` of each other; that closeness is the
    phenomenon the harness studies.
    """

    prototypes: Mapping[int, tuple[float, ...]]
    background_class: int
    object_classes: tuple[int, ...]
    width: int = 64
    height: int = 64
    objects_per_scene: tuple[int, int] = (6, 8)
    size_range: tuple[int, int] = (6, 13)
    feature_noise: float = 0.12
    object_noise: float = 0.0
    confusable_pairs: tuple[tuple[int, int], ...] = ()
    confusable_eps: float = 1.0
    ensure_each_class: bool = True
    max_place_attempts: int = 200

    def __post_init__(self) -> None:
        protos = {int(cid): np.asarray(vec, dtype=np.float64) for cid, vec in self.prototypes.items()}
        dims = {p.shape for p in protos.values()}
        if len(dims) != 1:
            raise ValueError(f"prototype dimensions disagree: {dims}")
        if any(not np.all(np.isfinite(p)) for p in protos.values()):
            raise ValueError("prototypes must be finite")
        if self.background_class not in protos:
            raise ValueError("background class needs a prototype")
        for cid in self.object_classes:
            if cid not in protos:
                raise ValueError(f"object class {cid} has no prototype")
        for a, b in self.confusable_pairs:
            if a not in protos or b not in protos:
                raise ValueError(f"confusable pair ({a}, {b}) lacks prototypes")
            gap = float(np.linalg.norm(protos[a] - protos[b]))
            if gap > self.confusable_eps:
                raise ValueError(
                    f"classes {a} and {b} declared confusable but {gap:.3f} apart "
                    f"(eps {self.confusable_eps})"
                )
        if self.width < 1 or self.height < 1:
            raise ValueError("scene extent must be positive")
        lo, hi = self.objects_per_scene
        if lo < 0 or hi < lo:
            raise ValueError(f"bad objects_per_scene range ({lo}, {hi})")
        slo, shi = self.size_range
        if slo < 1 or shi < slo:
            raise ValueError(f"bad size_range ({slo}, {shi})")
        if self.feature_noise < 0 or self.object_noise < 0:
            raise ValueError("noise scales must be >= 0")
        object.__setattr__(self, "prototypes", protos)
        object.__setattr__(self, "object_classes", tuple(self.object_classes))
        object.__setattr__(self, "confusable_pairs", tuple(tuple(p) for p in self.confusable_pairs))

    @property
    def feature_dim(self) -> int:
        return next(iter(self.prototypes.values())).shape[0]

    def prototype_matrix(self, num_classes: int) -> np.ndarray:
        """(num_classes, d) matrix of prototypes; zero rows for absent ids."""
        out = np.zeros((num_classes, self.feature_dim))
        for cid, proto in self.prototypes.items():
            out[cid] = proto
        return out

    def confusable_partners(self, class_id: int) -> tuple[int, ...]:
        partners = []
        for a, b in self.confusable_pairs:
            if a == class_id:
                partners.append(b)
            elif b == class_id:
                partners.append(a)
        return tuple(partners)

    def restricted_to(self, object_classes: Sequence[int]) -> "SceneConfig":
        """Same scene layout but placing only the given object classes."""
        return replace(self, object_classes=tuple(object_classes))


@dataclass(frozen=True, eq=False)
class SimWorld:
    """One synthetic scene: target-taxonomy labels plus per-pixel features."""

    gt_labels: LabelRaster
    features: np.ndarray  # (height, width, d) float64
    rng_seed: int

    def __post_init__(self) -> None:
        if self.features.ndim != 3:
            raise ValueError("features must be (height, width, d)")
        if self.features.shape[:2] != self.gt_labels.data.shape:
            raise ValueError("feature grid and label raster shapes differ")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    @property
    def width(self) -> int:
        return self.gt_labels.width

    @property
    def height(self) -> int:
        return self.gt_labels.height

    def flat_features(self) -> np.ndarray:
        return self.features.reshape(-1, self.features.shape[2])


def generate_scene(config: SceneConfig, seed: int) -> SimWorld:
    """Place non-overlapping rectangular objects on the background class.

    Deterministic for a given (config, seed). With ``ensure_each_class`` the
    object plan covers every object class once before sampling extras, so a
    scene exercises its whole label space. Objects keep a one-pixel gap so
    connected components coincide with placed objects.
    """
    rng = np.random.default_rng(seed)
    labels = np.full((config.height, config.width), config.background_class, dtype=np.uint8)
    occupied = np.zeros_like(labels, dtype=bool)
    offsets = np.zeros((config.height, config.width, config.feature_dim))

    lo, hi = config.objects_per_scene
    count = int(rng.integers(lo, hi + 1))
    plan: list[int] = []
    if config.ensure_each_class:
        plan.extend(config.object_classes[:count])
    while len(plan) < count:
        plan.append(int(rng.choice(np.asarray(config.object_classes))))
    order = rng.permutation(len(plan))

    for idx in order:
        cls = plan[idx]
        placed = False
        for _ in range(config.max_place_attempts):
            w = int(rng.integers(config.size_range[0], config.size_range[1] + 1))
            h = int(rng.integers(config.size_range[0], config.size_range[1] + 1))
            if w > config.width or h > config.height:
                continue
            x = int(rng.integers(0, config.width - w + 1))
            y = int(rng.integers(0, config.height - h + 1))
            window = occupied[max(0, y - 1):y + h + 1, max(0, x - 1):x + w + 1]
            if window.any():
                continue
            labels[y:y + h, x:x + w] = cls
            occupied[y:y + h, x:x + w] = True
            # each object gets its own feature offset (a coherent subcluster,
            # the way real object instances vary within a class)
            offsets[y:y + h, x:x + w] = rng.normal(0.0, config.object_noise, config.feature_dim)
            placed = True
            break
        if not placed:
            raise ScenePlacementError(
                f"could not place a {cls}-class object after {config.max_place_attempts} attempts"
            )

    protos = config.prototype_matrix(256)
    features = protos[labels] + offsets + rng.normal(
        0.0, config.feature_noise, size=(config.height, config.width, config.feature_dim)
    )
    return SimWorld(gt_labels=LabelRaster(labels), features=features, rng_seed=int(seed))


def shift_domain(world: SimWorld, shift: np.ndarray) -> SimWorld:
    """Apply a constant feature-space offset (the source-domain gap)."""
    shift = np.asarray(shift, dtype=np.float64)
    return SimWorld(
        gt_labels=world.gt_labels,
        features=world.features + shift,
        rng_seed=world.rng_seed,
    )


def with_labels(world: SimWorld, labels: LabelRaster) -> SimWorld:
    """Same scene with a different label raster (e.g. source-space labels)."""
    return SimWorld(gt_labels=labels, features=world.features, rng_seed=world.rng_seed)
