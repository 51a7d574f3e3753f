"""Teacher-student self-training over synthetic scenes, with and without
schedule-gated pseudo-label relabeling.

Each step draws one source scene (supervised cross-entropy) and one target
scene (confidence-weighted cross-entropy against the teacher's pseudo-label,
optionally relabeled), updates the student by gradient descent, and moves
the teacher toward the student by exponential moving average. Map candidate
collection runs during the configured window; relabeling from its start step.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..automap import AutoMapConfig, CandidateCounts, collect_candidates, finalize_map
from ..detect import Detection, Patch, extract_patches, filter_by_score, nms
from ..metrics import ConfusionMatrix, MIoUSpec, accumulate_confusion, iou_per_class, mean_iou

from ..relabel import PipelineThresholds, RelabelReport, RelabelSchedule, apply_csi
from ..taxonomy import ConversionTable, RelabelMap, Taxonomy, convert_label_space, ensure_valid_map
from ..zsfilter import build_concept_index, classify_patch
from .model import (
    PixelClassifier,
    ema_update,
    pseudo_label,
    source_loss_and_grad,
    target_loss_and_grad,
)
from .oracles import NoiseConfig, derive_seed, simulate_classifier, simulate_detector
from .world import SceneConfig, SimWorld, generate_scene, shift_domain, with_labels

# seed-stream tags so every random purpose draws from its own stream
_TAG_TARGET, _TAG_SOURCE, _TAG_EVAL, _TAG_INIT, _TAG_DETECT, _TAG_CLASSIFY = range(6)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a reproducible run needs; all randomness flows from ``seed``."""

    source_taxonomy: Taxonomy
    target_taxonomy: Taxonomy
    scene: SceneConfig
    source_object_classes: tuple[int, ...]
    source_label_table: ConversionTable
    domain_shift: tuple[float, ...]
    predefined_map: RelabelMap
    open_classes: tuple[int, ...]
    classification_classes: tuple[int, ...]
    thresholds: PipelineThresholds
    automap_config: AutoMapConfig = field(default_factory=AutoMapConfig)
    schedule: RelabelSchedule = field(default_factory=RelabelSchedule)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    csi_enabled: bool = True
    classifier_filter_enabled: bool = True
    learning_rate: float = 0.5
    ema_alpha: float = 0.99
    confidence_tau: float = 0.968
    relabel_confidence: float = 1.0
    num_source_worlds: int = 6
    num_target_worlds: int = 6
    num_eval_worlds: int = 4
    eval_interval: int = 250
    loss_log_interval: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        ensure_valid_map(self.predefined_map, self.source_taxonomy, self.target_taxonomy)
        for cid in self.open_classes:
            if not self.target_taxonomy.has_id(cid) or self.source_taxonomy.has_id(cid):
                raise ValueError(f"open class {cid} must be target-only")
        for cid in self.classification_classes:
            if not self.target_taxonomy.has_id(cid):
                raise ValueError(f"classification class {cid} not in target taxonomy")
        if len(self.domain_shift) != self.scene.feature_dim:
            raise ValueError("domain shift dimension != feature dimension")

    @property
    def num_classes(self) -> int:
        return max(self.target_taxonomy.ids) + 1

    @property
    def new_class_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.target_taxonomy.ids - self.source_taxonomy.ids))

    @property
    def common_class_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.target_taxonomy.ids & self.source_taxonomy.ids))


@dataclass
class ExperimentReport:
    """Trajectories and final state of one run; JSON-ready via ``to_dict``."""

    seed: int
    csi_enabled: bool
    total_steps: int
    class_names: dict[int, str]
    new_class_ids: tuple[int, ...]
    common_class_ids: tuple[int, ...]
    loss_trajectory: list[tuple[int, float, float]] = field(default_factory=list)
    iou_trajectory: list[tuple[int, list[float]]] = field(default_factory=list)
    final_ious: list[float] = field(default_factory=list)
    auto_map_entries: list[tuple[int, int]] | None = None
    candidate_counts: dict[int, dict[int, int]] | None = None
    relabel_totals: RelabelReport = field(default_factory=RelabelReport)

    def iou_of(self, class_id: int) -> float:
        return self.final_ious[class_id]

    def new_class_ious(self) -> dict[int, float]:
        return {cid: self.final_ious[cid] for cid in self.new_class_ids}

    def common_miou(self) -> float:
        return mean_iou(np.asarray(self.final_ious, dtype=np.float64),
                        MIoUSpec(class_subset=self.common_class_ids))

    def new_miou(self) -> float:
        return mean_iou(np.asarray(self.final_ious, dtype=np.float64),
                        MIoUSpec(class_subset=self.new_class_ids))

    def to_dict(self) -> dict:
        def clean(values: Sequence[float]) -> list:
            return [None if np.isnan(v) else float(v) for v in values]

        return {
            "seed": self.seed,
            "csi": self.csi_enabled,
            "total_steps": self.total_steps,
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
            "new_class_ids": list(self.new_class_ids),
            "common_class_ids": list(self.common_class_ids),
            "loss_trajectory": [
                {"step": s, "source_loss": ls, "target_loss": lt}
                for s, ls, lt in self.loss_trajectory
            ],
            "iou_trajectory": [
                {"step": s, "iou_per_class": clean(v)} for s, v in self.iou_trajectory
            ],
            "final_iou_per_class": clean(self.final_ious),
            "auto_map_entries": (
                None
                if self.auto_map_entries is None
                else [{"from": f, "to": t} for f, t in self.auto_map_entries]
            ),
            "candidate_counts": (
                None
                if self.candidate_counts is None
                else {
                    str(to): {str(frm): n for frm, n in sorted(per.items())}
                    for to, per in sorted(self.candidate_counts.items())
                }
            ),
            "relabel_totals": self.relabel_totals.to_dict(),
        }


def build_source_world(config: ExperimentConfig, seed: int) -> SimWorld:
    """A source-domain scene: restricted object classes, source-space labels,
    features offset by the domain shift."""
    world = generate_scene(config.scene.restricted_to(config.source_object_classes), seed)
    labels = convert_label_space(world.gt_labels, config.source_label_table)
    return shift_domain(with_labels(world, labels), np.asarray(config.domain_shift))


def evaluate_model(
    model: PixelClassifier, worlds: Sequence[SimWorld], num_classes: int
) -> np.ndarray:
    """Per-class IoU of the model's argmax predictions over the given scenes."""
    matrix = ConfusionMatrix.zeros(num_classes)
    for world in worlds:
        accumulate_confusion(model.predict_labels(world), world.gt_labels, matrix)
    return iou_per_class(matrix)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Train the student with or without relabeling; fully seed-deterministic."""
    seed = config.seed
    target_worlds = [
        generate_scene(config.scene, derive_seed(seed, _TAG_TARGET, i))
        for i in range(config.num_target_worlds)
    ]
    source_worlds = [
        build_source_world(config, derive_seed(seed, _TAG_SOURCE, i))
        for i in range(config.num_source_worlds)
    ]
    eval_worlds = [
        generate_scene(config.scene, derive_seed(seed, _TAG_EVAL, i))
        for i in range(config.num_eval_worlds)
    ]

    num_classes = config.num_classes
    student = PixelClassifier.init(num_classes, config.scene.feature_dim, derive_seed(seed, _TAG_INIT))
    teacher = student.copy()

    schedule = config.schedule
    counts = CandidateCounts.empty((schedule.collect_start_step, schedule.relabel_start_step))
    concept_index = build_concept_index(config.target_taxonomy, config.classification_classes)
    active_map: RelabelMap | None = None
    report = ExperimentReport(
        seed=seed,
        csi_enabled=config.csi_enabled,
        total_steps=schedule.total_steps,
        class_names={c.id: c.name for c in config.target_taxonomy.classes},
        new_class_ids=config.new_class_ids,
        common_class_ids=config.common_class_ids,
    )

    def classify_scores(patch: Patch, world: SimWorld):
        # keyed to the patch id, not the step: like a real model, the same
        # image crop always yields the same logits
        return simulate_classifier(
            patch, world, concept_index, config.scene, config.noise,
            derive_seed(seed, _TAG_CLASSIFY, zlib.crc32(patch.patch_id.encode())),
        )

    def classify_accept(patch: Patch, world: SimWorld) -> bool:
        verdict = classify_patch(
            classify_scores(patch, world), patch.detection.query_class,
            config.target_taxonomy, config.thresholds.classifier,
        )
        return verdict.accepted

    for step in range(schedule.total_steps):
        src = source_worlds[step % len(source_worlds)]
        trg_index = step % len(target_worlds)
        trg = target_worlds[trg_index]
        image_id = f"trg{trg_index:03d}"

        pseudo, confidence = pseudo_label(teacher, trg, config.confidence_tau)

        if config.csi_enabled and config.open_classes and schedule.in_collection_window(step):
            dets = _detect_classes(config, trg, image_id, config.open_classes, trg_index)
            kept = nms(filter_by_score(dets, config.thresholds.detector),
                       config.thresholds.detector.nms_iou)
            for patch in extract_patches(pseudo, kept, image_id):
                if config.classifier_filter_enabled and not classify_accept(patch, trg):
                    continue
                vote = collect_candidates(patch, config.source_taxonomy, config.automap_config)
                if vote is not None:
                    counts.add(*vote)

        if config.csi_enabled and schedule.in_relabel_phase(step):
            if active_map is None:
                if config.open_classes:
                    active_map = finalize_map(
                        counts, config.source_taxonomy, config.target_taxonomy,
                        config.predefined_map,
                    )
                    report.auto_map_entries = [(e.from_id, e.to_id) for e in active_map.entries]
                    report.candidate_counts = {
                        to: dict(per) for to, per in counts.counts.items()
                    }
                else:
                    active_map = config.predefined_map
            query_classes = tuple(sorted(active_map.to_ids))
            dets = _detect_classes(config, trg, image_id, query_classes, trg_index)
            scores_source = None
            if config.classifier_filter_enabled:
                def scores_source(patch: Patch, _world=trg):
                    return classify_scores(patch, _world)
            pseudo, confidence, step_report = apply_csi(
                step, pseudo, confidence, dets, scores_source, active_map,
                config.target_taxonomy, config.thresholds, schedule,
                config.relabel_confidence,
            )
            report.relabel_totals = report.relabel_totals.merged(step_report)

        loss_src, grad_w_src, grad_b_src = source_loss_and_grad(
            student, src.flat_features(), src.gt_labels
        )
        loss_trg, grad_w_trg, grad_b_trg = target_loss_and_grad(
            student, trg.flat_features(), pseudo, confidence
        )
        student.weights = student.weights - config.learning_rate * (grad_w_src + grad_w_trg)
        student.bias = student.bias - config.learning_rate * (grad_b_src + grad_b_trg)
        teacher = ema_update(teacher, student, config.ema_alpha)

        if step % config.loss_log_interval == 0 or step == schedule.total_steps - 1:
            report.loss_trajectory.append((step, loss_src, loss_trg))
        if step % config.eval_interval == 0 or step == schedule.total_steps - 1:
            ious = evaluate_model(student, eval_worlds, num_classes)
            report.iou_trajectory.append((step, [float(v) for v in ious]))

    final = evaluate_model(student, eval_worlds, num_classes)
    report.final_ious = [float(v) for v in final]
    return report


def _detect_classes(
    config: ExperimentConfig,
    world: SimWorld,
    image_id: str,
    query_classes: Sequence[int],
    world_index: int,
) -> list[Detection]:
    # seeded per (world, query): a detector is deterministic per image, so
    # false positives persist on the same objects for the whole run
    dets: list[Detection] = []
    for query in query_classes:
        dets.extend(
            simulate_detector(
                world, query, image_id, config.target_taxonomy, config.scene, config.noise,
                derive_seed(config.seed, _TAG_DETECT, world_index, query),
            )
        )
    return dets
