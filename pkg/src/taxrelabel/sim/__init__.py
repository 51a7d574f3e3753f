"""Desk-scale verification harness: synthetic scenes, simulated detector and
classifier oracles, and a toy teacher-student self-training loop."""

from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    build_source_world,
    evaluate_model,
    run_experiment,
)
from .model import (
    PixelClassifier,
    ema_update,
    pseudo_label,
    source_loss,
    source_loss_and_grad,
    target_loss,
    target_loss_and_grad,
)
from .oracles import NoiseConfig, derive_seed, simulate_classifier, simulate_detector
from .world import SceneConfig, ScenePlacementError, SimWorld, generate_scene

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "NoiseConfig",
    "PixelClassifier",
    "SceneConfig",
    "ScenePlacementError",
    "SimWorld",
    "build_source_world",
    "derive_seed",
    "ema_update",
    "evaluate_model",
    "generate_scene",
    "pseudo_label",
    "run_experiment",
    "simulate_classifier",
    "simulate_detector",
    "source_loss",
    "source_loss_and_grad",
    "target_loss",
    "target_loss_and_grad",
]
