"""Per-pixel linear softmax classifier with the teacher/student update rules.

The model is deliberately tiny: logits = features @ W.T + b per pixel. That
is the smallest model that still mirrors the studied failure mode, where a
class absent from supervision gets absorbed by its nearest neighbor in
feature space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..raster import IGNORE_ID, ConfidenceRaster, LabelRaster
from .world import SimWorld

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_PIXEL_THRESHOLD = 0.968


@dataclass
class PixelClassifier:
    """Linear softmax over per-pixel features; weights (C, d), bias (C,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (C, d) with bias (C,)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("parameters must be finite")

    @classmethod
    def init(cls, num_classes: int, dim: int, seed: int, scale: float = 0.01) -> "PixelClassifier":
        rng = np.random.default_rng(seed)
        return cls(weights=rng.normal(0.0, scale, (num_classes, dim)), bias=np.zeros(num_classes))

    def copy(self) -> "PixelClassifier":
        return PixelClassifier(self.weights.copy(), self.bias.copy())

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, flat_features: np.ndarray) -> np.ndarray:
        return flat_features @ self.weights.T + self.bias

    def predict_probs(self, flat_features: np.ndarray) -> np.ndarray:
        """Row-wise softmax probabilities, (N, C), numerically stabilized."""
        z = self.logits(flat_features)
        z -= z.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=1, keepdims=True)
        return z

    def predict_labels(self, world: SimWorld) -> LabelRaster:
        probs = self.predict_probs(world.flat_features())
        ids = probs.argmax(axis=1).astype(np.uint8)
        return LabelRaster(ids.reshape(world.height, world.width))


def source_loss(pred_probs: np.ndarray, gt_labels: LabelRaster) -> float:
    """Mean cross-entropy -log p(gt) over non-ignore pixels."""
    return target_loss(pred_probs, gt_labels, None)


def target_loss(
    pred_probs: np.ndarray,
    pseudo_label: LabelRaster,
    q: ConfidenceRaster | None,
) -> float:
    """Confidence-weighted cross-entropy: mean of -q * log p(pseudo class).

    ``q = None`` means unit weights, reducing to the plain source loss form.
    """
    probs, labels, weights = _flatten(pred_probs, pseudo_label, q)
    scored = labels != IGNORE_ID
    if not scored.any():
        logger.warning("loss over zero scored pixels; returning 0")
        return 0.0
    idx = np.flatnonzero(scored)
    ids = labels[idx].astype(np.int64)
    if ids.max() >= probs.shape[1]:
        raise ValueError(f"label id {ids.max()} >= num_classes {probs.shape[1]}")
    picked = probs[idx, ids]
    log_p = np.log(np.maximum(picked, 1e-300))
    if weights is None:
        return float(-log_p.mean())
    return float(-(weights[idx] * log_p).sum() / idx.size)


def source_loss_and_grad(
    model: PixelClassifier, flat_features: np.ndarray, gt_labels: LabelRaster
) -> tuple[float, np.ndarray, np.ndarray]:
    return target_loss_and_grad(model, flat_features, gt_labels, None)


def target_loss_and_grad(
    model: PixelClassifier,
    flat_features: np.ndarray,
    pseudo_label: LabelRaster,
    q: ConfidenceRaster | None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients (dW, db) of the weighted cross-entropy."""
    labels = pseudo_label.data.ravel()
    scored = labels != IGNORE_ID
    if not scored.any():
        logger.warning("gradient over zero scored pixels; returning zeros")
        return 0.0, np.zeros_like(model.weights), np.zeros_like(model.bias)
    idx = np.flatnonzero(scored)
    x = flat_features[idx]
    y = labels[idx].astype(np.int64)
    if y.max() >= model.num_classes:
        raise ValueError(f"label id {y.max()} >= num_classes {model.num_classes}")
    w = None if q is None else q.data.ravel()[idx].astype(np.float64)

    probs = model.predict_probs(x)
    picked = np.maximum(probs[np.arange(y.size), y], 1e-300)
    n = y.size
    if w is None:
        loss = float(-np.log(picked).mean())
    else:
        loss = float(-(w * np.log(picked)).sum() / n)

    grad_z = probs.copy()
    grad_z[np.arange(y.size), y] -= 1.0
    if w is not None:
        grad_z *= w[:, None]
    grad_z /= n
    return loss, grad_z.T @ x, grad_z.sum(axis=0)


def ema_update(teacher: PixelClassifier, student: PixelClassifier, alpha: float) -> PixelClassifier:
    """New teacher with every parameter moved to student + alpha * (teacher - student)."""
    if teacher.weights.shape != student.weights.shape:
        raise ValueError("teacher and student shapes differ")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return PixelClassifier(
        weights=student.weights + alpha * (teacher.weights - student.weights),
        bias=student.bias + alpha * (teacher.bias - student.bias),
    )


def pseudo_label(
    teacher: PixelClassifier,
    world: SimWorld,
    tau: float = DEFAULT_CONFIDENCE_PIXEL_THRESHOLD,
) -> tuple[LabelRaster, ConfidenceRaster]:
    """Teacher argmax labels plus the scene-level confidence estimate.

    The confidence is the fraction of pixels whose top probability reaches
    ``tau``, broadcast to every pixel of the confidence raster.
    """
    probs = teacher.predict_probs(world.flat_features())
    ids = probs.argmax(axis=1).astype(np.uint8)
    fraction = float((probs.max(axis=1) >= tau).mean())
    labels = LabelRaster(ids.reshape(world.height, world.width))
    confidence = ConfidenceRaster(
        np.full((world.height, world.width), np.float32(fraction), dtype=np.float32)
    )
    return labels, confidence


def _flatten(
    pred_probs: np.ndarray, labels: LabelRaster, q: ConfidenceRaster | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    probs = np.asarray(pred_probs, dtype=np.float64)
    if probs.ndim == 3:
        if probs.shape[:2] != labels.data.shape:
            raise ValueError("probability grid and label shapes differ")
        probs = probs.reshape(-1, probs.shape[2])
    elif probs.ndim == 2:
        if probs.shape[0] != labels.data.size:
            raise ValueError("probability rows and label pixel count differ")
    else:
        raise ValueError("probabilities must be (H, W, C) or (N, C)")
    flat_labels = labels.data.ravel()
    weights = None
    if q is not None:
        if q.data.shape != labels.data.shape:
            raise ValueError("confidence and label shapes differ")
        weights = q.data.ravel().astype(np.float64)
    return probs, flat_labels, weights
