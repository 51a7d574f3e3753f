"""Model backends for zero-shot detection and classification.

Two families:

- ``transformers``: real open-vocabulary checkpoints (OWL-ViT-class
  detector, CLIP-class classifier) via the transformers library. Requires
  the weights to be resolvable (local path or hub access).
- ``mock``: deterministic procedural outputs derived from image content
  hashes. No weights, no network; exists so the export pipeline and its
  format guarantees can be exercised anywhere. Never use it for real data.

Both families are deterministic: identical inputs yield identical outputs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

from PIL import Image


class ModelLoadError(RuntimeError):
    """A model backend could not be constructed (weights unresolvable, etc.)."""


@dataclass(frozen=True)
class RawDetection:
    concept: str
    box: tuple[float, float, float, float]
    score: float


class DetectorBackend(Protocol):
    def detect(self, image: Image.Image, queries: Sequence[str]) -> list[RawDetection]: ...


class ClassifierBackend(Protocol):
    def logits(self, image: Image.Image, prompts: Sequence[str]) -> list[float]: ...


# ---------------------------------------------------------------------------
# deterministic mock family


def _digest_stream(*parts: bytes):
    counter = 0
    while True:
        digest = hashlib.sha256(b"|".join(parts) + counter.to_bytes(4, "little")).digest()
        for i in range(0, 32, 8):
            yield digest[i:i + 8]
        counter += 1


class MockDetector:
    """Proposes a few content-hash-seeded boxes per queried concept."""

    def __init__(self, max_dets_per_query: int = 3):
        self.max_dets_per_query = max_dets_per_query

    def detect(self, image: Image.Image, queries: Sequence[str]) -> list[RawDetection]:
        width, height = image.size
        content = image.tobytes()
        dets = []
        for concept in queries:
            stream = _digest_stream(content, concept.encode("utf-8"))
            first = next(stream)
            count = 1 + first[0] % self.max_dets_per_query
            for _ in range(count):
                chunk = next(stream)
                x0 = chunk[0] % max(1, width - 1)
                y0 = chunk[1] % max(1, height - 1)
                x1 = x0 + 1 + chunk[2] % (width - x0)
                y1 = y0 + 1 + chunk[3] % (height - y0)
                score = struct.unpack("<H", chunk[4:6])[0] / 65535.0
                dets.append(RawDetection(concept, (x0, y0, min(x1, width), min(y1, height)), score))
        return dets


class MockClassifier:
    """One content-hash-seeded logit per prompt, in [-5, 5]."""

    def logits(self, image: Image.Image, prompts: Sequence[str]) -> list[float]:
        content = image.tobytes()
        values = []
        for prompt in prompts:
            chunk = next(_digest_stream(content, prompt.encode("utf-8")))
            raw = struct.unpack("<q", chunk)[0]
            values.append(5.0 * raw / (1 << 63))
        return values


# ---------------------------------------------------------------------------
# transformers family


class TransformersDetector:
    """Open-vocabulary detector (OWL-ViT-class) through transformers."""

    def __init__(self, model_id: str, max_dets_per_image: int = 100, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModelForZeroShotObjectDetection, AutoProcessor
        except ImportError as exc:
            raise ModelLoadError(f"transformers backend unavailable: {exc}") from exc
        try:
            self._processor = AutoProcessor.from_pretrained(model_id)
            self._model = AutoModelForZeroShotObjectDetection.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load detector {model_id!r}: {exc}") from exc
        self._torch = torch
        self._model.eval().to(device)
        self._device = device
        self.max_dets_per_image = max_dets_per_image

    def detect(self, image: Image.Image, queries: Sequence[str]) -> list[RawDetection]:
        torch = self._torch
        inputs = self._processor(
            text=[list(queries)], images=image, return_tensors="pt"
        ).to(self._device)
        with torch.inference_mode():
            outputs = self._model(**inputs)
        target_sizes = torch.tensor([[image.size[1], image.size[0]]])
        [result] = self._processor.post_process_object_detection(
            outputs, threshold=0.0, target_sizes=target_sizes
        )
        ranked = sorted(
            zip(result["scores"], result["labels"], result["boxes"]),
            key=lambda item: -float(item[0]),
        )[: self.max_dets_per_image]
        dets = []
        for score, label, box in ranked:
            x0, y0, x1, y1 = (float(v) for v in box)
            if x1 <= x0 or y1 <= y0:
                continue
            dets.append(RawDetection(queries[int(label)], (x0, y0, x1, y1), float(score)))
        return dets


class TransformersClassifier:
    """Image-text similarity model (CLIP-class) through transformers."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:
            raise ModelLoadError(f"transformers backend unavailable: {exc}") from exc
        try:
            self._processor = AutoProcessor.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load classifier {model_id!r}: {exc}") from exc
        self._torch = torch
        self._model.eval().to(device)
        self._device = device

    def logits(self, image: Image.Image, prompts: Sequence[str]) -> list[float]:
        torch = self._torch
        inputs = self._processor(
            text=list(prompts), images=image, return_tensors="pt", padding=True
        ).to(self._device)
        with torch.inference_mode():
            outputs = self._model(**inputs)
        return [float(v) for v in outputs.logits_per_image[0]]


def build_detector(backend: str, model_id: str, max_dets: int) -> DetectorBackend:
    if backend == "mock":
        return MockDetector(max_dets_per_query=min(max_dets, 3))
    if backend == "transformers":
        return TransformersDetector(model_id, max_dets_per_image=max_dets)
    raise ModelLoadError(f"unknown backend {backend!r}")


def build_classifier(backend: str, model_id: str) -> ClassifierBackend:
    if backend == "mock":
        return MockClassifier()
    if backend == "transformers":
        return TransformersClassifier(model_id)
    raise ModelLoadError(f"unknown backend {backend!r}")
