"""Fixtures: a 3-image set and the engine taxonomy document."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def taxonomy_text():
    from taxrelabel.sim import presets
    from taxrelabel.taxonomy import format_taxonomy_document

    return format_taxonomy_document(presets.demo_target_taxonomy())


@pytest.fixture
def taxonomy_path(tmp_path, taxonomy_text):
    path = tmp_path / "target_taxonomy.toml"
    path.write_text(taxonomy_text, encoding="utf-8")
    return path


@pytest.fixture
def fixture_images(tmp_path):
    """Three deterministic RGB images with blocky vehicle-ish shapes."""
    rng = np.random.default_rng(12)
    paths = []
    for index in range(3):
        pixels = np.full((48, 64, 3), 90 + 20 * index, dtype=np.uint8)
        for _ in range(4):
            x0, y0 = rng.integers(0, 40, size=2)
            w, h = rng.integers(8, 20, size=2)
            color = rng.integers(0, 255, size=3)
            pixels[y0:y0 + h, x0:x0 + w] = color
        path = tmp_path / f"street_{index:02d}.png"
        Image.fromarray(pixels).save(path)
        paths.append(path)
    return paths
