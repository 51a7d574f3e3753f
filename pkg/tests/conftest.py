"""Shared fixtures: the demo taxonomies and small raster builders."""

from __future__ import annotations

import numpy as np
import pytest

from taxrelabel import LabelRaster
from taxrelabel.sim import presets


@pytest.fixture
def source_taxonomy():
    return presets.demo_source_taxonomy()


@pytest.fixture
def target_taxonomy():
    return presets.demo_target_taxonomy()


@pytest.fixture
def counting_raster():
    """4x4 raster whose pixel values are 0..15 row-major."""
    return LabelRaster(np.arange(16, dtype=np.uint8).reshape(4, 4))


def make_raster(rows):
    return LabelRaster(np.asarray(rows, dtype=np.uint8))
