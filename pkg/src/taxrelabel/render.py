"""Palette rendering of label rasters to binary PPM (P6).

Class IDs 0-18 use the conventional urban-scene segmentation palette; any
other ID gets a deterministic golden-angle fallback color. The ignore value
renders black. PPM is chosen because it is a zero-dependency, diffable
byte format.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .raster import IGNORE_ID, LabelRaster

BASE_PALETTE = {
    0: (128, 64, 128),
    1: (244, 35, 232),
    2: (70, 70, 70),
    3: (102, 102, 156),
    4: (190, 153, 153),
    5: (153, 153, 153),
    6: (250, 170, 30),
    7: (220, 220, 0),
    8: (107, 142, 35),
    9: (152, 251, 152),
    10: (70, 130, 180),
    11: (220, 20, 60),
    12: (255, 0, 0),
    13: (0, 0, 142),
    14: (0, 0, 70),
    15: (0, 60, 100),
    16: (0, 80, 100),
    17: (0, 0, 230),
    18: (119, 11, 32),
}


def class_color(class_id: int) -> tuple[int, int, int]:
    """Fixed color for a class ID; stable across runs and machines."""
    if class_id == IGNORE_ID:
        return (0, 0, 0)
    if class_id in BASE_PALETTE:
        return BASE_PALETTE[class_id]
    # golden-angle hue walk keeps unknown ids visually distinct
    hue = (class_id * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def palette_array() -> np.ndarray:
    """(256, 3) uint8 lookup table over all possible class IDs."""
    table = np.zeros((256, 3), dtype=np.uint8)
    for cid in range(256):
        table[cid] = class_color(cid)
    return table


def render_ppm(raster: LabelRaster) -> bytes:
    """Binary PPM (P6, maxval 255) of the raster under the fixed palette."""
    rgb = palette_array()[raster.data]
    header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
    return header + rgb.tobytes()
