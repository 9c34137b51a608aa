"""Fixed 47-entry color palette and indexed-PNG class-map I/O.

Palette entry k colors class k; entry 0 (background) is black. The list
is frozen so masks written by different runs are visually comparable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidClassError, MaskShapeError
from .rle import NUM_CLASSES

PALETTE_HEX = (
    "#000000", "#f21818", "#f25118", "#f28a18", "#f2c318", "#e9f218",
    "#b0f218", "#77f218", "#3ef218", "#18f22b", "#18f264", "#18f29d",
    "#18f2d6", "#18d6f2", "#189df2", "#1864f2", "#182bf2", "#3e18f2",
    "#7718f2", "#b018f2", "#e918f2", "#f218c3", "#f2188a", "#f21851",
    "#b25050", "#b26a50", "#b28450", "#b29d50", "#aeb250", "#95b250",
    "#7bb250", "#61b250", "#50b259", "#50b272", "#50b28c", "#50b2a6",
    "#50a6b2", "#508cb2", "#5072b2", "#5059b2", "#6150b2", "#7b50b2",
    "#9550b2", "#ae50b2", "#b2509d", "#b25084", "#b2506a",
)


def palette_rgb() -> np.ndarray:
    """The palette as a (47, 3) uint8 array."""
    rgb = [
        (int(h[1:3], 16), int(h[3:5], 16), int(h[5:7], 16)) for h in PALETTE_HEX
    ]
    return np.array(rgb, dtype=np.uint8)


def _flat_palette() -> list[int]:
    flat = []
    for h in PALETTE_HEX:
        flat.extend((int(h[1:3], 16), int(h[3:5], 16), int(h[5:7], 16)))
    # PIL palettes hold 256 entries; pad the rest with black
    flat.extend([0] * (3 * (256 - NUM_CLASSES)))
    return flat


def save_classmap_png(class_map: np.ndarray, path: str | Path) -> None:
    """Write a class map as an 8-bit single-channel indexed-color PNG."""
    arr = np.asarray(class_map)
    if arr.ndim != 2:
        raise MaskShapeError(f"expected a 2-D class map, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise InvalidClassError(f"labels must lie in [0, {NUM_CLASSES - 1}]")
    img = Image.fromarray(arr.astype(np.uint8), mode="P")
    img.putpalette(_flat_palette())
    img.save(path, format="PNG")


def load_classmap_png(path: str | Path) -> np.ndarray:
    """Read a class map written by save_classmap_png."""
    with Image.open(path) as img:
        if img.mode != "P":
            raise MaskShapeError(f"{path}: expected an indexed-color PNG, got mode {img.mode}")
        arr = np.asarray(img, dtype=np.int16)
    if arr.size and arr.max() >= NUM_CLASSES:
        raise InvalidClassError(f"{path}: palette index {arr.max()} exceeds class range")
    return arr


def colorize(class_map: np.ndarray) -> np.ndarray:
    """Render a class map to an RGB uint8 image using the fixed palette."""
    arr = np.asarray(class_map).astype(np.intp)
    return palette_rgb()[arr]


def overlay(image: np.ndarray, class_map: np.ndarray, alpha: float = 0.55) -> np.ndarray:
    """Blend the colorized mask over an RGB image; background stays untouched."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if img.shape[:2] != np.asarray(class_map).shape:
        raise MaskShapeError("image and class map sizes differ")
    color = colorize(class_map).astype(np.float64)
    out = img.astype(np.float64)
    fg = np.asarray(class_map) != 0
    out[fg] = (1.0 - alpha) * out[fg] + alpha * color[fg]
    return np.clip(np.round(out), 0, 255).astype(np.uint8)
