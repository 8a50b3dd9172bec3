"""PNG grids and strips."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .data import unit_to_bytes


def tile(images: np.ndarray, cols: Optional[int] = None, gutter: int = 2) -> np.ndarray:
    """[N, C, H, W] uint8 -> [rows*H + gaps, cols*W + gaps, C] with black gutters between tiles."""
    n, c, h, w = images.shape
    cols = cols or int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    out = np.zeros((rows * h + (rows - 1) * gutter, cols * w + (cols - 1) * gutter, c), dtype=np.uint8)
    for i in range(n):
        r, k = divmod(i, cols)
        y, x = r * (h + gutter), k * (w + gutter)
        out[y:y + h, x:x + w] = images[i].transpose(1, 2, 0)
    return out


def save_png(array: np.ndarray, path) -> None:
    from PIL import Image

    arr = array[..., 0] if array.ndim == 3 and array.shape[2] == 1 else array
    # fixed encoder settings keep output byte-identical across runs
    Image.fromarray(arr).save(path, format="PNG", optimize=False, compress_level=6)


def save_grid(images: np.ndarray, path, cols: Optional[int] = None, gutter: int = 2) -> None:
    """Images in [-1, 1] -> 8-bit PNG grid."""
    save_png(tile(unit_to_bytes(images), cols, gutter), path)


def save_map(m: np.ndarray, path, scale: int = 1) -> None:
    """Grayscale attention map normalized to [0, 1] by its max."""
    m = np.asarray(m, np.float64)
    peak = m.max()
    norm = m / peak if peak > 0 else np.zeros_like(m)
    img = np.rint(norm * 255).astype(np.uint8)
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    save_png(img, path)
