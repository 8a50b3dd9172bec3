"""Dataset ingestion: CIFAR binary records, PNG directories and synthetic shapes.

All loaders return float32 arrays shaped [N, 3, H, W] with values in [-1, 1].
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Iterator, List

import numpy as np

log = logging.getLogger(__name__)

CIFAR_RECORD = 3073
FORMATS = ("cifar-binary", "image-dir", "synthetic-shapes")


class DatasetError(ValueError):
    pass


def bytes_to_unit(b: np.ndarray) -> np.ndarray:
    """Map uint8 values b to 2b/255 - 1."""
    return (b.astype(np.float32) * np.float32(2.0 / 255.0) - np.float32(1.0)).astype(np.float32)


def unit_to_bytes(x: np.ndarray) -> np.ndarray:
    """Affine map [-1, 1] -> [0, 255] with clamping."""
    return np.clip(np.rint((np.asarray(x, np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_cifar_binary(path) -> np.ndarray:
    """Records of 1 label byte + 1024 R + 1024 G + 1024 B bytes (row-major 32x32)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        whole = raw.size // CIFAR_RECORD
        raise DatasetError(f"{path}: size {raw.size} is not a multiple of {CIFAR_RECORD}; "
                           f"trailing partial record starts at byte offset {whole * CIFAR_RECORD}")
    if raw.size == 0:
        raise DatasetError(f"{path}: no records")
    recs = raw.reshape(-1, CIFAR_RECORD)
    return bytes_to_unit(recs[:, 1:].reshape(-1, 3, 32, 32))


def iter_batches(images: np.ndarray, batch_size: int) -> Iterator[np.ndarray]:
    for i in range(0, len(images), batch_size):
        yield images[i:i + batch_size]


@dataclass
class ImageDirSummary:
    loaded: int
    skipped: int
    skipped_files: List[str]


def load_image_dir(path, resolution: int, return_summary: bool = False):
    """Decode PNGs in lexicographic order, center-crop to square, nearest resize."""
    from PIL import Image, UnidentifiedImageError

    if not os.path.isdir(path):
        raise DatasetError(f"{path}: not a directory")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
    images, skipped = [], []
    for name in names:
        fp = os.path.join(path, name)
        try:
            with Image.open(fp) as im:
                im = im.convert("RGB")
                w, h = im.size
                s = min(w, h)
                left, top = (w - s) // 2, (h - s) // 2
                im = im.crop((left, top, left + s, top + s))
                if s != resolution:
                    im = im.resize((resolution, resolution), Image.NEAREST)
                arr = np.asarray(im, dtype=np.uint8)
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            log.warning("skipping undecodable image %s: %s", fp, exc)
            skipped.append(name)
            continue
        images.append(arr.transpose(2, 0, 1))
    if not images:
        raise DatasetError(f"{path}: no decodable PNG images ({len(skipped)} skipped)")
    if skipped:
        log.warning("%d of %d images skipped in %s", len(skipped), len(names), path)
    out = bytes_to_unit(np.stack(images))
    summary = ImageDirSummary(len(images), len(skipped), skipped)
    return (out, summary) if return_summary else out


def synth_shapes(count: int, resolution: int = 32, seed: int = 0) -> np.ndarray:
    """One axis-aligned colored rectangle on a colored background per image."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    r = resolution
    bg = rng.uniform(-1.0, 1.0, (count, 3, 1, 1))
    fg = rng.uniform(-1.0, 1.0, (count, 3, 1, 1))
    lo, hi = max(1, r // 4), max(2, r // 2 + 1)
    hs = rng.integers(lo, hi, count)
    ws = rng.integers(lo, hi, count)
    y0 = rng.integers(0, r - hs + 1)
    x0 = rng.integers(0, r - ws + 1)
    ys = np.arange(r)[None, :, None]
    xs = np.arange(r)[None, None, :]
    inside = ((ys >= y0[:, None, None]) & (ys < (y0 + hs)[:, None, None])
              & (xs >= x0[:, None, None]) & (xs < (x0 + ws)[:, None, None]))[:, None]
    return np.where(inside, fg, bg).astype(np.float32)


def load_dataset(fmt: str, path: str = "", resolution: int = 32, count: int = 1000, seed: int = 0) -> np.ndarray:
    if fmt == "cifar-binary":
        data = load_cifar_binary(path)
        if resolution != 32:
            raise DatasetError(f"CIFAR records are 32x32, configured resolution is {resolution}")
        return data
    if fmt == "image-dir":
        return load_image_dir(path, resolution)
    if fmt == "synthetic-shapes":
        return synth_shapes(count, resolution, seed)
    raise DatasetError(f"unknown dataset format '{fmt}' (expected one of {', '.join(FORMATS)})")
