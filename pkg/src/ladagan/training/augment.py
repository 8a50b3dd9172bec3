"""Differentiable augmentation: translation, color and cutout.

Random draws are separated from their application so the same draw can be
replayed, e.g. for consistency regularization.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numerics as nx
from ..numerics import Rng, Tensor


@dataclass(frozen=True)
class AugmentPolicy:
    translation: bool = True
    color: bool = True
    cutout: bool = True

    @classmethod
    def none(cls) -> "AugmentPolicy":
        return cls(False, False, False)

    @classmethod
    def parse(cls, text: str) -> "AugmentPolicy":
        """Comma list such as ``"translation,color"``; empty or ``"none"`` disables all."""
        names = {s.strip() for s in text.split(",") if s.strip() and s.strip() != "none"}
        unknown = names - {"translation", "color", "cutout"}
        if unknown:
            raise ValueError(f"unknown augmentation(s): {', '.join(sorted(unknown))}")
        return cls("translation" in names, "color" in names, "cutout" in names)

    @property
    def active(self) -> bool:
        return self.translation or self.color or self.cutout

    def __str__(self) -> str:
        on = [n for n in ("translation", "color", "cutout") if getattr(self, n)]
        return ",".join(on) or "none"


@dataclass
class AugmentDraw:
    """Per-sample random parameters for one augmentation pass."""

    shift_y: Optional[np.ndarray] = None
    shift_x: Optional[np.ndarray] = None
    brightness: Optional[np.ndarray] = None
    saturation: Optional[np.ndarray] = None
    contrast: Optional[np.ndarray] = None
    cutout_mask: Optional[np.ndarray] = None


def sample_augment(rng: Rng, shape, policy: AugmentPolicy) -> AugmentDraw:
    b, _, h, w = shape
    draw = AugmentDraw()
    if policy.translation:
        # integer shifts uniform in [-H/8, H/8]
        sy, sx = h // 8, w // 8
        draw.shift_y = rng.integers(-sy, sy + 1, b)
        draw.shift_x = rng.integers(-sx, sx + 1, b)
    if policy.color:
        draw.brightness = rng.uniform(-0.5, 0.5, (b, 1, 1, 1))
        draw.saturation = rng.uniform(0.0, 2.0, (b, 1, 1, 1))
        draw.contrast = rng.uniform(0.5, 1.5, (b, 1, 1, 1))
    if policy.cutout:
        ch, cw = h // 2, w // 2
        # square centre uniform over the image; the square is clipped at the border
        cy = rng.integers(0, h + (1 - ch % 2), b)
        cx = rng.integers(0, w + (1 - cw % 2), b)
        ys = np.arange(h)[None, :, None]
        xs = np.arange(w)[None, None, :]
        y0 = (cy - ch // 2)[:, None, None]
        x0 = (cx - cw // 2)[:, None, None]
        inside = (ys >= y0) & (ys < y0 + ch) & (xs >= x0) & (xs < x0 + cw)
        draw.cutout_mask = (~inside).astype(np.float32)[:, None, :, :]
    return draw


def apply_augment(x: Tensor, draw: AugmentDraw) -> Tensor:
    """Apply a recorded draw; only shifts, masks and affine maps, so gradients flow to x."""
    if draw.shift_y is not None:
        x = nx.shift2d(x, draw.shift_y, draw.shift_x)
    if draw.brightness is not None:
        dt = x.dtype
        x = x + draw.brightness.astype(dt)
        m = nx.mean(x, axis=1, keepdims=True)
        x = (x - m) * draw.saturation.astype(dt) + m
        m = nx.mean(x, axis=(1, 2, 3), keepdims=True)
        x = (x - m) * draw.contrast.astype(dt) + m
    if draw.cutout_mask is not None:
        x = x * draw.cutout_mask.astype(x.dtype)
    return x


def diffaugment(x: Tensor, rng: Rng, policy: AugmentPolicy = AugmentPolicy()) -> Tensor:
    if not policy.active:
        return x
    return apply_augment(x, sample_augment(rng, x.shape, policy))
