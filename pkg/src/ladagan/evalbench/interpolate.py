"""Latent interpolation with per-stage attention maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .. import numerics as nx
from ..attention import AttentionTrace, extract_attention_maps
from ..numerics import DimensionError, Tensor


@dataclass
class InterpolationResult:
    lambdas: np.ndarray
    frames: np.ndarray  # [steps, C, H, W]
    maps: Dict[str, np.ndarray] = field(default_factory=dict)  # label -> [steps, heads, s, s]


def generate_with_maps(G, z: np.ndarray):
    """One sample at batch 1; returns (image [C,H,W], {stage label: [heads, s, s]})."""
    mods = G.attention_modules()
    saved = [m.record for m in mods]
    try:
        for m in mods:
            m.record = True
        with nx.no_grad():
            img = G(Tensor(np.asarray(z, dtype=np.float32).reshape(1, -1))).data[0]
        maps = {m.label: extract_attention_maps(AttentionTrace(m.last_trace.weights[0], m.label)) for m in mods}
    finally:
        for m, r in zip(mods, saved):
            m.record = r
    return img, maps


def interpolate_latents(z1, z2, steps: int, G) -> InterpolationResult:
    """Frames G((1 - t) z1 + t z2) for t evenly spaced in [0, 1].

    Each frame is generated alone so the endpoints match G(z1) and G(z2)
    bit for bit.
    """
    z1 = np.asarray(z1, dtype=np.float32).reshape(-1)
    z2 = np.asarray(z2, dtype=np.float32).reshape(-1)
    if z1.shape != z2.shape:
        raise DimensionError(f"latent shapes differ: {z1.shape} vs {z2.shape}")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    lambdas = np.linspace(0.0, 1.0, steps)
    frames: List[np.ndarray] = []
    per_stage: Dict[str, List[np.ndarray]] = {}
    for t in lambdas:
        z = (np.float32(1.0 - t) * z1 + np.float32(t) * z2).astype(np.float32)
        img, maps = generate_with_maps(G, z)
        frames.append(img)
        for label, m in maps.items():
            per_stage.setdefault(label, []).append(m)
    return InterpolationResult(lambdas, np.stack(frames), {k: np.stack(v) for k, v in per_stage.items()})
