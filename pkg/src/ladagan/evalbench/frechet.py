"""Gaussian Frechet distance and cheap desk features.

The features (8x8 grayscale thumbnails, optionally randomly projected) make
a trend metric for small runs. The numbers are not comparable to
Inception-based FID.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..numerics import DimensionError, NumericError

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class FrechetStats:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d):
            raise DimensionError(f"covariance shape {self.sigma.shape} does not match mean length {d}")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "FrechetStats":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise DimensionError(f"need at least two feature rows, got shape {feats.shape}")
        return cls(feats.mean(axis=0), np.cov(feats, rowvar=False))


def _psd_sqrt(sigma: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    sym = 0.5 * (sigma + sigma.T)
    w, v = np.linalg.eigh(sym)
    if w.min() < -tol:
        raise NumericError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def trace_sqrt_product(sa: np.ndarray, sb: np.ndarray, tol: float = 1e-6) -> float:
    """Tr((Sa Sb)^(1/2)) via the symmetric form Sa^(1/2) Sb Sa^(1/2)."""
    ra = _psd_sqrt(sa, tol)
    m = ra @ sb @ ra
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if not np.isfinite(w).all():
        raise NumericError("matrix square root failed (non-finite eigenvalues)")
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -tol * scale:
        raise NumericError(f"product has a negative eigenvalue {w.min():.3g}")
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())


def frechet_distance(a: FrechetStats, b: FrechetStats) -> float:
    """|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), clipped at zero."""
    if a.dim != b.dim:
        raise DimensionError(f"feature dims differ: {a.dim} vs {b.dim}")
    diff = a.mu - b.mu
    val = float(diff @ diff) + float(np.trace(a.sigma) + np.trace(b.sigma)) - 2.0 * trace_sqrt_product(a.sigma, b.sigma)
    return max(val, 0.0)


class DeskFeatures:
    """Images in [-1,1] -> 8x8 grayscale block means (64 dims), optionally projected."""

    def __init__(self, proj_dim: Optional[int] = None, seed: int = 0, thumb: int = 8):
        self.thumb = thumb
        self.proj = None
        if proj_dim is not None:
            rng = np.random.default_rng(seed)
            self.proj = rng.standard_normal((thumb * thumb, proj_dim)) / np.sqrt(proj_dim)

    @property
    def dim(self) -> int:
        return self.thumb ** 2 if self.proj is None else self.proj.shape[1]

    def __call__(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected [B, 3, H, W] images, got {x.shape}")
        b, _, h, w = x.shape
        t = self.thumb
        if h % t or w % t:
            raise DimensionError(f"image size {h}x{w} is not a multiple of {t}")
        gray = np.tensordot(_LUMA, x, axes=([0], [1]))
        thumbs = gray.reshape(b, t, h // t, t, w // t).mean(axis=(2, 4)).reshape(b, t * t)
        return thumbs if self.proj is None else thumbs @ self.proj


def desk_stats(images: np.ndarray, features: Optional[DeskFeatures] = None) -> FrechetStats:
    features = features or DeskFeatures()
    return FrechetStats.from_features(features(images))
