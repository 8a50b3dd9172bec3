"""Ladaformer blocks, self-modulated layer norm, and Local Embedding Expansion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import MultiHeadLada
from .nn import Conv2d, LayerNorm, Linear, Module, Parameter, layer_norm
from .numerics import DimensionError, Rng, Tensor


@dataclass(frozen=True)
class BlockConfig:
    tokens: int
    dim: int
    heads: int = 4
    mlp_dim: int = 512
    residual_mlp: bool = False
    modulated: bool = True

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        side = math.isqrt(self.tokens)
        if side * side != self.tokens:
            raise ValueError(f"token count {self.tokens} is not a perfect square")

    @property
    def side(self) -> int:
        return math.isqrt(self.tokens)


class SLN(Module):
    """Self-modulated layer norm: gamma(z) * LN(h) + beta(z).

    gamma(z) = 1 + z W_g + b_g and beta(z) = z W_b + b_b, both affine maps
    zero-initialized so training starts from plain layer norm. With
    ``gamma_offset=False`` gamma is the raw affine map (b_g then starts at 1).
    """

    def __init__(self, latent_dim: int, dim: int, gamma_offset: bool = True, eps: float = 1e-5):
        super().__init__()
        self.latent_dim, self.dim, self.eps, self.gamma_offset = latent_dim, dim, eps, gamma_offset
        self.w_gamma = Parameter(np.zeros((latent_dim, dim), np.float32))
        self.b_gamma = Parameter((np.zeros if gamma_offset else np.ones)(dim, np.float32))
        self.w_beta = Parameter(np.zeros((latent_dim, dim), np.float32))
        self.b_beta = Parameter(np.zeros(dim, np.float32))

    def modulation(self, z: Tensor):
        gamma = nx.matmul(z, self.w_gamma) + self.b_gamma
        if self.gamma_offset:
            gamma = gamma + 1.0
        beta = nx.matmul(z, self.w_beta) + self.b_beta
        return gamma, beta

    def forward(self, h: Tensor, z: Tensor) -> Tensor:
        if h.shape[-1] != self.dim:
            raise DimensionError(f"SLN width {self.dim} does not match input {h.shape}")
        if z.shape[-1] != self.latent_dim:
            raise DimensionError(f"SLN latent dim {self.latent_dim} does not match z {z.shape}")
        squeeze = z.ndim == 1
        z2 = z.reshape(1, -1) if squeeze else z
        gamma, beta = self.modulation(z2)
        if h.ndim == 3:
            gamma = gamma.reshape(gamma.shape[0], 1, self.dim)
            beta = beta.reshape(beta.shape[0], 1, self.dim)
        elif squeeze:
            gamma, beta = gamma.reshape(self.dim), beta.reshape(self.dim)
        return gamma * layer_norm(h, self.eps) + beta


def sln(h: Tensor, z: Tensor, params: SLN) -> Tensor:
    return params(h, z)


class MLP(Module):
    """Linear(D -> hidden) -> GELU -> Linear(hidden -> D)."""

    def __init__(self, dim: int, hidden: int, rng: Rng):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, h: Tensor) -> Tensor:
        return self.fc2(nx.gelu(self.fc1(h)))


class GeneratorBlock(Module):
    """h' = MAA(SLN(h + E, z)) + h;  out = MLP(SLN(h', z)).  No MLP residual."""

    def __init__(self, cfg: BlockConfig, latent_dim: int, rng: Rng, variant: str = "lada",
                 gamma_offset: bool = True, label: str = ""):
        super().__init__()
        self.cfg = cfg
        self.pos_emb = Parameter(np.zeros((cfg.tokens, cfg.dim), np.float32))
        self.norm1 = SLN(latent_dim, cfg.dim, gamma_offset)
        self.attn = MultiHeadLada(cfg.dim, cfg.heads, rng, variant=variant, label=label)
        self.norm2 = SLN(latent_dim, cfg.dim, gamma_offset)
        self.mlp = MLP(cfg.dim, cfg.mlp_dim, rng)

    def forward(self, h: Tensor, z: Tensor) -> Tensor:
        if h.shape[-2:] != (self.cfg.tokens, self.cfg.dim):
            raise DimensionError(f"block expects [*, {self.cfg.tokens}, {self.cfg.dim}], got {h.shape}")
        h1 = self.attn(self.norm1(h + self.pos_emb, z)) + h
        out = self.mlp(self.norm2(h1, z))
        if self.cfg.residual_mlp:
            out = out + h1
        return out


class DiscriminatorBlock(Module):
    """h' = MAA(LN(h + E)) + h;  out = MLP(LN(h')) + h'."""

    def __init__(self, cfg: BlockConfig, rng: Rng, variant: str = "lada", pos_emb: bool = True,
                 label: str = ""):
        super().__init__()
        self.cfg = cfg
        self.pos_emb = Parameter(np.zeros((cfg.tokens, cfg.dim), np.float32)) if pos_emb else None
        self.norm1 = LayerNorm(cfg.dim)
        self.attn = MultiHeadLada(cfg.dim, cfg.heads, rng, variant=variant, label=label)
        self.norm2 = LayerNorm(cfg.dim)
        self.mlp = MLP(cfg.dim, cfg.mlp_dim, rng)

    def forward(self, h: Tensor) -> Tensor:
        if h.shape[-2:] != (self.cfg.tokens, self.cfg.dim):
            raise DimensionError(f"block expects [*, {self.cfg.tokens}, {self.cfg.dim}], got {h.shape}")
        x = h + self.pos_emb if self.pos_emb is not None else h
        h1 = self.attn(self.norm1(x)) + h
        return self.mlp(self.norm2(h1)) + h1


def tokens_to_map(h: Tensor) -> Tensor:
    """[B, N, D] -> [B, D, sqrt(N), sqrt(N)], token t = row * side + col."""
    b, n, d = h.shape
    side = math.isqrt(n)
    if side * side != n:
        raise DimensionError(f"token count {n} is not a perfect square")
    return h.reshape(b, side, side, d).transpose(0, 3, 1, 2)


def map_to_tokens(x: Tensor) -> Tensor:
    b, c, hh, ww = x.shape
    return x.transpose(0, 2, 3, 1).reshape(b, hh * ww, c)


class LEE(Module):
    """Local Embedding Expansion: pixel shuffle (r=2) then a 3x3 conv to K channels."""

    def __init__(self, dim: int, out_channels: int, rng: Rng):
        super().__init__()
        if dim % 4:
            raise ValueError(f"LEE needs dim divisible by 4, got {dim}")
        if out_channels < dim // 4:
            raise ValueError(f"LEE output channels {out_channels} below dim/4 = {dim // 4}")
        self.dim, self.out_channels = dim, out_channels
        self.conv = Conv2d(dim // 4, out_channels, 3, rng, pad=1)

    def forward(self, h: Tensor) -> Tensor:
        return map_to_tokens(self.conv(nx.pixel_shuffle(tokens_to_map(h), 2)))


def lee(h: Tensor, module: LEE) -> Tensor:
    return module(h)
