"""LadaGAN generator and discriminator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .ladaformer import LEE, BlockConfig, DiscriminatorBlock, GeneratorBlock, map_to_tokens, tokens_to_map
from .nn import BatchNorm2d, Conv2d, Linear, Module
from .numerics import DimensionError, Rng, Tensor


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 128
    stages: Tuple[Tuple[int, int], ...] = ((64, 1024), (256, 256), (1024, 64))
    heads: int = 4
    mlp_dim: int = 512
    patch_size: int = 1
    out_channels: int = 3
    out_kernel: int = 3
    attention: str = "lada"
    gamma_offset: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(int(v) for v in s) for s in self.stages))
        self.validate()

    def validate(self) -> None:
        if not self.stages:
            raise ConfigError("generator needs at least one stage")
        for n, d in self.stages:
            side = math.isqrt(n)
            if side * side != n:
                raise ConfigError(f"stage token count {n} is not a perfect square")
            if d % self.heads:
                raise ConfigError(f"stage dim {d} not divisible by {self.heads} heads")
        for (n0, d0), (n1, d1) in zip(self.stages, self.stages[1:]):
            if n1 != 4 * n0:
                raise ConfigError(f"token count must grow 4x between stages, got {n0} -> {n1}")
            if d0 % 4:
                raise ConfigError(f"stage dim {d0} must be divisible by 4 for pixel shuffle")
            if d1 < d0 // 4:
                raise ConfigError(f"LEE channels {d1} below {d0}/4")
        if self.patch_size not in (1, 2, 4):
            raise ConfigError(f"patch size must be 1, 2 or 4, got {self.patch_size}")
        if self.attention not in ("lada", "fastformer"):
            raise ConfigError(f"unknown attention '{self.attention}'")

    @property
    def lee_channels(self) -> Tuple[int, ...]:
        """Output channels of each LEE conv (the next stage's embedding dim)."""
        return tuple(d for _, d in self.stages[1:])

    @property
    def lee_expands(self) -> Tuple[bool, ...]:
        return tuple(k > d0 // 4 for k, (_, d0) in zip(self.lee_channels, self.stages))

    @property
    def resolution(self) -> int:
        return math.isqrt(self.stages[-1][0]) * self.patch_size


@dataclass(frozen=True)
class DiscriminatorConfig:
    resolution: int = 32
    in_channels: int = 3
    stem_channels: int = 64
    down_channels: Tuple[int, ...] = (128,)
    heads: int = 4
    mlp_dim: int = 512
    head_channels: int = 256
    head_convs: int = 2
    attention: str = "lada"
    pos_emb: bool = True
    bn_momentum: float = 0.9
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "down_channels", tuple(int(v) for v in self.down_channels))
        self.validate()

    @property
    def block_side(self) -> int:
        return self.resolution // (2 ** len(self.down_channels))

    @property
    def block_tokens(self) -> int:
        return self.block_side ** 2

    @property
    def block_dim(self) -> int:
        return self.down_channels[-1] if self.down_channels else self.stem_channels

    @property
    def final_side(self) -> int:
        return self.block_side // 2 // (2 ** self.head_convs)

    def validate(self) -> None:
        side = self.resolution
        for _ in self.down_channels:
            if side % 2:
                raise ConfigError(f"resolution {self.resolution} cannot be halved {len(self.down_channels)} times")
            side //= 2
        if side % 2:
            raise ConfigError(f"block map side {side} must be even for space-to-depth")
        if (side // 2) % (2 ** self.head_convs) or side // 2 < 2 ** self.head_convs:
            raise ConfigError(f"map side {side // 2} cannot be halved {self.head_convs} times")
        if self.block_dim % self.heads:
            raise ConfigError(f"block dim {self.block_dim} not divisible by {self.heads} heads")
        if self.attention not in ("lada", "fastformer"):
            raise ConfigError(f"unknown attention '{self.attention}'")


class Generator(Module):
    """Linear(z) -> [Ladaformer -> LEE]* -> Ladaformer -> conv -> pixel shuffle -> tanh."""

    def __init__(self, cfg: GeneratorConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        n0, d0 = cfg.stages[0]
        self.embed = Linear(cfg.latent_dim, n0 * d0, rng)
        self.blocks = [
            GeneratorBlock(BlockConfig(n, d, cfg.heads, cfg.mlp_dim), cfg.latent_dim, rng,
                           variant=cfg.attention, gamma_offset=cfg.gamma_offset, label=f"stage{i}")
            for i, (n, d) in enumerate(cfg.stages)
        ]
        self.lees = [LEE(d, k, rng) for (_, d), k in zip(cfg.stages, cfg.lee_channels)]
        p = cfg.patch_size
        self.to_pixels = Conv2d(cfg.stages[-1][1], cfg.out_channels * p * p, cfg.out_kernel, rng)

    def forward(self, z: Tensor) -> Tensor:
        cfg = self.cfg
        if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
            raise DimensionError(f"z must be [B, {cfg.latent_dim}], got {z.shape}")
        n0, d0 = cfg.stages[0]
        h = self.embed(z).reshape(z.shape[0], n0, d0)
        for i, block in enumerate(self.blocks):
            h = block(h, z)
            if i < len(self.lees):
                h = self.lees[i](h)
        x = self.to_pixels(tokens_to_map(h))
        if cfg.patch_size > 1:
            x = nx.pixel_shuffle(x, cfg.patch_size)
        return nx.tanh(x)

    def attention_modules(self):
        return [b.attn for b in self.blocks]


class DownBlock(Module):
    """Conv residual down block; main and average-pool skip paths are averaged."""

    def __init__(self, in_ch: int, out_ch: int, rng: Rng, momentum: float = 0.9, slope: float = 0.2):
        super().__init__()
        self.slope = slope
        self.conv1 = Conv2d(in_ch, out_ch, 4, rng, stride=2, pad=1)
        self.bn1 = BatchNorm2d(out_ch, momentum)
        self.conv2 = Conv2d(out_ch, out_ch, 3, rng, pad=1)
        self.bn2 = BatchNorm2d(out_ch, momentum)
        self.skip = Conv2d(in_ch, out_ch, 1, rng, pad=0)
        self.bn_skip = BatchNorm2d(out_ch, momentum)

    def forward(self, x: Tensor) -> Tensor:
        s = self.slope
        main = nx.leaky_relu(self.bn1(self.conv1(x)), s)
        main = nx.leaky_relu(self.bn2(self.conv2(main)), s)
        skip = nx.leaky_relu(self.bn_skip(self.skip(nx.avg_pool2(x))), s)
        return (main + skip) * 0.5


class Discriminator(Module):
    """Conv stem -> down blocks -> Ladaformer -> space-to-depth -> strided convs -> logit."""

    def __init__(self, cfg: DiscriminatorConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        self.stem = Conv2d(cfg.in_channels, cfg.stem_channels, 3, rng, pad=1)
        chans = (cfg.stem_channels,) + cfg.down_channels
        self.down = [DownBlock(a, b, rng, cfg.bn_momentum, cfg.slope) for a, b in zip(chans, chans[1:])]
        self.block = DiscriminatorBlock(BlockConfig(cfg.block_tokens, cfg.block_dim, cfg.heads, cfg.mlp_dim,
                                                    residual_mlp=True, modulated=False),
                                        rng, variant=cfg.attention, pos_emb=cfg.pos_emb, label="disc")
        self.squeeze = Conv2d(cfg.block_dim * 4, cfg.head_channels, 1, rng, pad=0)
        self.head = [Conv2d(cfg.head_channels, cfg.head_channels, 4, rng, stride=2, pad=1)
                     for _ in range(cfg.head_convs)]
        self.out = Linear(cfg.head_channels * cfg.final_side ** 2, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1:] != (cfg.in_channels, cfg.resolution, cfg.resolution):
            raise DimensionError(
                f"discriminator expects [B, {cfg.in_channels}, {cfg.resolution}, {cfg.resolution}], got {x.shape}")
        s = cfg.slope
        h = nx.leaky_relu(self.stem(x), s)
        for blk in self.down:
            h = blk(h)
        h = tokens_to_map(self.block(map_to_tokens(h)))
        h = nx.space_to_depth(h, 2)
        h = nx.leaky_relu(self.squeeze(h), s)
        for conv in self.head:
            h = nx.leaky_relu(conv(h), s)
        logits = self.out(h.reshape(h.shape[0], -1))
        return logits.reshape(h.shape[0])

    def attention_modules(self):
        return [self.block.attn]


def generator_forward(z: Tensor, generator: Generator) -> Tensor:
    return generator(z)


def discriminator_forward(x: Tensor, discriminator: Discriminator) -> Tensor:
    return discriminator(x)


def build_models(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, seed: int = 0):
    rng = Rng(seed)
    g = Generator(gen_cfg, rng.spawn(1))
    d = Discriminator(disc_cfg, rng.spawn(2))
    return g, d


TINY_GENERATOR = GeneratorConfig(latent_dim=8, stages=((1, 16), (4, 8)), heads=2, mlp_dim=16, patch_size=2)
TINY_DISCRIMINATOR = DiscriminatorConfig(resolution=4, stem_channels=4, down_channels=(8,), heads=2,
                                         mlp_dim=16, head_channels=8, head_convs=0)
