"""Analytic parameter and FLOP accounting.

FLOPs are counted for one forward pass at batch 1. The default convention
counts one multiply-accumulate as one FLOP (``"mac"``); ``"2mac"`` counts it
as two. Only matmuls, convolutions and the attention core are counted;
normalization, activations and bias adds are ignored.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Union

from .models import DiscriminatorConfig, GeneratorConfig
from .nn import Module

CONVENTIONS = {"mac": 1, "2mac": 2}


@dataclass
class CostReport:
    total: int
    breakdown: Dict[str, int] = field(default_factory=OrderedDict)
    unit: str = "params"

    def __int__(self) -> int:
        return self.total

    def table(self) -> str:
        width = max([len(k) for k in self.breakdown] + [5])
        lines = [f"{'part':<{width}}  {self.unit:>14}"]
        lines += [f"{k:<{width}}  {v:>14,}" for k, v in self.breakdown.items()]
        lines.append(f"{'total':<{width}}  {self.total:>14,}")
        return "\n".join(lines)


def _factor(convention: str) -> int:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown FLOP convention '{convention}' (use 'mac' or '2mac')")
    return CONVENTIONS[convention]


def _report(parts: Dict[str, int], unit: str) -> CostReport:
    return CostReport(int(sum(parts.values())), OrderedDict(parts), unit)


# -- primitive counts ------------------------------------------------------------

def matmul_flops(m: int, k: int, n: int, convention: str = "mac") -> int:
    return _factor(convention) * m * k * n


def conv_flops(c_in: int, c_out: int, kernel: int, out_h: int, out_w: int, convention: str = "mac") -> int:
    return _factor(convention) * c_out * c_in * kernel * kernel * out_h * out_w


def attention_core_flops(mechanism: str, tokens: int, dim: int, heads: int = 1,
                         convention: str = "mac") -> int:
    """Attention cost excluding the q/k/v/output projections; ``dim`` is the full width."""
    f = _factor(convention)
    n, d = tokens, dim // heads
    if mechanism == "lada":
        # w.q_i scores, sum alpha_i q_i, then g*k_i and *v_i
        per_head = n * d + n * d + 2 * n * d
    elif mechanism == "fastformer":
        per_head = 2 * n * d + n * d + 2 * n * d + n * d
    elif mechanism in ("dot", "dot-product"):
        per_head = n * n * d + n * n * d
    else:
        raise ValueError(f"unknown attention mechanism '{mechanism}'")
    return f * heads * per_head


def _linear_params(i: int, o: int) -> int:
    return i * o + o


def _conv_params(i: int, o: int, k: int) -> int:
    return i * o * k * k + o


def _attn_params(dim: int, heads: int, variant: str) -> int:
    n = 4 * _linear_params(dim, dim) + dim
    return n + dim if variant == "fastformer" else n


def _mlp_params(dim: int, hidden: int) -> int:
    return _linear_params(dim, hidden) + _linear_params(hidden, dim)


def _block_flops(tokens: int, dim: int, heads: int, mlp: int, variant: str, convention: str) -> int:
    proj = 4 * matmul_flops(tokens, dim, dim, convention)
    core = attention_core_flops(variant, tokens, dim, heads, convention)
    ff = matmul_flops(tokens, dim, mlp, convention) + matmul_flops(tokens, mlp, dim, convention)
    return proj + core + ff


# -- configs --------------------------------------------------------------------

def generator_param_breakdown(cfg: GeneratorConfig) -> Dict[str, int]:
    parts: Dict[str, int] = OrderedDict()
    n0, d0 = cfg.stages[0]
    parts["embed"] = _linear_params(cfg.latent_dim, n0 * d0)
    for i, (n, d) in enumerate(cfg.stages):
        sln = 2 * (2 * (cfg.latent_dim * d + d))
        parts[f"stage{i}"] = n * d + sln + _attn_params(d, cfg.heads, cfg.attention) + _mlp_params(d, cfg.mlp_dim)
        if i < len(cfg.lee_channels):
            parts[f"lee{i}"] = _conv_params(d // 4, cfg.lee_channels[i], 3)
    p = cfg.patch_size
    parts["to_pixels"] = _conv_params(cfg.stages[-1][1], cfg.out_channels * p * p, cfg.out_kernel)
    return parts


def discriminator_param_breakdown(cfg: DiscriminatorConfig) -> Dict[str, int]:
    parts: Dict[str, int] = OrderedDict()
    parts["stem"] = _conv_params(cfg.in_channels, cfg.stem_channels, 3)
    chans = (cfg.stem_channels,) + cfg.down_channels
    for i, (a, b) in enumerate(zip(chans, chans[1:])):
        parts[f"down{i}"] = _conv_params(a, b, 4) + _conv_params(b, b, 3) + _conv_params(a, b, 1) + 3 * 2 * b
    d = cfg.block_dim
    pos = cfg.block_tokens * d if cfg.pos_emb else 0
    parts["block"] = pos + 2 * 2 * d + _attn_params(d, cfg.heads, cfg.attention) + _mlp_params(d, cfg.mlp_dim)
    parts["squeeze"] = _conv_params(4 * d, cfg.head_channels, 1)
    for i in range(cfg.head_convs):
        parts[f"head{i}"] = _conv_params(cfg.head_channels, cfg.head_channels, 4)
    parts["out"] = _linear_params(cfg.head_channels * cfg.final_side ** 2, 1)
    return parts


def generator_flop_breakdown(cfg: GeneratorConfig, convention: str = "mac") -> Dict[str, int]:
    parts: Dict[str, int] = OrderedDict()
    n0, d0 = cfg.stages[0]
    parts["embed"] = matmul_flops(1, cfg.latent_dim, n0 * d0, convention)
    for i, (n, d) in enumerate(cfg.stages):
        # two SLN sites, each with gamma and beta affine maps of z
        sln = 4 * matmul_flops(1, cfg.latent_dim, d, convention)
        parts[f"stage{i}"] = sln + _block_flops(n, d, cfg.heads, cfg.mlp_dim, cfg.attention, convention)
        if i < len(cfg.lee_channels):
            side = 2 * int(round(n ** 0.5))
            parts[f"lee{i}"] = conv_flops(d // 4, cfg.lee_channels[i], 3, side, side, convention)
    side = int(round(cfg.stages[-1][0] ** 0.5))
    p = cfg.patch_size
    parts["to_pixels"] = conv_flops(cfg.stages[-1][1], cfg.out_channels * p * p, cfg.out_kernel, side, side,
                                    convention)
    return parts


def discriminator_flop_breakdown(cfg: DiscriminatorConfig, convention: str = "mac") -> Dict[str, int]:
    parts: Dict[str, int] = OrderedDict()
    r = cfg.resolution
    parts["stem"] = conv_flops(cfg.in_channels, cfg.stem_channels, 3, r, r, convention)
    chans = (cfg.stem_channels,) + cfg.down_channels
    for i, (a, b) in enumerate(zip(chans, chans[1:])):
        r //= 2
        parts[f"down{i}"] = (conv_flops(a, b, 4, r, r, convention) + conv_flops(b, b, 3, r, r, convention)
                             + conv_flops(a, b, 1, r, r, convention))
    d = cfg.block_dim
    parts["block"] = _block_flops(cfg.block_tokens, d, cfg.heads, cfg.mlp_dim, cfg.attention, convention)
    r //= 2
    parts["squeeze"] = conv_flops(4 * d, cfg.head_channels, 1, r, r, convention)
    for i in range(cfg.head_convs):
        r //= 2
        parts[f"head{i}"] = conv_flops(cfg.head_channels, cfg.head_channels, 4, r, r, convention)
    parts["out"] = matmul_flops(1, cfg.head_channels * cfg.final_side ** 2, 1, convention)
    return parts


Countable = Union[GeneratorConfig, DiscriminatorConfig, Module]


def count_params(obj: Countable) -> CostReport:
    """Trainable scalar count with a per-part breakdown."""
    if isinstance(obj, GeneratorConfig):
        return _report(generator_param_breakdown(obj), "params")
    if isinstance(obj, DiscriminatorConfig):
        return _report(discriminator_param_breakdown(obj), "params")
    if isinstance(obj, Module):
        parts: Dict[str, int] = OrderedDict()
        for name, p in obj.named_parameters():
            top = name.split(".")[0]
            parts[top] = parts.get(top, 0) + p.size
        return _report(parts, "params")
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


def count_flops(cfg: Union[GeneratorConfig, DiscriminatorConfig], convention: str = "mac") -> CostReport:
    """Forward FLOPs at batch 1, broken down per stage."""
    if isinstance(cfg, GeneratorConfig):
        return _report(generator_flop_breakdown(cfg, convention), "flops")
    if isinstance(cfg, DiscriminatorConfig):
        return _report(discriminator_flop_breakdown(cfg, convention), "flops")
    raise TypeError(f"cannot count FLOPs of {type(cfg).__name__}")
