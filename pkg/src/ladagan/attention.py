"""Linear additive attention (Lada) and comparison mechanisms.

All head-level functions take ``q, k, v`` shaped ``[..., N, d]`` and treat the
leading axes as batch/head axes. Lada builds one global vector per head from
the queries and pushes it into every token by element-wise products, so no
``N x N`` array is ever formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import numerics as nx
from .nn import Linear, Module, Parameter
from .numerics import DimensionError, Rng, Tensor


def additive_weights(q: Tensor, w: Tensor) -> Tensor:
    """alpha_i = softmax_i(w . q_i / sqrt(d)) over the token axis; returns [..., N]."""
    d = q.shape[-1]
    if w.shape[-1] != d:
        raise DimensionError(f"attention vector has length {w.shape[-1]}, head dim is {d}")
    scores = nx.matmul(q, w.reshape(*w.shape, 1))
    scores = scores.reshape(*scores.shape[:-1])
    return nx.softmax(scores * (1.0 / math.sqrt(d)), axis=-1)


def _global_vector(alpha: Tensor, x: Tensor) -> Tensor:
    # sum_i alpha_i x_i as a [..., 1, N] @ [..., N, d] product -> [..., 1, d]
    return nx.matmul(alpha.reshape(*alpha.shape[:-1], 1, alpha.shape[-1]), x)


def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> None:
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    if q.ndim < 2:
        raise DimensionError(f"q/k/v need a token axis and a feature axis, got {q.shape}")


def lada_head(q: Tensor, k: Tensor, v: Tensor, w: Tensor, return_weights: bool = False):
    """Lada for one head (or a stack of heads): r_i = g * k_i * v_i, g = sum_i alpha_i q_i."""
    _check_qkv(q, k, v)
    alpha = additive_weights(q, w)
    g = _global_vector(alpha, q)
    out = g * k * v
    return (out, alpha) if return_weights else out


def fastformer_head(q: Tensor, k: Tensor, v: Tensor, w_q: Tensor, w_k: Tensor,
                    return_weights: bool = False):
    """Key-compressed variant: a second additive attention pools p_i = g_q * k_i into g_k."""
    _check_qkv(q, k, v)
    alpha = additive_weights(q, w_q)
    g_q = _global_vector(alpha, q)
    p = g_q * k
    beta = additive_weights(p, w_k)
    g_k = _global_vector(beta, p)
    out = g_k * v
    return (out, alpha) if return_weights else out


def dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v with a row-wise softmax; quadratic baseline."""
    _check_qkv(q, k, v)
    d = q.shape[-1]
    scores = nx.matmul(q, nx.swapaxes(k)) * (1.0 / math.sqrt(d))
    return nx.matmul(nx.softmax(scores, axis=-1), v)


# -- traces --------------------------------------------------------------------

@dataclass
class AttentionTrace:
    """Additive attention weights from one forward pass, shaped [B, H, N] or [H, N]."""

    weights: np.ndarray
    label: str = ""

    @property
    def heads(self) -> int:
        return self.weights.shape[-2]

    @property
    def tokens(self) -> int:
        return self.weights.shape[-1]

    def max_normalization_error(self) -> float:
        return float(np.max(np.abs(self.weights.astype(np.float64).sum(axis=-1) - 1.0)))


def extract_attention_maps(trace: AttentionTrace, map_h: Optional[int] = None,
                           map_w: Optional[int] = None) -> np.ndarray:
    """Reshape each head's weights row-major into a map_h x map_w grid."""
    n = trace.tokens
    if map_h is None and map_w is None:
        map_h = map_w = math.isqrt(n)
    elif map_w is None:
        map_w = n // map_h
    elif map_h is None:
        map_h = n // map_w
    if map_h * map_w != n:
        raise DimensionError(f"{n} attention weights cannot fill a {map_h}x{map_w} map")
    return trace.weights.reshape(*trace.weights.shape[:-1], map_h, map_w)


_TRACE_HOOKS: List[Callable] = []


class _HookHandle:
    def __init__(self, fn):
        self.fn = fn

    def remove(self):
        if self.fn in _TRACE_HOOKS:
            _TRACE_HOOKS.remove(self.fn)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.remove()


def add_trace_hook(fn: Callable[["MultiHeadLada", AttentionTrace], None]) -> _HookHandle:
    """Call ``fn(module, trace)`` after every multi-head attention forward."""
    _TRACE_HOOKS.append(fn)
    return _HookHandle(fn)


# -- multi-head wrapper ---------------------------------------------------------

@dataclass
class MultiHeadLadaParams:
    w_q: Tensor
    b_q: Optional[Tensor]
    w_k: Tensor
    b_k: Optional[Tensor]
    w_v: Tensor
    b_v: Optional[Tensor]
    w_o: Tensor
    b_o: Optional[Tensor]
    w: Tensor  # [H, d]
    heads: int
    w_key: Optional[Tensor] = None  # [H, d], fastformer variant only

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def _affine(x: Tensor, w: Tensor, b: Optional[Tensor]) -> Tensor:
    lead = x.shape[:-1]
    y = nx.matmul(x.reshape(-1, x.shape[-1]), w)
    if b is not None:
        y = y + b
    return y.reshape(*lead, w.shape[1])


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, dim = x.shape
    return x.reshape(b, n, heads, dim // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * d)


def multi_head_lada(x: Tensor, params: MultiHeadLadaParams, variant: str = "lada",
                    return_weights: bool = False):
    """Project x to q/k/v, run one Lada head per slice, concatenate, project out.

    ``x`` is [N, D] or [B, N, D].
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    dim, heads = params.dim, params.heads
    if dim % heads:
        raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
    if x.shape[-1] != dim:
        raise DimensionError(f"input width {x.shape[-1]} does not match attention dim {dim}")
    q = _split_heads(_affine(x, params.w_q, params.b_q), heads)
    k = _split_heads(_affine(x, params.w_k, params.b_k), heads)
    v = _split_heads(_affine(x, params.w_v, params.b_v), heads)
    if variant == "lada":
        r, alpha = lada_head(q, k, v, params.w, return_weights=True)
    elif variant == "fastformer":
        r, alpha = fastformer_head(q, k, v, params.w, params.w_key, return_weights=True)
    else:
        raise ValueError(f"unknown attention variant '{variant}'")
    out = _affine(_merge_heads(r), params.w_o, params.b_o)
    if squeeze:
        out = out.reshape(*out.shape[1:])
        alpha = alpha.reshape(*alpha.shape[1:])
    return (out, alpha) if return_weights else out


class MultiHeadLada(Module):
    """Multi-head additive attention (MAA) with full-width projections.

    q/k/v/output projections and the per-head attention vectors are drawn
    from N(0, 0.02^2); biases start at zero.
    """

    def __init__(self, dim: int, heads: int, rng: Rng, variant: str = "lada", std: float = 0.02,
                 label: str = ""):
        super().__init__()
        if dim % heads:
            raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
        if variant not in ("lada", "fastformer"):
            raise ValueError(f"unknown attention variant '{variant}'")
        self.dim, self.heads, self.variant, self.label = dim, heads, variant, label
        self.q_proj = Linear(dim, dim, rng, init="normal", std=std)
        self.k_proj = Linear(dim, dim, rng, init="normal", std=std)
        self.v_proj = Linear(dim, dim, rng, init="normal", std=std)
        self.out_proj = Linear(dim, dim, rng, init="normal", std=std)
        self.w = Parameter(rng.normal((heads, dim // heads), std))
        if variant == "fastformer":
            self.w_key = Parameter(rng.normal((heads, dim // heads), std))
        self.record = False
        self.last_trace: Optional[AttentionTrace] = None

    @property
    def params(self) -> MultiHeadLadaParams:
        return MultiHeadLadaParams(
            self.q_proj.weight, self.q_proj.bias, self.k_proj.weight, self.k_proj.bias,
            self.v_proj.weight, self.v_proj.bias, self.out_proj.weight, self.out_proj.bias,
            self.w, self.heads, getattr(self, "w_key", None))

    def forward(self, x: Tensor) -> Tensor:
        out, alpha = multi_head_lada(x, self.params, self.variant, return_weights=True)
        if self.record or _TRACE_HOOKS:
            trace = AttentionTrace(alpha.data.copy(), self.label)
            if self.record:
                self.last_trace = trace
            for fn in list(_TRACE_HOOKS):
                fn(self, trace)
        return out
