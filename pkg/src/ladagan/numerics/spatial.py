"""Image-layout primitives on NCHW tensors: convolution, shuffles, pooling, shifts.

The three convolution primitives form a closed set under differentiation:
the adjoint of ``conv2d`` in its input is ``conv2d_input_grad`` and in its
kernel is ``conv2d_weight_grad``, and each of those differentiates back into
the other two. That is what makes double backward through a convolutional
discriminator possible.
"""
from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, make_result


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _check_conv(x_shape, w_shape, stride, pad):
    if len(x_shape) != 4 or len(w_shape) != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x_shape} and {w_shape}")
    _, c, h, w = x_shape
    k, kc, kh, kw = w_shape
    if kc != c:
        raise DimensionError(f"conv2d channel mismatch: input {x_shape}, kernel {w_shape}")
    if stride < 1:
        raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Patch matrix [B*H'*W', kh*kw*C] with columns ordered (i, j, c)."""
    b, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if kh == 1 and kw == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride][:, :, :ho, :wo]
        return xs.transpose(0, 2, 3, 1).reshape(b * ho * wo, c), ho, wo
    xp = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((b, ho, wo, kh, kw, c), dtype=x.dtype)
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + he:stride, j:j + we:stride, :]
    return cols.reshape(b * ho * wo, kh * kw * c), ho, wo


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    b = x.shape[0]
    k = w.shape[0]
    cols, ho, wo = _im2col(x, w.shape[2], w.shape[3], stride, pad)
    y = cols @ w.transpose(0, 2, 3, 1).reshape(k, -1).T
    return np.ascontiguousarray(y.reshape(b, ho, wo, k).transpose(0, 3, 1, 2))


def _conv_input_grad(gy: np.ndarray, w: np.ndarray, x_shape, stride: int, pad: int) -> np.ndarray:
    b, c, h, wd = x_shape
    k, _, kh, kw = w.shape
    _, _, ho, wo = gy.shape
    # one GEMM to per-tap contributions, then strided adds in NHWC layout
    gmat = gy.transpose(0, 2, 3, 1).reshape(b * ho * wo, k)
    gcols = (gmat @ w.transpose(0, 2, 3, 1).reshape(k, -1)).reshape(b, ho, wo, kh, kw, c)
    dxp = np.zeros((b, h + 2 * pad, wd + 2 * pad, c), dtype=gy.dtype)
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + he:stride, j:j + we:stride, :] += gcols[:, :, :, i, j, :]
    return np.ascontiguousarray(dxp[:, pad:pad + h, pad:pad + wd, :].transpose(0, 3, 1, 2))


def _conv_weight_grad(x: np.ndarray, gy: np.ndarray, w_shape, stride: int, pad: int) -> np.ndarray:
    k, c, kh, kw = w_shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    gmat = gy.transpose(0, 2, 3, 1).reshape(-1, k)
    gw = (gmat.T @ cols).reshape(k, kh, kw, c)
    return np.ascontiguousarray(gw.transpose(0, 3, 1, 2))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding; ``weight`` is [K, C, kh, kw]."""
    _check_conv(x.shape, weight.shape, stride, pad)
    x_shape, w_shape = x.shape, weight.shape

    def bw(g):
        gx = conv2d_input_grad(g, weight, x_shape, stride, pad) if x.requires_grad else None
        gw = conv2d_weight_grad(x, g, w_shape, stride, pad) if weight.requires_grad else None
        return gx, gw

    y = make_result(_conv_forward(x.data, weight.data, stride, pad), (x, weight), bw, "conv2d")
    if bias is not None:
        y = y + bias.reshape(1, -1, 1, 1)
    return y


def conv2d_input_grad(g: Tensor, weight: Tensor, x_shape, stride: int, pad: int) -> Tensor:
    """Adjoint of conv2d in its input (a transposed convolution)."""
    w_shape = weight.shape

    def bw(gg):
        d_g = conv2d(gg, weight, stride=stride, pad=pad) if g.requires_grad else None
        d_w = conv2d_weight_grad(gg, g, w_shape, stride, pad) if weight.requires_grad else None
        return d_g, d_w

    data = _conv_input_grad(g.data, weight.data, tuple(x_shape), stride, pad)
    return make_result(data, (g, weight), bw, "conv2d_input_grad")


def conv2d_weight_grad(x: Tensor, g: Tensor, w_shape, stride: int, pad: int) -> Tensor:
    """Adjoint of conv2d in its kernel."""
    x_shape = x.shape

    def bw(gw):
        d_x = conv2d_input_grad(g, gw, x_shape, stride, pad) if x.requires_grad else None
        d_g = conv2d(x, gw, stride=stride, pad=pad) if g.requires_grad else None
        return d_x, d_g

    data = _conv_weight_grad(x.data, g.data, tuple(w_shape), stride, pad)
    return make_result(data, (x, g), bw, "conv2d_weight_grad")


# -- channel/space permutations -------------------------------------------

def _shuffle_np(x: np.ndarray, r: int) -> np.ndarray:
    b, cr2, h, w = x.shape
    c = cr2 // (r * r)
    return x.reshape(b, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, c, h * r, w * r)


def _unshuffle_np(x: np.ndarray, r: int) -> np.ndarray:
    b, c, hr, wr = x.shape
    h, w = hr // r, wr // r
    return x.reshape(b, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(b, c * r * r, h, w)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """[B, C*r*r, H, W] -> [B, C, H*r, W*r].

    Channel ``c*r*r + dy*r + dx`` lands in output channel ``c`` at offset
    ``(dy, dx)`` of each r x r cell.
    """
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects 4-D input, got {x.shape}")
    if r < 1 or x.shape[1] % (r * r):
        raise DimensionError(f"pixel_shuffle: {x.shape[1]} channels not divisible by r^2={r * r}")
    if r == 1:
        return x
    return make_result(_shuffle_np(x.data, r), (x,), lambda g: (space_to_depth(g, r),), "pixel_shuffle")


def space_to_depth(x: Tensor, r: int) -> Tensor:
    """[B, C, H*r, W*r] -> [B, C*r*r, H, W]; exact inverse of :func:`pixel_shuffle`."""
    if x.ndim != 4:
        raise DimensionError(f"space_to_depth expects 4-D input, got {x.shape}")
    if r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise DimensionError(f"space_to_depth: spatial extents {x.shape[2:]} not divisible by r={r}")
    if r == 1:
        return x
    return make_result(_unshuffle_np(x.data, r), (x,), lambda g: (pixel_shuffle(g, r),), "space_to_depth")


# -- pooling ------------------------------------------------------------------

def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2 needs even spatial extents, got {x.shape}")
    data = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return make_result(data, (x,), lambda g: (_avg_pool2_adjoint(g),), "avg_pool2")


def _avg_pool2_adjoint(g: Tensor) -> Tensor:
    b, c, h, w = g.shape
    data = np.broadcast_to(g.data[:, :, :, None, :, None] * 0.25, (b, c, h, 2, w, 2)).reshape(b, c, 2 * h, 2 * w)
    return make_result(data, (g,), lambda gg: (avg_pool2(gg),), "avg_pool2_adjoint")


# -- per-sample integer translation -------------------------------------------

def _shift_np(x: np.ndarray, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    h, w = x.shape[2], x.shape[3]
    for i in range(x.shape[0]):
        sy, sx = int(dy[i]), int(dx[i])
        ys, yd = (slice(0, h - sy), slice(sy, h)) if sy >= 0 else (slice(-sy, h), slice(0, h + sy))
        xs, xd = (slice(0, w - sx), slice(sx, w)) if sx >= 0 else (slice(-sx, w), slice(0, w + sx))
        out[i, :, yd, xd] = x[i, :, ys, xs]
    return out


def shift2d(x: Tensor, dy, dx) -> Tensor:
    """Translate each sample by integer offsets, filling vacated pixels with zero.

    ``out[b, :, i, j] = x[b, :, i - dy[b], j - dx[b]]`` where in range.
    """
    dy = np.asarray(dy, dtype=np.int64)
    dx = np.asarray(dx, dtype=np.int64)
    return make_result(_shift_np(x.data, dy, dx), (x,), lambda g: (shift2d(g, -dy, -dx),), "shift2d")
