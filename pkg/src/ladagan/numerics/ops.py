"""Differentiable primitives.

Each primitive computes its forward pass in NumPy and states its backward
rule using other primitives, which keeps every rule differentiable again.
"""
from __future__ import annotations

import math
import weakref

import numpy as np
from scipy import special

from .tensor import DimensionError, Tensor, as_tensor, make_result


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _reduce_shape(shape, to_shape):
    nlead = len(shape) - len(to_shape)
    axes = tuple(range(nlead)) + tuple(
        i + nlead for i, s in enumerate(to_shape) if s == 1 and shape[i + nlead] != 1)
    return axes


# -- broadcasting ----------------------------------------------------------

def sum_to(x: Tensor, shape) -> Tensor:
    """Sum ``x`` down to a shape it was broadcast from."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    axes = _reduce_shape(x.shape, shape)
    data = x.data.sum(axis=axes, keepdims=True).reshape(shape)
    src = x.shape
    return make_result(data, (x,), lambda g: (broadcast_to(g, src),), "sum_to")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.broadcast_to(x.data, shape)
    src = x.shape
    return make_result(data, (x,), lambda g: (sum_to(g, src),), "broadcast_to")


# -- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (sum_to(g, sa), sum_to(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (sum_to(g, sa), sum_to(neg(g), sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape

    def bw(g):
        ga = sum_to(g * b, sa) if a.requires_grad else None
        gb = sum_to(g * a, sb) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape

    def bw(g):
        ga = sum_to(g / b, sa) if a.requires_grad else None
        gb = sum_to(neg(g * a / (b * b)), sb) if b.requires_grad else None
        return ga, gb

    return make_result(a.data / b.data, (a, b), bw, "div")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (neg(g),), "neg")


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)
    if p == 2.0:
        return mul(x, x)
    return make_result(x.data ** p, (x,), lambda g: (g * (p * power(x, p - 1.0)),), "power")


# -- elementwise nonlinearities --------------------------------------------

def exp(x: Tensor) -> Tensor:
    ref = None

    def bw(g):
        out = ref()
        return (g * out,)

    out = make_result(np.exp(x.data), (x,), bw, "exp")
    ref = weakref.ref(out)  # no self-cycle; the node is alive whenever bw runs
    return out


def log(x: Tensor) -> Tensor:
    return make_result(np.log(x.data), (x,), lambda g: (g / x,), "log")


def sqrt(x: Tensor) -> Tensor:
    ref = None

    def bw(g):
        out = ref()
        return (g * 0.5 / out,)

    out = make_result(np.sqrt(x.data), (x,), bw, "sqrt")
    ref = weakref.ref(out)
    return out


def tanh(x: Tensor) -> Tensor:
    ref = None

    def bw(g):
        out = ref()
        return (g * (1.0 - out * out),)

    out = make_result(np.tanh(x.data), (x,), bw, "tanh")
    ref = weakref.ref(out)
    return out


def sigmoid(x: Tensor) -> Tensor:
    ref = None

    def bw(g):
        out = ref()
        return (g * out * (1.0 - out),)

    out = make_result(special.expit(x.data), (x,), bw, "sigmoid")
    ref = weakref.ref(out)
    return out


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    return make_result(np.logaddexp(0.0, x.data), (x,), lambda g: (g * sigmoid(x),), "softplus")


_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def erf(x: Tensor) -> Tensor:
    return make_result(special.erf(x.data), (x,),
                       lambda g: (g * (_TWO_OVER_SQRT_PI * exp(neg(x * x))),), "erf")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x).

    Fused so only ``x`` is kept for backward; the derivative
    Phi(x) + x phi(x) is rebuilt from Tensor ops, so it stays differentiable.
    """
    xd = x.data
    out = xd * (0.5 * (1.0 + special.erf(xd * (1.0 / math.sqrt(2.0)))))

    def backward(g):
        cdf = 0.5 * (1.0 + erf(x * (1.0 / math.sqrt(2.0))))
        pdf = exp(x * x * -0.5) * (1.0 / math.sqrt(2.0 * math.pi))
        return (g * (cdf + x * pdf),)

    return make_result(out, (x,), backward, "gelu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    slope_arr = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    mask = Tensor(slope_arr)
    return make_result(x.data * slope_arr, (x,), lambda g: (g * mask,), "leaky_relu")


# -- reductions ------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)
    src = x.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def bw(g):
        if not keepdims:
            g = reshape(g, kept)
        return (broadcast_to(g, src),)

    return make_result(np.asarray(data), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    return sum(x, axes, keepdims) * (1.0 / count)


def var(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Population variance."""
    mu = mean(x, axis, keepdims=True)
    d = x - mu
    return mean(d * d, axis, keepdims)


def amax(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Max as a constant (no gradient); used for numerical shifts only."""
    return Tensor(np.max(x.data, axis=axis, keepdims=keepdims))


# -- shape ops ---------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = x.data.reshape(shape)
    src = x.shape
    return make_result(data, (x,), lambda g: (reshape(g, src),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(x.data.transpose(axes), (x,), lambda g: (transpose(g, inv),), "transpose")


def swapaxes(x: Tensor, a: int = -1, b: int = -2) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: Tensor, idx) -> Tensor:
    src = x.shape
    return make_result(np.asarray(x.data[idx]), (x,), lambda g: (_scatter(g, idx, src),), "getitem")


def _scatter(g: Tensor, idx, shape) -> Tensor:
    data = np.zeros(shape, dtype=g.dtype)
    np.add.at(data, idx, g.data)
    return make_result(data, (g,), lambda gg: (getitem(gg, idx),), "scatter")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(bounds[i]), int(bounds[i + 1]))
            out.append(getitem(g, tuple(sl)))
        return tuple(out)

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw, "concat")


# -- linear algebra -------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both operands >= 2-D)."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    sa, sb = a.shape, b.shape

    def bw(g):
        ga = sum_to(matmul(g, swapaxes(b)), sa) if a.requires_grad else None
        gb = sum_to(matmul(swapaxes(a), g), sb) if b.requires_grad else None
        return ga, gb

    return make_result(np.matmul(a.data, b.data), (a, b), bw, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max subtraction."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)
    ref = None

    def bw(g):
        out = ref()
        return (out * (g - sum(g * out, axis, keepdims=True)),)

    out = make_result(data, (x,), bw, "softmax")
    ref = weakref.ref(out)
    return out


softmax_axis = softmax


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = amax(x, axis, keepdims=True)
    s = x - shift
    return s - log(sum(exp(s), axis, keepdims=True))
