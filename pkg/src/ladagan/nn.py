"""Minimal module system: parameters, buffers, and the layers LadaGAN uses."""
from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from . import numerics as nx
from .numerics import Rng, Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, name: Optional[str] = None):
        arr = np.array(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        super().__init__(arr, requires_grad=True, name=name)


class Module:
    """Holds parameters, buffers and child modules, discovered from attributes."""

    def __init__(self):
        self.training = True
        self._buffers: dict = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __setattr__(self, key, value):
        if "_buffers" in self.__dict__ and key in self._buffers:
            self._buffers[key] = value
        object.__setattr__(self, key, value)

    def _children(self):
        for key, val in self.__dict__.items():
            if key.startswith("_"):
                continue
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)) and val and all(isinstance(v, Module) for v in val):
                for i, v in enumerate(val):
                    yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for key, val in self.__dict__.items():
            if isinstance(val, Parameter):
                yield prefix + key, val
        for key, child in self._children():
            yield from child.named_parameters(prefix + key + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple]:
        for key in self._buffers:
            yield prefix + key, self
        for key, child in self._children():
            yield from child.named_buffers(prefix + key + ".")

    def buffer_items(self, prefix: str = "") -> Iterator[tuple]:
        """(name, owner module, attribute) for every buffer."""
        for key in self._buffers:
            yield prefix + key, self, key
        for key, child in self._children():
            yield from child.buffer_items(prefix + key + ".")

    def state_arrays(self, prefix: str = "") -> dict:
        out = {name: p.data for name, p in self.named_parameters(prefix)}
        for name, owner, attr in self.buffer_items(prefix):
            out[name] = getattr(owner, attr)
        return out

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def to(self, dtype) -> "Module":
        """Cast all parameters and buffers in place (f64 is used for grad checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, owner, attr in self.buffer_items():
            setattr(owner, attr, getattr(owner, attr).astype(dtype))
        return self

    def num_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))


# -- initializers -----------------------------------------------------------

def normal_init(rng: Rng, shape, std: float = 0.02) -> np.ndarray:
    return rng.normal(shape, std)


def xavier_uniform(rng: Rng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class Linear(Module):
    """y = x W + b with W stored as [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: Rng, bias: bool = True,
                 init: str = "xavier", std: float = 0.02):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        shape = (in_features, out_features)
        if init == "normal":
            w = normal_init(rng, shape, std)
        elif init == "zeros":
            w = np.zeros(shape, np.float32)
        else:
            w = xavier_uniform(rng, shape, in_features, out_features)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_features, np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise nx.DimensionError(f"Linear expects last dim {self.in_features}, got {x.shape}")
        lead = x.shape[:-1]
        y = nx.matmul(x.reshape(-1, self.in_features), self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(*lead, self.out_features)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: Rng, stride: int = 1,
                 pad: Optional[int] = None, bias: bool = True):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride
        self.pad = kernel // 2 if pad is None else pad
        fan_in, fan_out = in_ch * kernel * kernel, out_ch * kernel * kernel
        self.weight = Parameter(xavier_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, fan_out))
        self.bias = Parameter(np.zeros(out_ch, np.float32)) if bias else None

    def output_size(self, size: int) -> int:
        return nx.conv_output_size(size, self.kernel, self.stride, self.pad)

    def forward(self, x: Tensor) -> Tensor:
        return nx.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


def layer_norm(h: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis: (h - mean) / sqrt(var + eps)."""
    mu = nx.mean(h, -1, keepdims=True)
    d = h - mu
    v = nx.mean(d * d, -1, keepdims=True)
    return d / nx.sqrt(v + eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, np.float32))
        self.bias = Parameter(np.zeros(dim, np.float32))

    def forward(self, h: Tensor) -> Tensor:
        return layer_norm(h, self.eps) * self.weight + self.bias


class BatchNorm2d(Module):
    """Batch statistics in train mode, running averages in eval mode.

    ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.weight = Parameter(np.ones(channels, np.float32))
        self.bias = Parameter(np.zeros(channels, np.float32))
        self.register_buffer("running_mean", np.zeros(channels, np.float32))
        self.register_buffer("running_var", np.ones(channels, np.float32))

    def forward(self, x: Tensor) -> Tensor:
        c = x.shape[1]
        if self.training:
            mu = nx.mean(x, (0, 2, 3), keepdims=True)
            d = x - mu
            v = nx.mean(d * d, (0, 2, 3), keepdims=True)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mu.data.reshape(c)).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var + (1 - m) * v.data.reshape(c)).astype(self.running_var.dtype)
            xhat = d / nx.sqrt(v + self.eps)
        else:
            mu = Tensor(self.running_mean.reshape(1, c, 1, 1))
            inv = Tensor((1.0 / np.sqrt(self.running_var + self.eps)).reshape(1, c, 1, 1).astype(x.dtype))
            xhat = (x - mu) * inv
        return xhat * self.weight.reshape(1, c, 1, 1) + self.bias.reshape(1, c, 1, 1)
