"""Dense tensor type and reverse-mode gradient propagation.

Backward rules are written in terms of differentiable ``Tensor`` operations,
so running :func:`grad` with ``create_graph=True`` builds a graph of the
gradient itself. That is what the R1 penalty needs (gradient of a gradient
norm). With ``create_graph=False`` the rules run with recording disabled and
cost no more than plain NumPy.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class NumericError(FloatingPointError):
    """Raised when a NaN or Inf shows up where a finite value is required."""


class DimensionError(ValueError):
    """Raised for incompatible shapes."""


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.debug = False


_state = _State()


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def set_grad_enabled(mode: bool):
    prev = _state.grad_enabled
    _state.grad_enabled = bool(mode)
    try:
        yield
    finally:
        _state.grad_enabled = prev


def no_grad():
    return set_grad_enabled(False)


def set_debug(flag: bool) -> None:
    """Toggle per-op finiteness assertions (on in tests, off for training)."""
    _state.debug = bool(flag)


def is_debug() -> bool:
    return _state.debug


_FLOAT_TYPES = (np.float32, np.float64)


class Tensor:
    """Row-major float array with an optional gradient buffer.

    ``grad`` is a plain ndarray filled by :meth:`backward`. Graph bookkeeping
    lives in ``_parents`` / ``_backward``; leaves have ``_backward is None``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._op = ""
        self.name = name

    # -- metadata -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators (implemented in ops) ---------------------------------
    def __add__(self, o):
        return _ops().add(self, o)

    def __radd__(self, o):
        return _ops().add(o, self)

    def __sub__(self, o):
        return _ops().sub(self, o)

    def __rsub__(self, o):
        return _ops().sub(o, self)

    def __mul__(self, o):
        return _ops().mul(self, o)

    def __rmul__(self, o):
        return _ops().mul(o, self)

    def __truediv__(self, o):
        return _ops().div(self, o)

    def __rtruediv__(self, o):
        return _ops().div(o, self)

    def __neg__(self):
        return _ops().neg(self)

    def __matmul__(self, o):
        return _ops().matmul(self, o)

    def __pow__(self, p):
        return _ops().power(self, p)

    def __getitem__(self, idx):
        return _ops().getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return _ops().sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops().mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)

    @property
    def T(self):
        return _ops().transpose(self, None)

    def backward(self, grad_output=None, create_graph: bool = False) -> None:
        backward(self, grad_output, create_graph=create_graph)


def _ops():
    from . import ops

    return ops


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; scalars take the dtype of ``like`` so f32 never silently widens."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Create an op output and record the graph edge when gradients are on."""
    dtype = parents[0].dtype if parents else data.dtype
    for p in parents:
        if p.dtype == np.float64:
            dtype = np.float64
    if data.dtype != dtype:
        data = data.astype(dtype)
    out = Tensor(data)
    out._op = op
    if _state.debug and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite output from op '{op}' with shape {data.shape}")
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _toposort(roots: Iterable[Tensor]) -> list:
    order, seen = [], set()
    for root in roots:
        if id(root) in seen or not root.requires_grad:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def _accumulate(store: dict, key: int, g: Tensor) -> None:
    prev = store.get(key)
    store[key] = g if prev is None else prev + g


def _run(outputs: Sequence[Tensor], grad_outputs: Sequence[Tensor], create_graph: bool,
         capture: Optional[set] = None):
    """Propagate cotangents. Returns (leaf grads, captured grads) keyed by id."""
    order = _toposort(outputs)
    grads: dict = {}
    for o, g in zip(outputs, grad_outputs):
        _accumulate(grads, id(o), g)
    leaves: dict = {}
    captured: dict = {}
    with set_grad_enabled(create_graph):
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if capture is not None and id(node) in capture:
                captured[id(node)] = g
            if node._backward is None:
                leaves[id(node)] = (node, g)
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.shape:
                    raise DimensionError(
                        f"backward of '{node._op}' produced grad {pg.shape} for input {p.shape}")
                _accumulate(grads, id(p), pg)
    return leaves, captured


def backward(root: Tensor, grad_output=None, create_graph: bool = False) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``root`` must be a scalar unless ``grad_output`` is given. Calling twice
    without clearing adds the second set of gradients to the first.
    """
    if grad_output is None:
        if root.size != 1:
            raise ValueError(f"backward() needs a scalar root, got shape {root.shape}")
        grad_output = Tensor(np.ones_like(root.data))
    else:
        grad_output = as_tensor(grad_output, like=root)
    if not root.requires_grad:
        return
    leaves, _ = _run([root], [grad_output], create_graph)
    for leaf, g in leaves.values():
        gd = g.data
        if leaf.grad is None:
            leaf.grad = np.array(gd, dtype=leaf.dtype, copy=True)
        else:
            leaf.grad = leaf.grad + gd


def grad(outputs, inputs, grad_outputs=None, create_graph: bool = False) -> list:
    """Functional gradient: returns d(sum outputs)/d(input) per input.

    Unlike :func:`backward` nothing is written to ``.grad``. Inputs that the
    outputs do not depend on get a zero tensor.
    """
    if isinstance(outputs, Tensor):
        outputs = [outputs]
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    if grad_outputs is None:
        for o in outputs:
            if o.size != 1:
                raise ValueError(f"grad() needs scalar outputs or grad_outputs, got {o.shape}")
        grad_outputs = [Tensor(np.ones_like(o.data)) for o in outputs]
    else:
        if isinstance(grad_outputs, Tensor):
            grad_outputs = [grad_outputs]
        grad_outputs = [as_tensor(g, like=o) for g, o in zip(grad_outputs, outputs)]
    live = [(o, g) for o, g in zip(outputs, grad_outputs) if o.requires_grad]
    captured: dict = {}
    if live:
        _, captured = _run([o for o, _ in live], [g for _, g in live], create_graph,
                           capture={id(t) for t in inputs})
    out = []
    for t in inputs:
        g = captured.get(id(t))
        out.append(g if g is not None else Tensor(np.zeros_like(t.data)))
    return out
