"""Central finite-difference gradient checking (f64 only)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, no_grad


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst: tuple = ()  # (param name, flat index, analytic, numeric)
    per_param: dict = field(default_factory=dict)
    coords_checked: int = 0

    def __float__(self) -> float:
        return self.max_rel_err


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def _scalar(f: Callable[[], Tensor]) -> float:
    out = f()
    val = np.asarray(out.data if isinstance(out, Tensor) else out, dtype=np.float64)
    if val.size != 1:
        raise GradCheckError(f"function must return a scalar, got shape {val.shape}")
    val = float(val.reshape(-1)[0])
    if not np.isfinite(val):
        raise GradCheckError("function value is not finite")
    return val


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
                    max_coords: Optional[int] = 24, seed: int = 0,
                    names: Optional[Sequence[str]] = None) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f()`` against central differences.

    The step for coordinate i is ``eps * max(1, |theta_i|)``. Tensors with more
    than ``max_coords`` entries are checked on a uniform random subset of that
    many coordinates (drawn from ``seed``); ``max_coords=None`` checks all.
    """
    params = list(params)
    names = list(names) if names is not None else [f"param{i}" for i in range(len(params))]
    for p in params:
        if p.dtype != np.float64:
            raise GradCheckError("grad_check runs in f64 mode; convert parameters first")
    for p in params:
        p.data = np.ascontiguousarray(p.data)
        p.grad = None
    out = f()
    if out.size != 1:
        raise GradCheckError(f"function must return a scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise GradCheckError("function value is not finite")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    report = GradCheckReport(0.0)
    with no_grad():
        for p, a, name in zip(params, analytic, names):
            flat = p.data.reshape(-1)
            if max_coords is None or flat.size <= max_coords:
                coords = np.arange(flat.size)
            else:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            worst_here = 0.0
            for i in coords:
                orig = flat[i]
                step = eps * max(1.0, abs(orig))
                flat[i] = orig + step
                fp = _scalar(f)
                flat[i] = orig - step
                fm = _scalar(f)
                flat[i] = orig
                num = (fp - fm) / (2.0 * step)
                ana = float(a.reshape(-1)[i])
                err = relative_error(ana, num)
                worst_here = max(worst_here, err)
                if err >= report.max_rel_err:
                    report.max_rel_err = err
                    report.worst = (name, int(i), ana, num)
            report.per_param[name] = worst_here
            report.coords_checked += len(coords)
    for p in params:
        p.grad = None
    return report


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5, **kw) -> float:
    """Maximum relative error between analytic and numeric gradients."""
    return check_gradients(f, params, eps=eps, **kw).max_rel_err
