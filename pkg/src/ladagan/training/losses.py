"""Adversarial losses, R1 and balanced consistency regularization."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .. import numerics as nx
from ..numerics import NumericError, Tensor
from .augment import AugmentPolicy, apply_augment, sample_augment


def d_loss(logits_real: Tensor, logits_fake: Tensor, r1=0.0) -> Tensor:
    """softplus(-D(x)) + softplus(D(G(z))), batch-averaged, plus the R1 term."""
    loss = nx.mean(nx.softplus(-logits_real)) + nx.mean(nx.softplus(logits_fake))
    return loss + r1


def g_loss(logits_fake: Tensor) -> Tensor:
    """Non-saturating generator loss softplus(-D(G(z)))."""
    return nx.mean(nx.softplus(-logits_fake))


def input_gradient(D: Callable[[Tensor], Tensor], x, create_graph: bool = True) -> Tensor:
    """d(sum_b D(x)_b)/dx, i.e. per-sample input gradients when samples are independent."""
    x = Tensor(x.data if isinstance(x, Tensor) else x, requires_grad=True)
    with nx.set_grad_enabled(True):
        out = D(x)
        (gx,) = nx.grad([nx.sum(out)], [x], create_graph=create_graph)
    return gx


def r1_penalty(D: Callable[[Tensor], Tensor], x_real, gamma: float = 1.0) -> Tensor:
    """gamma * mean_b ||grad_x D(x_b)||^2.

    Batch-norm layers should be in eval mode so each sample's gradient does
    not depend on the rest of the batch. The result is differentiable in the
    discriminator parameters (double backward).
    """
    gx = input_gradient(D, x_real, create_graph=True)
    if not np.isfinite(gx.data).all():
        raise NumericError("R1 input gradient is not finite")
    b = gx.shape[0]
    sq = nx.sum((gx * gx).reshape(b, -1), axis=1)
    return nx.mean(sq) * float(gamma)


def bcr_penalty(D: Callable[[Tensor], Tensor], x_real: Tensor, x_fake: Tensor, lambda_real: float,
                lambda_fake: float, rng, policy: AugmentPolicy = AugmentPolicy()) -> Tensor:
    """lambda_r * mean (D(x_r) - D(T x_r))^2 + lambda_f * mean (D(x_f) - D(T x_f))^2."""
    total = None
    for x, lam in ((x_real, lambda_real), (x_fake, lambda_fake)):
        if lam == 0:
            continue
        draw = sample_augment(rng, x.shape, policy)
        diff = D(x) - D(apply_augment(x, draw))
        term = nx.mean(diff * diff) * float(lam)
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.zeros((), dtype=x_real.dtype))
    return total
