"""Finite-difference gradient suite over primitives and composed losses (f64)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .attention import MultiHeadLada, dot_product_attention, fastformer_head, lada_head
from .ladaformer import LEE, SLN, BlockConfig, DiscriminatorBlock, GeneratorBlock, MLP
from .models import TINY_DISCRIMINATOR, TINY_GENERATOR, Discriminator, Generator
from .nn import Module, layer_norm
from .numerics import GradCheckReport, Rng, Tensor, check_gradients
from .training.losses import d_loss, g_loss, r1_penalty

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.max_rel_err < TOLERANCE


def _leaf(rng: np.random.Generator, *shape, low=None, high=None) -> Tensor:
    if low is not None:
        data = rng.uniform(low, high, shape)
    else:
        data = rng.standard_normal(shape)
    return Tensor(data.astype(np.float64), requires_grad=True)


def _wsum(out: Tensor, rng_seed: int = 99) -> Tensor:
    # random projection so every output coordinate matters
    w = np.random.default_rng(rng_seed).standard_normal(out.shape)
    return nx.sum(out * Tensor(w))


def _module(mod: Module) -> Tuple[List[Tensor], List[str]]:
    mod.to(np.float64)
    named = list(mod.named_parameters())
    for _, p in named:
        # move off the zero init so gradients are generic
        p.data = p.data + np.random.default_rng(len(p.data.reshape(-1))).normal(0, 0.3, p.shape)
    return [p for _, p in named], [n for n, _ in named]


def op_cases(seed: int = 0) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    r = np.random.default_rng(seed)
    cases: Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]] = {}

    def add(name, fn, *params):
        cases[name] = (fn, list(params))

    a, b = _leaf(r, 5, 7), _leaf(r, 7, 3)
    add("matmul", lambda: nx.sum(nx.matmul(a, b)), a, b)
    ba, bb = _leaf(r, 2, 3, 4), _leaf(r, 4, 2)
    add("matmul_batched", lambda: _wsum(nx.matmul(ba, bb)), ba, bb)
    x, w, bias = _leaf(r, 2, 3, 8, 8), _leaf(r, 4, 3, 3, 3), _leaf(r, 4)
    add("conv2d", lambda: _wsum(nx.conv2d(x, w, bias, stride=2, pad=1)), x, w, bias)
    x1, w1 = _leaf(r, 1, 2, 5, 5), _leaf(r, 3, 2, 4, 4)
    add("conv2d_k4_s2", lambda: _wsum(nx.conv2d(x1, w1, None, stride=2, pad=1)), x1, w1)
    g0, wg = _leaf(r, 2, 4, 4, 4), _leaf(r, 4, 3, 3, 3)
    add("conv2d_input_grad", lambda: _wsum(nx.conv2d_input_grad(g0, wg, (2, 3, 8, 8), 2, 1)), g0, wg)
    xw, gw = _leaf(r, 2, 3, 8, 8), _leaf(r, 2, 4, 4, 4)
    add("conv2d_weight_grad", lambda: _wsum(nx.conv2d_weight_grad(xw, gw, (4, 3, 3, 3), 2, 1)), xw, gw)
    logits = _leaf(r, 4)
    target = 2
    add("softmax_cross_entropy", lambda: -nx.log_softmax(logits, -1)[target], logits)
    sm = _leaf(r, 3, 6)
    add("softmax", lambda: _wsum(nx.softmax(sm, axis=-1)), sm)
    add("softmax_axis0", lambda: _wsum(nx.softmax(sm, axis=0)), sm)
    ps = _leaf(r, 2, 8, 3, 3)
    add("pixel_shuffle", lambda: _wsum(nx.pixel_shuffle(ps, 2)), ps)
    sd = _leaf(r, 2, 2, 4, 4)
    add("space_to_depth", lambda: _wsum(nx.space_to_depth(sd, 2)), sd)
    ap = _leaf(r, 2, 2, 4, 4)
    add("avg_pool2", lambda: _wsum(nx.avg_pool2(ap)), ap)
    sh = _leaf(r, 3, 2, 5, 5)
    add("shift2d", lambda: _wsum(nx.shift2d(sh, [1, -2, 0], [0, 1, -1])), sh)
    u, v = _leaf(r, 3, 4), _leaf(r, 4)
    add("add_broadcast", lambda: _wsum(u + v), u, v)
    add("sub_broadcast", lambda: _wsum(u - v), u, v)
    add("mul_broadcast", lambda: _wsum(u * v), u, v)
    pos = _leaf(r, 4, low=0.5, high=2.0)
    add("div_broadcast", lambda: _wsum(u / pos), u, pos)
    add("scale", lambda: _wsum(u * 0.37), u)
    add("neg", lambda: _wsum(-u), u)
    add("power3", lambda: _wsum(nx.power(pos, 3.0)), pos)
    e = _leaf(r, 3, 4)
    add("exp", lambda: _wsum(nx.exp(e)), e)
    add("log", lambda: _wsum(nx.log(pos)), pos)
    add("sqrt", lambda: _wsum(nx.sqrt(pos)), pos)
    add("tanh", lambda: _wsum(nx.tanh(e)), e)
    add("sigmoid", lambda: _wsum(nx.sigmoid(e)), e)
    add("softplus", lambda: _wsum(nx.softplus(e)), e)
    add("erf", lambda: _wsum(nx.erf(e)), e)
    add("gelu", lambda: _wsum(nx.gelu(e)), e)
    add("leaky_relu", lambda: _wsum(nx.leaky_relu(e, 0.2)), e)
    add("sum_axis", lambda: _wsum(nx.sum(e, axis=1)), e)
    add("mean", lambda: _wsum(nx.mean(e, axis=0, keepdims=True)), e)
    add("variance", lambda: _wsum(nx.var(e, axis=-1)), e)
    add("reshape", lambda: _wsum(e.reshape(2, 6)), e)
    add("transpose", lambda: _wsum(e.transpose(1, 0)), e)
    add("getitem", lambda: _wsum(e[1:, ::2]), e)
    c2 = _leaf(r, 2, 4)
    add("concat", lambda: _wsum(nx.concat([e, c2], axis=0)), e, c2)
    emb = _leaf(r, 4)
    add("bias_embedding_add", lambda: _wsum(nx.broadcast_to(emb, (3, 4)) + e), emb, e)
    add("layer_norm", lambda: _wsum(layer_norm(e)), e)
    return cases


def attention_cases(seed: int = 1) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    r = np.random.default_rng(seed)
    cases = {}
    q, k, v, w, w2 = _leaf(r, 6, 4), _leaf(r, 6, 4), _leaf(r, 6, 4), _leaf(r, 4), _leaf(r, 4)
    cases["lada_head"] = (lambda: _wsum(lada_head(q, k, v, w)), [q, k, v, w])
    cases["fastformer_head"] = (lambda: _wsum(fastformer_head(q, k, v, w, w2)), [q, k, v, w, w2])
    cases["dot_product_attention"] = (lambda: _wsum(dot_product_attention(q, k, v)), [q, k, v])
    mha = MultiHeadLada(8, 2, Rng(3))
    params, _ = _module(mha)
    x = _leaf(r, 5, 8)
    cases["multi_head_lada"] = (lambda: _wsum(mha(x)), params + [x])
    return cases


def block_cases(seed: int = 2) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    r = np.random.default_rng(seed)
    rng = Rng(seed)
    cases = {}
    sln = SLN(3, 8)
    sp, _ = _module(sln)
    h, z = _leaf(r, 4, 8), _leaf(r, 3)
    cases["sln"] = (lambda: _wsum(sln(h, z)), sp + [h, z])
    mlp = MLP(4, 8, rng)
    mp, _ = _module(mlp)
    hm = _leaf(r, 3, 4)
    cases["mlp"] = (lambda: _wsum(mlp(hm)), mp + [hm])
    gb = GeneratorBlock(BlockConfig(4, 8, 2, 16), 3, rng)
    gp, _ = _module(gb)
    hg, zg = _leaf(r, 2, 4, 8), _leaf(r, 2, 3)
    cases["generator_block"] = (lambda: _wsum(gb(hg, zg)), gp + [hg, zg])
    db = DiscriminatorBlock(BlockConfig(4, 8, 2, 16, residual_mlp=True, modulated=False), rng)
    dp, _ = _module(db)
    hd = _leaf(r, 2, 4, 8)
    cases["discriminator_block"] = (lambda: _wsum(db(hd)), dp + [hd])
    le = LEE(8, 4, rng)
    lp, _ = _module(le)
    hl = _leaf(r, 2, 4, 8)
    cases["lee"] = (lambda: _wsum(le(hl)), lp + [hl])
    return cases


def _tiny_models(seed: int = 4):
    G = Generator(TINY_GENERATOR, Rng(seed))
    D = Discriminator(TINY_DISCRIMINATOR, Rng(seed + 1))
    gp, gn = _module(G)
    dp, dn = _module(D)
    return G, D, gp, gn, dp, dn


def model_cases(seed: int = 4) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    r = np.random.default_rng(seed)
    G, D, gp, _, dp, _ = _tiny_models(seed)
    z = Tensor(r.standard_normal((2, TINY_GENERATOR.latent_dim)))
    x_real = Tensor(r.uniform(-1, 1, (2, 3, TINY_DISCRIMINATOR.resolution, TINY_DISCRIMINATOR.resolution)))
    cases = {}
    cases["generator_loss"] = (lambda: g_loss(D(G(z))), gp)
    cases["generator_loss_wrt_z"] = (lambda: g_loss(D(G(z))), [z])
    z.requires_grad = True

    buffers = {k: v.copy() for k, v in D.state_arrays().items() if "running" in k}

    def d_objective():
        # restore running stats so repeated calls see the same eval-mode D
        for name, owner, attr in D.buffer_items():
            setattr(owner, attr, buffers[name].copy())
        D.eval()
        r1 = r1_penalty(D, x_real, 1.0)
        D.train()
        with nx.no_grad():
            fake = G(z)
        return d_loss(D(x_real), D(fake), r1)

    cases["discriminator_loss_with_r1"] = (d_objective, dp)
    xin = Tensor(x_real.data.copy(), requires_grad=True)

    def mean_logit():
        D.eval()
        out = nx.mean(D(xin))
        D.train()
        return out

    cases["discriminator_input_grad"] = (mean_logit, [xin])
    return cases


SUITES = {"ops": op_cases, "attention": attention_cases, "blocks": block_cases, "models": model_cases}


def run_suite(names: Optional[Sequence[str]] = None, max_coords: Optional[int] = 24,
              seed: int = 0) -> List[CheckResult]:
    results = []
    for suite in (names or SUITES):
        for name, (fn, params) in SUITES[suite]().items():
            rep = check_gradients(fn, params, eps=1e-5, max_coords=max_coords, seed=seed,
                                  names=[f"{name}[{i}]" for i in range(len(params))])
            results.append(CheckResult(f"{suite}/{name}", rep))
    return results


def format_report(results: Sequence[CheckResult]) -> str:
    lines = []
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"{mark}  {r.name:<40} max rel err {r.report.max_rel_err:.2e}")
    worst = max(results, key=lambda r: r.report.max_rel_err)
    w = worst.report.worst
    lines.append(f"worst offender: {worst.name} {w[0]} index {w[1]} analytic {w[2]:.6g} numeric {w[3]:.6g} "
                 f"(rel err {worst.report.max_rel_err:.2e}, tolerance {TOLERANCE:g})")
    return "\n".join(lines)
