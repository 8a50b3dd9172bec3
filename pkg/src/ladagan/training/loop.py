"""Alternating D/G training with gradient-norm instrumentation, metrics and resume."""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Optional

import numpy as np

from .. import numerics as nx
from ..models import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from ..numerics import NumericError, Rng, Tensor
from .augment import AugmentPolicy, diffaugment
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .losses import bcr_penalty, d_loss, g_loss, r1_penalty
from .optim import Adam

CSV_FIELDS = ("step", "d_loss", "g_loss", "r1", "g_grad_norm", "d_grad_norm", "step_ms")


class TrainingError(RuntimeError):
    def __init__(self, message: str, last_checkpoint: Optional[str] = None):
        super().__init__(message if last_checkpoint is None else f"{message} (last good checkpoint: {last_checkpoint})")
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    g_lr: float = 2e-4
    d_lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.99
    adam_eps: float = 1e-8
    r1_gamma: float = 1.0
    augment: str = "translation,color,cutout"
    bcr: bool = True
    bcr_real: float = 1.0
    bcr_fake: float = 1.0
    batch_size: int = 32
    steps: int = 2000
    seed: int = 0
    log_every: int = 1
    ckpt_every: int = 500
    sample_every: int = 500

    def __post_init__(self):
        if self.g_lr < 0 or self.d_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0 <= self.beta1 < self.beta2 < 1:
            raise ValueError(f"Adam betas must satisfy 0 <= b1 < b2 < 1, got {self.beta1}, {self.beta2}")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")
        if self.r1_gamma < 0:
            raise ValueError("r1_gamma must be non-negative")
        AugmentPolicy.parse(self.augment)

    @property
    def policy(self) -> AugmentPolicy:
        return AugmentPolicy.parse(self.augment)


@dataclass
class StepMetrics:
    step: int
    d_loss: float
    g_loss: float
    r1: float
    g_grad_norm: float
    d_grad_norm: float
    step_ms: float
    bcr: float = 0.0
    g_update_norm: float = 0.0
    d_update_norm: float = 0.0

    def csv_row(self) -> List[str]:
        vals = asdict(self)
        return [str(vals["step"])] + [repr(float(vals[k])) for k in CSV_FIELDS[1:]]

    def deterministic(self) -> tuple:
        """All fields except wall time."""
        return tuple(v for k, v in asdict(self).items() if k != "step_ms")

    def finite(self) -> bool:
        return all(math.isfinite(float(v)) for v in asdict(self).values())


def grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


class MetricsWriter:
    """Append-only CSV with a fixed header."""

    def __init__(self, path):
        self.path = os.fspath(path)
        if not os.path.exists(self.path) or os.path.getsize(self.path) == 0:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(CSV_FIELDS)

    def write(self, m: StepMetrics) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(m.csv_row())


def read_metrics(path) -> List[Dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


class Trainer:
    """Owns G, D, both optimizers, the training stream and the step counter."""

    def __init__(self, gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, cfg: TrainConfig,
                 data: np.ndarray):
        if data.ndim != 4 or data.shape[1:] != (disc_cfg.in_channels, disc_cfg.resolution, disc_cfg.resolution):
            raise nx.DimensionError(f"dataset shape {data.shape} does not match discriminator input")
        if gen_cfg.resolution != disc_cfg.resolution:
            raise ValueError(f"generator resolution {gen_cfg.resolution} != discriminator {disc_cfg.resolution}")
        self.gen_cfg, self.disc_cfg, self.cfg = gen_cfg, disc_cfg, cfg
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        root = Rng(cfg.seed)
        self.G = Generator(gen_cfg, root.spawn(1))
        self.D = Discriminator(disc_cfg, root.spawn(2))
        self.rng = root.spawn(3)
        self.g_names = [n for n, _ in self.G.named_parameters()]
        self.d_names = [n for n, _ in self.D.named_parameters()]
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = Adam(self.G.parameters(), cfg.g_lr, betas, cfg.adam_eps)
        self.opt_d = Adam(self.D.parameters(), cfg.d_lr, betas, cfg.adam_eps)
        self.step = 0
        self.last_checkpoint: Optional[str] = None

    # -- sampling ---------------------------------------------------------
    def sample_latents(self, n: int) -> Tensor:
        return Tensor(self.rng.normal((n, self.gen_cfg.latent_dim)))

    def next_batch(self) -> np.ndarray:
        idx = self.rng.integers(0, len(self.data), self.cfg.batch_size)
        return self.data[idx]

    # -- one step ----------------------------------------------------------
    def train_step(self, batch: Optional[np.ndarray] = None) -> StepMetrics:
        cfg, G, D = self.cfg, self.G, self.D
        t0 = time.perf_counter()
        x_real = Tensor(self.next_batch() if batch is None else batch)
        b = x_real.shape[0]
        policy = cfg.policy
        G.train()
        D.train()

        # discriminator update; each term is backpropagated on its own so only
        # one graph is alive at a time (gradients accumulate additively)
        with nx.no_grad():
            x_fake = G(self.sample_latents(b))
        self.opt_d.zero_grad()
        logits_real = D(diffaugment(x_real, self.rng, policy))
        logits_fake = D(diffaugment(x_fake, self.rng, policy))
        adv = d_loss(logits_real, logits_fake)
        self._check("d_loss", adv)
        adv.backward()
        d_total = float(adv.item())
        del logits_real, logits_fake, adv
        r1 = 0.0
        if cfg.r1_gamma > 0:
            D.eval()
            r1_t = r1_penalty(D, x_real, cfg.r1_gamma)
            D.train()
            self._check("r1", r1_t)
            r1_t.backward()
            r1 = float(r1_t.item())
            del r1_t
        bcr = 0.0
        if cfg.bcr and policy.active:
            for lam_r, lam_f in ((cfg.bcr_real, 0.0), (0.0, cfg.bcr_fake)):
                if lam_r == 0 and lam_f == 0:
                    continue
                term = bcr_penalty(D, x_real, x_fake, lam_r, lam_f, self.rng, policy)
                self._check("bcr", term)
                term.backward()
                bcr += float(term.item())
                del term
        d_total += r1 + bcr
        d_norm = grad_norm(D.parameters())
        d_upd = self.opt_d.step()
        self.opt_d.zero_grad()

        # generator update on fresh latents
        self.opt_g.zero_grad()
        x_gen = G(self.sample_latents(b))
        loss_g = g_loss(D(diffaugment(x_gen, self.rng, policy)))
        self._check("g_loss", loss_g)
        loss_g.backward()
        g_total = float(loss_g.item())
        del x_gen, loss_g
        g_norm = grad_norm(G.parameters())
        g_upd = self.opt_g.step()
        self.opt_g.zero_grad()
        self.opt_d.zero_grad()

        self.step += 1
        m = StepMetrics(self.step, d_total, g_total, r1, g_norm, d_norm,
                        (time.perf_counter() - t0) * 1000.0, bcr, g_upd, d_upd)
        if not m.finite():
            raise TrainingError(f"non-finite metrics at step {self.step}: {m}", self.last_checkpoint)
        return m

    def _check(self, what: str, t: Tensor) -> None:
        if not np.isfinite(t.data).all():
            raise TrainingError(f"{what} is not finite at step {self.step + 1}", self.last_checkpoint)

    # -- loop ---------------------------------------------------------------
    def fit(self, steps: int, metrics_path=None, ckpt_dir=None,
            callback: Optional[Callable[["Trainer", StepMetrics], None]] = None) -> List[StepMetrics]:
        writer = MetricsWriter(metrics_path) if metrics_path is not None else None
        history = []
        for _ in range(steps):
            try:
                m = self.train_step()
            except NumericError as exc:
                raise TrainingError(f"numeric error at step {self.step + 1}: {exc}", self.last_checkpoint) from exc
            history.append(m)
            if writer is not None and self.step % max(1, self.cfg.log_every) == 0:
                writer.write(m)
            if ckpt_dir is not None and self.cfg.ckpt_every > 0 and self.step % self.cfg.ckpt_every == 0:
                self.save(os.path.join(ckpt_dir, f"step{self.step:06d}.lada"))
            if callback is not None:
                callback(self, m)
        return history

    # -- state ----------------------------------------------------------------
    def state_entries(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        out.update(self.G.state_arrays("G."))
        out.update(self.D.state_arrays("D."))
        out.update(self.opt_g.state_arrays("opt_g", self.g_names))
        out.update(self.opt_d.state_arrays("opt_d", self.d_names))
        out["rng"] = self.rng.get_state()
        out["step"] = np.array([self.step], dtype=np.uint64)
        return out

    def save(self, path) -> str:
        save_checkpoint(self.state_entries(), path)
        self.last_checkpoint = os.fspath(path)
        return self.last_checkpoint

    def load_state(self, entries: Dict[str, np.ndarray]) -> None:
        """Validate every entry against this trainer, then apply all of them."""
        expected = self.state_entries()
        missing = [k for k in expected if k not in entries]
        if missing:
            raise CheckpointError(f"checkpoint is missing entry '{missing[0]}' ({len(missing)} missing)")
        extra = [k for k in entries if k not in expected]
        if extra:
            raise CheckpointError(f"checkpoint has unexpected entry '{extra[0]}'")
        for k, ref in expected.items():
            if entries[k].shape != ref.shape or entries[k].dtype != ref.dtype:
                raise CheckpointError(f"entry '{k}': stored {entries[k].dtype}{list(entries[k].shape)} "
                                      f"but model needs {ref.dtype}{list(ref.shape)}")
        for prefix, model in (("G.", self.G), ("D.", self.D)):
            for name, p in model.named_parameters(prefix):
                p.data = entries[name].copy()
            for name, owner, attr in model.buffer_items(prefix):
                setattr(owner, attr, entries[name].copy())
        for prefix, opt, names in (("opt_g", self.opt_g, self.g_names), ("opt_d", self.opt_d, self.d_names)):
            opt.state.m = [entries[f"{prefix}.m.{n}"].copy() for n in names]
            opt.state.v = [entries[f"{prefix}.v.{n}"].copy() for n in names]
            opt.state.t = int(entries[f"{prefix}.t"][0])
        self.rng.set_state(entries["rng"])
        self.step = int(entries["step"][0])

    def load(self, path) -> None:
        self.load_state(load_checkpoint(path))
        self.last_checkpoint = os.fspath(path)


def train_step(trainer: Trainer, batch: Optional[np.ndarray] = None) -> StepMetrics:
    return trainer.train_step(batch)
