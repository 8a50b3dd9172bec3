"""Command-line entry point: ``ladagan <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import numerics as nx
from .accounting import count_flops, count_params
from .config import RunConfig
from .data import DatasetError, load_dataset
from .evalbench import BenchmarkError, DeskFeatures, desk_stats, frechet_distance, interpolate_latents, scaling_benchmark
from .imaging import save_grid, save_map, tile
from .models import ConfigError, Generator
from .numerics import Rng, Tensor
from .training import CheckpointError, Trainer, TrainingError, load_checkpoint

log = logging.getLogger("ladagan")


class CliError(Exception):
    pass


def _run_config(args) -> RunConfig:
    return RunConfig.load(args.config, args.set or [])


def load_generator(cfg: RunConfig, path: str) -> Generator:
    """Build G from the config and fill it from the ``G.*`` entries of a checkpoint."""
    if not path:
        raise CliError("this command needs a checkpoint (--checkpoint PATH or checkpoint = PATH)")
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path}")
    entries = load_checkpoint(path)
    G = Generator(cfg.gen_config(), Rng(0))
    for name, p in G.named_parameters("G."):
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing entry '{name}'; was it written with the same config?")
        if entries[name].shape != p.shape:
            raise CheckpointError(f"entry '{name}' has shape {entries[name].shape}, config needs {p.shape}")
    for name, p in G.named_parameters("G."):
        p.data = entries[name].copy()
    return G.eval()


def _samples(G: Generator, seed: int, n: int) -> np.ndarray:
    z = Rng(seed).normal((n, G.cfg.latent_dim))
    with nx.no_grad():
        return G(Tensor(z)).data


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = args.out_dir or cfg["out_dir"]
    data = load_dataset(cfg["data.format"], cfg["data.path"], cfg.gen_config().resolution,
                        int(cfg["data.count"]), int(cfg["data.seed"]))
    tc = cfg.train_config()
    trainer = Trainer(cfg.gen_config(), cfg.disc_config(), tc, data)
    if args.resume:
        trainer.load(args.resume)
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    os.makedirs(os.path.join(out, "samples"), exist_ok=True)
    cfg.write(out)
    print(f"run dir {out}: r1_gamma={tc.r1_gamma} g_lr={tc.g_lr} d_lr={tc.d_lr} batch={tc.batch_size} "
          f"augment={tc.augment} bcr={tc.bcr}")
    feats = DeskFeatures(thumb=min(8, cfg.gen_config().resolution))
    real_stats = desk_stats(data[: min(len(data), 1000)], feats)
    fd_path = os.path.join(out, "frechet.csv")
    if not os.path.exists(fd_path):
        with open(fd_path, "w") as fh:
            fh.write("step,desk_fd\n")
    fixed_seed = int(cfg["seed"]) + 1

    def evaluate(tr: Trainer):
        imgs = _samples(tr.G, fixed_seed, 64)
        save_grid(imgs, os.path.join(out, "samples", f"step{tr.step:06d}.png"), cols=8)
        n_eval = min(len(data), 500)
        gen = np.concatenate([_samples(tr.G, fixed_seed + 1 + i, 50) for i in range((n_eval + 49) // 50)])
        fd = frechet_distance(desk_stats(gen[:n_eval], feats), real_stats)
        with open(fd_path, "a") as fh:
            fh.write(f"{tr.step},{fd!r}\n")
        print(f"step {tr.step}: desk_fd={fd:.4f}")

    def callback(tr: Trainer, m):
        if m.step % max(1, tc.log_every) == 0:
            print(f"step {m.step}: d_loss={m.d_loss:.4f} g_loss={m.g_loss:.4f} r1={m.r1:.4f} "
                  f"|gG|={m.g_grad_norm:.3g} |gD|={m.d_grad_norm:.3g} {m.step_ms:.0f}ms")
        if tc.sample_every > 0 and m.step % tc.sample_every == 0:
            evaluate(tr)

    remaining = max(0, tc.steps - trainer.step)
    if trainer.step == 0 and tc.sample_every > 0:
        evaluate(trainer)
    try:
        trainer.fit(remaining, os.path.join(out, "metrics.csv"), os.path.join(out, "checkpoints"), callback)
    except KeyboardInterrupt:
        path = trainer.save(os.path.join(out, "checkpoints", f"interrupt{trainer.step:06d}.lada"))
        print(f"interrupted; wrote {path}")
        return 130
    final = trainer.save(os.path.join(out, "checkpoints", "final.lada"))
    print(f"done at step {trainer.step}; final checkpoint {final}")
    return 0


def cmd_sample(args) -> int:
    cfg = _run_config(args)
    G = load_generator(cfg, args.checkpoint or cfg["checkpoint"])
    save_grid(_samples(G, args.seed, args.n), args.out, cols=8)
    print(f"wrote {args.out}")
    return 0


def cmd_interpolate(args) -> int:
    cfg = _run_config(args)
    G = load_generator(cfg, args.checkpoint or cfg["checkpoint"])
    rng = Rng(args.seed)
    z1, z2 = rng.normal((G.cfg.latent_dim,)), rng.normal((G.cfg.latent_dim,))
    res = interpolate_latents(z1, z2, args.steps, G)
    save_grid(res.frames, args.out, cols=args.steps)
    print(f"wrote {args.out}")
    return 0


def cmd_attn_maps(args) -> int:
    cfg = _run_config(args)
    G = load_generator(cfg, args.checkpoint or cfg["checkpoint"])
    z = Rng(args.seed).normal((G.cfg.latent_dim,))
    res = interpolate_latents(z, z, 2, G)
    os.makedirs(args.out_dir, exist_ok=True)
    count = 0
    for label, maps in res.maps.items():
        for h in range(maps.shape[1]):
            save_map(maps[0, h], os.path.join(args.out_dir, f"{label}_head{h}.png"), args.scale)
            count += 1
    print(f"wrote {count} maps to {args.out_dir}")
    return 0


def cmd_bench(args) -> int:
    res = scaling_benchmark(Ns=tuple(args.n), d=args.d, reps=args.reps, batch=args.batch)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "bench.csv"), "w") as fh:
        fh.write(res.csv())
    with open(os.path.join(args.out_dir, "bench.md"), "w") as fh:
        fh.write(res.markdown())
    print(res.markdown())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import format_report, run_suite

    results = run_suite(args.suite or None, max_coords=args.max_coords)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_flops(args) -> int:
    cfg = _run_config(args)
    g, d = cfg.gen_config(), cfg.disc_config()
    conv = args.convention
    print(f"generator FLOPs ({conv}, batch 1)")
    print(count_flops(g, conv).table())
    print(f"\ndiscriminator FLOPs ({conv}, batch 1)")
    print(count_flops(d, conv).table())
    pg, pd = count_params(g), count_params(d)
    print(f"\nparameters: generator {pg.total:,}  discriminator {pd.total:,}  total {pg.total + pd.total:,}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ladagan", description="LadaGAN training, sampling and diagnostics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        return sp

    sp = with_config(sub.add_parser("train", help="train G and D"))
    sp.add_argument("--out-dir")
    sp.add_argument("--resume", help="checkpoint to resume from")
    sp.set_defaults(fn=cmd_train)

    sp = with_config(sub.add_parser("sample", help="8x8 sample grid from a checkpoint"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--out", default="samples.png")
    sp.set_defaults(fn=cmd_sample)

    sp = with_config(sub.add_parser("interpolate", help="latent interpolation strip"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--steps", type=int, default=8)
    sp.add_argument("--out", default="interpolation.png")
    sp.set_defaults(fn=cmd_interpolate)

    sp = with_config(sub.add_parser("attn-maps", help="per-stage, per-head attention maps"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", type=int, default=8, help="nearest-neighbour upscaling factor")
    sp.add_argument("--out-dir", default="attn_maps")
    sp.set_defaults(fn=cmd_attn_maps)

    sp = sub.add_parser("bench", help="attention scaling benchmark")
    sp.add_argument("--n", type=int, nargs="+", default=[256, 1024, 4096])
    sp.add_argument("--d", type=int, default=64)
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--out-dir", default="bench")
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite on tiny configs")
    sp.add_argument("--suite", action="append", choices=["ops", "attention", "blocks", "models"])
    sp.add_argument("--max-coords", type=int, default=24)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = with_config(sub.add_parser("flops", help="per-stage FLOP and parameter table"))
    sp.add_argument("--convention", choices=["mac", "2mac"], default="mac")
    sp.set_defaults(fn=cmd_flops)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DatasetError, CheckpointError, CliError, BenchmarkError, TrainingError,
            nx.DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
