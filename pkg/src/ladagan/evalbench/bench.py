"""Single-threaded attention scaling benchmark with log-log slope fits."""
from __future__ import annotations

import csv
import io
import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .. import numerics as nx
from ..accounting import attention_core_flops
from ..attention import dot_product_attention, lada_head
from ..numerics import Rng, Tensor

MECHANISMS = ("lada", "dot-product")


class BenchmarkError(RuntimeError):
    pass


@dataclass
class BenchRecord:
    mechanism: str
    N: int
    d: int
    median_us: float
    flops: int
    reps: int = 0
    peak_bytes: int = 0


@dataclass
class BenchResult:
    records: List[BenchRecord]
    slopes: Dict[str, float]

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mechanism", "N", "d", "median_us", "flops"])
        for r in self.records:
            w.writerow([r.mechanism, r.N, r.d, f"{r.median_us:.3f}", r.flops])
        return buf.getvalue()

    def markdown(self) -> str:
        lines = ["| mechanism | N | d | median (us) | FLOPs | peak alloc (bytes) |",
                 "|---|---:|---:|---:|---:|---:|"]
        for r in self.records:
            lines.append(f"| {r.mechanism} | {r.N} | {r.d} | {r.median_us:.1f} | {r.flops} | {r.peak_bytes} |")
        lines.append("")
        lines.append("| mechanism | log-log slope |")
        lines.append("|---|---:|")
        for m, s in self.slopes.items():
            lines.append(f"| {m} | {s:.3f} |")
        return "\n".join(lines) + "\n"

    def time_ratio(self, mechanism: str) -> float:
        recs = sorted((r for r in self.records if r.mechanism == mechanism), key=lambda r: r.N)
        return recs[-1].median_us / recs[0].median_us

    def flop_ratio(self, mechanism: str) -> float:
        recs = sorted((r for r in self.records if r.mechanism == mechanism), key=lambda r: r.N)
        return recs[-1].flops / recs[0].flops


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def _kernel(mechanism: str, q, k, v, w) -> Callable[[], Tensor]:
    if mechanism == "lada":
        return lambda: lada_head(q, k, v, w)
    if mechanism in ("dot", "dot-product"):
        return lambda: dot_product_attention(q, k, v)
    raise ValueError(f"unknown mechanism '{mechanism}'")


def peak_alloc_bytes(fn: Callable[[], object]) -> int:
    """Peak traced allocation while ``fn`` runs (numpy buffers are traced)."""
    was = tracemalloc.is_tracing()
    if not was:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    out = fn()
    _, peak = tracemalloc.get_traced_memory()
    del out
    if not was:
        tracemalloc.stop()
    return int(peak - base)


def time_kernel(fn: Callable[[], object], reps: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    times = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times[i] = time.perf_counter_ns() - t0
    return times


def scaling_benchmark(mechanisms: Sequence[str] = MECHANISMS, Ns: Sequence[int] = (256, 1024, 4096),
                      d: int = 64, reps: int = 20, warmup: int = 3, batch: int = 8, seed: int = 0,
                      threads: int = 1) -> BenchResult:
    """Median wall time per (mechanism, N) at fixed head dim ``d``.

    ``batch`` stacks independent heads so the smallest N is not dominated by
    interpreter overhead. Lada runs are also checked to never allocate an
    N x N buffer once N >= 8d.
    """
    if reps < 20 or warmup < 3:
        raise BenchmarkError("need at least 20 repetitions after 3 warmups")
    res = time.get_clock_info("perf_counter").resolution
    rng = Rng(seed)
    records: List[BenchRecord] = []
    with threadpool_limits(limits=threads), nx.no_grad():
        for mech in mechanisms:
            for n in Ns:
                q, k, v = (Tensor(rng.normal((batch, n, d))) for _ in range(3))
                w = Tensor(rng.normal((d,)))
                fn = _kernel(mech, q, k, v, w)
                times = time_kernel(fn, reps, warmup)
                med_ns = float(np.median(times))
                if med_ns * 1e-9 < 20 * res:
                    raise BenchmarkError(
                        f"{mech} at N={n}: median {med_ns:.0f} ns is under 20 timer ticks "
                        f"({res * 1e9:.0f} ns each); use larger N, batch or reps")
                peak = peak_alloc_bytes(fn)
                # below N = 8d a stack of N x N buffers is no bigger than the N x d ones
                nn_bytes = batch * n * n * q.dtype.itemsize
                if mech == "lada" and n >= 8 * d and peak >= nn_bytes:
                    raise BenchmarkError(f"lada at N={n} allocated {peak} bytes, enough for N x N buffers")
                flops = batch * attention_core_flops(mech if mech == "lada" else "dot", n, d, 1)
                records.append(BenchRecord(mech, n, d, med_ns / 1e3, flops, reps, peak))
    slopes = {}
    for mech in mechanisms:
        recs = [r for r in records if r.mechanism == mech]
        slopes[mech] = fit_loglog_slope([r.N for r in recs], [r.median_us for r in recs])
    return BenchResult(records, slopes)
