"""Frechet proxy, scaling benchmark and latent interpolation."""
import types

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ladagan.evalbench import (BenchmarkError, DeskFeatures, FrechetStats, desk_stats, fit_loglog_slope,
                               frechet_distance, generate_with_maps, interpolate_latents, scaling_benchmark)
from ladagan.evalbench.bench import peak_alloc_bytes
from ladagan.models import Generator, GeneratorConfig
from ladagan.numerics import DimensionError, NumericError, Rng, Tensor

SMALL_G = GeneratorConfig(latent_dim=16, stages=((4, 32), (16, 16), (64, 8)), heads=2, mlp_dim=32)


def _random_psd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def oracle_fd(mu1, s1, mu2, s2):
    # scipy sqrtm on the product; independent of the eigh-based implementation
    covmean = scipy.linalg.sqrtm(s1 @ s2).real
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(s1 + s2 - 2 * covmean))


class TestFrechet:
    def test_identical_is_zero(self, rng):
        s = FrechetStats(rng.standard_normal(4), _random_psd(rng, 4))
        assert frechet_distance(s, s) == pytest.approx(0.0, abs=1e-9)

    def test_identity_covariance_is_exactly_zero(self):
        s = FrechetStats(np.zeros(3), np.eye(3))
        assert frechet_distance(s, s) == 0.0

    def test_one_dimensional(self):
        a = FrechetStats(np.array([0.0]), np.array([[1.0]]))
        b = FrechetStats(np.array([3.0]), np.array([[1.0]]))
        assert frechet_distance(a, b) == pytest.approx(9.0, abs=1e-12)

    def test_two_dimensional_oracle(self, rng):
        for _ in range(20):
            m1, m2 = rng.standard_normal(2), rng.standard_normal(2)
            s1, s2 = _random_psd(rng, 2), _random_psd(rng, 2)
            ref = oracle_fd(m1, s1, m2, s2)
            got = frechet_distance(FrechetStats(m1, s1), FrechetStats(m2, s2))
            assert abs(got - ref) / abs(ref) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_symmetric_and_nonnegative(self, d, seed):
        r = np.random.default_rng(seed)
        a = FrechetStats(r.standard_normal(d), _random_psd(r, d))
        b = FrechetStats(r.standard_normal(d), _random_psd(r, d))
        ab, ba = frechet_distance(a, b), frechet_distance(b, a)
        assert ab >= 0 and ab == pytest.approx(ba, rel=1e-8, abs=1e-10)

    def test_singular_covariance(self):
        s = FrechetStats(np.zeros(2), np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert frechet_distance(s, s) == pytest.approx(0.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            frechet_distance(FrechetStats(np.zeros(2), np.eye(2)), FrechetStats(np.zeros(3), np.eye(3)))

    def test_not_psd(self):
        bad = FrechetStats(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(NumericError):
            frechet_distance(bad, bad)


class TestDeskFeatures:
    def test_pixel_features(self, rng):
        f = DeskFeatures()
        imgs = rng.uniform(-1, 1, (5, 3, 32, 32))
        out = f(imgs)
        assert out.shape == (5, 64) and f.dim == 64
        gray = 0.299 * imgs[:, 0] + 0.587 * imgs[:, 1] + 0.114 * imgs[:, 2]
        np.testing.assert_allclose(out[0, 0], gray[0, :4, :4].mean(), atol=1e-6)

    def test_projection_is_seeded(self, rng):
        imgs = rng.uniform(-1, 1, (4, 3, 16, 16))
        a, b = DeskFeatures(32, seed=3)(imgs), DeskFeatures(32, seed=3)(imgs)
        assert a.shape == (4, 32) and np.array_equal(a, b)

    def test_stats(self, rng):
        s = desk_stats(rng.uniform(-1, 1, (50, 3, 32, 32)))
        assert s.mu.shape == (64,) and np.allclose(s.sigma, s.sigma.T)

    def test_bad_size(self, rng):
        with pytest.raises(DimensionError):
            DeskFeatures()(rng.uniform(-1, 1, (2, 3, 12, 12)))


class TestBenchmark:
    def test_coarse_timer_raises(self, monkeypatch):
        import ladagan.evalbench.bench as bench
        real = bench.time.get_clock_info
        monkeypatch.setattr(bench.time, "get_clock_info",
                            lambda name: types.SimpleNamespace(resolution=1.0) if name == "perf_counter"
                            else real(name))
        with pytest.raises(BenchmarkError, match="larger N"):
            scaling_benchmark(Ns=(16, 32), d=8, batch=1)

    def test_rejects_too_few_reps(self):
        with pytest.raises(BenchmarkError):
            scaling_benchmark(reps=5)
        with pytest.raises(BenchmarkError):
            scaling_benchmark(warmup=1)

    def test_small_run_outputs(self):
        res = scaling_benchmark(Ns=(64, 128, 256), d=16, batch=2)
        assert res.csv().splitlines()[0] == "mechanism,N,d,median_us,flops"
        assert len(res.records) == 6 and all(r.reps == 20 for r in res.records)
        assert "| lada |" in res.markdown()
        assert set(res.slopes) == {"lada", "dot-product"}
        assert res.flop_ratio("dot-product") == pytest.approx(16.0)

    def test_slope_fit(self):
        assert fit_loglog_slope([1, 2, 4, 8], [3, 12, 48, 192]) == pytest.approx(2.0)

    def test_peak_alloc_sees_buffers(self):
        assert peak_alloc_bytes(lambda: np.ones(1_000_000)) >= 8_000_000


class TestInterpolation:
    def _g(self):
        return Generator(SMALL_G, Rng(0))

    def test_endpoints_bit_identical(self, rng):
        g = self._g()
        z1, z2 = rng.standard_normal(16).astype(np.float32), rng.standard_normal(16).astype(np.float32)
        res = interpolate_latents(z1, z2, 5, g)
        direct1 = g(Tensor(z1.reshape(1, -1))).data[0]
        direct2 = g(Tensor(z2.reshape(1, -1))).data[0]
        assert res.frames[0].tobytes() == direct1.tobytes()
        assert res.frames[-1].tobytes() == direct2.tobytes()
        np.testing.assert_allclose(res.lambdas, np.linspace(0, 1, 5))

    def test_two_steps_are_endpoints(self, rng):
        g = self._g()
        z1, z2 = rng.standard_normal(16), rng.standard_normal(16)
        res = interpolate_latents(z1, z2, 2, g)
        assert res.frames.shape == (2, 3, 8, 8)

    def test_frames_and_maps_contract(self, rng):
        g = self._g()
        res = interpolate_latents(rng.standard_normal(16), rng.standard_normal(16), 4, g)
        assert np.isfinite(res.frames).all() and np.all(np.abs(res.frames) <= 1)
        assert {k: v.shape for k, v in res.maps.items()} == {
            "stage0": (4, 2, 2, 2), "stage1": (4, 2, 4, 4), "stage2": (4, 2, 8, 8)}
        for m in res.maps.values():
            assert (m >= 0).all()
            assert np.max(np.abs(m.sum(axis=(-1, -2)) - 1.0)) < 1e-6

    def test_default_stage_map_sizes(self, rng):
        _, maps = generate_with_maps(Generator(GeneratorConfig(), Rng(0)), rng.standard_normal(128))
        assert [maps[k].shape for k in ("stage0", "stage1", "stage2")] == [(4, 8, 8), (4, 16, 16), (4, 32, 32)]

    def test_errors(self, rng):
        g = self._g()
        with pytest.raises(DimensionError):
            interpolate_latents(np.zeros(16), np.zeros(8), 3, g)
        with pytest.raises(ValueError):
            interpolate_latents(np.zeros(16), np.zeros(16), 1, g)
