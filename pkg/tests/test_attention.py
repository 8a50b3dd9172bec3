"""Lada attention, the key-compressed variant and the dot-product baseline."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladagan import numerics as nx
from ladagan.attention import (AttentionTrace, MultiHeadLada, add_trace_hook, additive_weights,
                               dot_product_attention, extract_attention_maps, fastformer_head, lada_head,
                               multi_head_lada)
from ladagan.numerics import DimensionError, Rng

import oracles
from conftest import f64


def _instance(rng):
    n, d = int(rng.integers(1, 17)), int(rng.integers(1, 9))
    return [rng.standard_normal((n, d)) for _ in range(3)] + [rng.standard_normal(d), rng.standard_normal(d)]


class TestLadaHead:
    def test_matches_oracle_on_random_instances(self, rng):
        for _ in range(120):
            q, k, v, w, _ = _instance(rng)
            out, alpha = lada_head(f64(q), f64(k), f64(v), f64(w), return_weights=True)
            ref, ref_alpha = oracles.lada(q, k, v, w)
            assert np.max(np.abs(out.data - ref)) < 1e-6
            assert np.max(np.abs(alpha.data - ref_alpha)) < 1e-6

    def test_zero_vector_gives_mean_query(self, rng):
        q, k, v = (rng.standard_normal((6, 4)) for _ in range(3))
        out, alpha = lada_head(f64(q), f64(k), f64(v), f64(np.zeros(4)), return_weights=True)
        np.testing.assert_allclose(alpha.data, np.full(6, 1 / 6))
        np.testing.assert_allclose(out.data, q.mean(0) * k * v, atol=1e-12)

    def test_single_token(self, rng):
        q, k, v = (rng.standard_normal((1, 5)) for _ in range(3))
        out, alpha = lada_head(f64(q), f64(k), f64(v), f64(rng.standard_normal(5)), return_weights=True)
        assert alpha.data.tolist() == [1.0]
        np.testing.assert_allclose(out.data, q * k * v, atol=1e-12)

    def test_shape_errors(self):
        x = f64(np.ones((4, 3)))
        with pytest.raises(DimensionError):
            lada_head(x, x, f64(np.ones((4, 2))), f64(np.ones(3)))
        with pytest.raises(DimensionError):
            lada_head(x, x, x, f64(np.ones(2)))

    def test_batched_heads_match_per_head(self, rng):
        q, k, v = (rng.standard_normal((2, 3, 7, 4)) for _ in range(3))
        w = rng.standard_normal((3, 4))
        out = lada_head(f64(q), f64(k), f64(v), f64(w.reshape(1, 3, 4))).data
        for b in range(2):
            for h in range(3):
                np.testing.assert_allclose(out[b, h], oracles.lada(q[b, h], k[b, h], v[b, h], w[h])[0], atol=1e-10)

    def test_gradcheck(self, rng):
        q, k, v = (f64(rng.standard_normal((5, 4)), True) for _ in range(3))
        w = f64(rng.standard_normal(4), True)
        proj = rng.standard_normal((5, 4))
        assert nx.grad_check(lambda: nx.sum(lada_head(q, k, v, w) * proj), [q, k, v, w]) < 1e-4

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 10_000))
    def test_weights_form_a_distribution(self, n, d, seed):
        r = np.random.default_rng(seed)
        alpha = additive_weights(f64(r.standard_normal((n, d)) * 5), f64(r.standard_normal(d))).data
        assert (alpha >= 0).all() and abs(alpha.sum() - 1.0) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 10), st.integers(1, 6), st.integers(0, 10_000))
    def test_token_permutation_equivariance(self, n, d, seed):
        r = np.random.default_rng(seed)
        q, k, v = (r.standard_normal((n, d)) for _ in range(3))
        w = r.standard_normal(d)
        perm = r.permutation(n)
        a = lada_head(f64(q), f64(k), f64(v), f64(w)).data
        b = lada_head(f64(q[perm]), f64(k[perm]), f64(v[perm]), f64(w)).data
        np.testing.assert_allclose(b, a[perm], atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 6), st.floats(-20, 20), st.integers(0, 10_000))
    def test_weights_ignore_shift_orthogonal_to_w(self, n, d, c, seed):
        r = np.random.default_rng(seed)
        q, w = r.standard_normal((n, d)), r.standard_normal(d)
        u = r.standard_normal(d)
        u -= (u @ w) / (w @ w) * w
        a = additive_weights(f64(q), f64(w)).data
        b = additive_weights(f64(q + c * u), f64(w)).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_no_quadratic_intermediate(self):
        n, d = 512, 8
        x = nx.Tensor(np.ones((n, d), np.float32))
        out, alpha = lada_head(x, x, x, nx.Tensor(np.zeros(d, np.float32)), return_weights=True)
        seen, stack = set(), [out]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            assert node.size < n * n
            stack.extend(node._parents or ())


class TestFastformer:
    def test_matches_oracle(self, rng):
        for _ in range(100):
            q, k, v, wq, wk = _instance(rng)
            out = fastformer_head(f64(q), f64(k), f64(v), f64(wq), f64(wk)).data
            assert np.max(np.abs(out - oracles.fastformer(q, k, v, wq, wk))) < 1e-6

    def test_gradcheck(self, rng):
        q, k, v = (f64(rng.standard_normal((4, 3)), True) for _ in range(3))
        wq, wk = f64(rng.standard_normal(3), True), f64(rng.standard_normal(3), True)
        proj = rng.standard_normal((4, 3))
        assert nx.grad_check(lambda: nx.sum(fastformer_head(q, k, v, wq, wk) * proj), [q, k, v, wq, wk]) < 1e-4


class TestDotProduct:
    def test_matches_oracle(self, rng):
        for _ in range(100):
            q, k, v, _, _ = _instance(rng)
            out = dot_product_attention(f64(q), f64(k), f64(v)).data
            assert np.max(np.abs(out - oracles.dot(q, k, v))) < 1e-6

    def test_identical_keys_average_values(self, rng):
        q, v = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        k = np.tile(rng.standard_normal(3), (5, 1))
        out = dot_product_attention(f64(q), f64(k), f64(v)).data
        np.testing.assert_allclose(out, np.tile(v.mean(0), (5, 1)), atol=1e-12)


class TestMultiHead:
    def _module(self, dim=8, heads=2, variant="lada", seed=0):
        return MultiHeadLada(dim, heads, Rng(seed), variant=variant).to(np.float64)

    def test_matches_per_head_oracle(self, rng):
        m = self._module()
        p = m.params
        x = rng.standard_normal((6, 8))
        q, k, v = (x @ w.data + b.data for w, b in ((p.w_q, p.b_q), (p.w_k, p.b_k), (p.w_v, p.b_v)))
        heads = [oracles.lada(q[:, 4 * h:4 * h + 4], k[:, 4 * h:4 * h + 4], v[:, 4 * h:4 * h + 4], p.w.data[h])[0]
                 for h in range(2)]
        ref = np.concatenate(heads, axis=1) @ p.w_o.data + p.b_o.data
        np.testing.assert_allclose(m(f64(x)).data, ref, atol=1e-12)

    def test_batched_input_and_weights_shape(self, rng):
        m = self._module()
        out, alpha = multi_head_lada(f64(rng.standard_normal((3, 9, 8))), m.params, return_weights=True)
        assert out.shape == (3, 9, 8) and alpha.shape == (3, 2, 9)

    def test_indivisible_heads(self):
        with pytest.raises(ValueError):
            MultiHeadLada(10, 4, Rng(0))

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            self._module()(f64(np.ones((4, 6))))

    def test_trace_hook_and_record(self, rng):
        m = self._module()
        seen = []
        m.record = True
        with add_trace_hook(lambda mod, tr: seen.append(tr)):
            m(f64(rng.standard_normal((2, 16, 8))))
        m(f64(rng.standard_normal((2, 16, 8))))
        assert len(seen) == 1
        assert seen[0].weights.shape == (2, 2, 16)
        assert seen[0].max_normalization_error() < 1e-12
        assert m.last_trace is not None

    def test_fastformer_module_runs(self, rng):
        out = self._module(variant="fastformer")(f64(rng.standard_normal((4, 8))))
        assert out.shape == (4, 8)


class TestExtractMaps:
    def test_row_major_square(self):
        tr = AttentionTrace(np.arange(16.0).reshape(1, 16) / 120.0)
        maps = extract_attention_maps(tr)
        assert maps.shape == (1, 4, 4)
        assert maps[0, 1, 0] == pytest.approx(4 / 120.0)

    def test_explicit_shape_and_error(self):
        tr = AttentionTrace(np.full((2, 12), 1 / 12))
        assert extract_attention_maps(tr, 3, 4).shape == (2, 3, 4)
        assert extract_attention_maps(tr, map_w=6).shape == (2, 2, 6)
        with pytest.raises(DimensionError):
            extract_attention_maps(tr, 5, 5)

    def test_maps_sum_to_one(self, rng):
        m = MultiHeadLada(8, 4, Rng(3))
        m.record = True
        m(nx.Tensor(rng.standard_normal((64, 8)).astype(np.float32)))
        maps = extract_attention_maps(m.last_trace)
        assert maps.shape == (4, 8, 8)
        assert np.max(np.abs(maps.sum(axis=(-1, -2)) - 1.0)) < 1e-5
