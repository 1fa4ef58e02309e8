"""Gauss-Markov fading, RVQ codebooks and quantization statistics."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mmtsim import channel as ch

V5 = dict(v_kmh=5.0, fc=2.1e9, tau=5e-3)


class TestDoppler:
    def test_static(self):
        d = ch.doppler_correlation(0.0, 2.1e9, 5e-3)
        assert d.rho == 1.0 and d.eps_sq == 0.0 and d.fdTs == 0.0

    def test_pedestrian_innovation_variance(self):
        d = ch.doppler_correlation(**V5)
        assert abs(d.eps_sq - 0.0458) < 5e-4

    def test_ten_kmh(self):
        d = ch.doppler_correlation(10.0, 2.1e9, 5e-3)
        fd = (10 / 3.6) * 2.1e9 / 2.998e8
        assert d.fdTs == pytest.approx(fd * 5e-3, rel=1e-14)
        assert d.fdTs == pytest.approx(0.0972, abs=1e-4)
        assert d.rho == pytest.approx(float(mp.besselj(0, 2 * mp.pi * d.fdTs)), abs=1e-13)

    @given(v=st.floats(0, 300), tau=st.floats(0, 0.05))
    def test_eps_is_one_minus_rho_sq(self, v, tau):
        d = ch.doppler_correlation(v, 2.1e9, tau)
        assert abs(d.eps_sq - (1 - d.rho**2)) <= 1e-12
        assert -1 <= d.rho <= 1

    def test_rejects_inconsistent(self):
        with pytest.raises(ValueError):
            ch.DopplerParams(rho=0.9, eps_sq=0.5, fdTs=0.01)
        with pytest.raises(ValueError):
            ch.doppler_correlation(-1.0, 2.1e9, 1e-3)


class TestEvolve:
    def test_entries_standard_complex_normal(self):
        rng = np.random.default_rng(0)
        h = ch.complex_normal(rng, (100_000, 4))
        assert np.max(np.abs(h.mean(axis=0))) < 0.01
        np.testing.assert_allclose(np.mean(np.abs(h) ** 2, axis=0), 1.0, atol=0.02)

    def test_rho_one_is_identity(self):
        rng = np.random.default_rng(1)
        h = ch.complex_normal(rng, (10, 4))
        out = ch.evolve_channel(h, ch.doppler_from_fdts(0.0), rng)
        np.testing.assert_array_equal(out, h)

    def test_rho_zero_decorrelates(self):
        rng = np.random.default_rng(2)
        # first zero of J0 gives rho ~ 0
        params = ch.doppler_from_fdts(2.404825557695773 / (2 * math.pi))
        assert abs(params.rho) < 1e-12
        h = ch.complex_normal(rng, (100_000, 4))
        out = ch.evolve_channel(h, params, rng)
        assert np.max(np.abs(np.mean(out * h.conj(), axis=0))) < 0.01

    def test_correlation_and_marginal(self):
        rng = np.random.default_rng(3)
        params = ch.doppler_correlation(**V5)
        assert params.rho == pytest.approx(0.9768, abs=1e-3)
        h = ch.complex_normal(rng, (100_000, 4))
        out = ch.evolve_channel(h, params, rng)
        corr = np.mean(out * h.conj(), axis=0)
        np.testing.assert_allclose(corr.real, params.rho, atol=0.01)
        np.testing.assert_allclose(np.mean(np.abs(out) ** 2, axis=0), 1.0, atol=0.02)


class TestCodebook:
    def test_single_codeword(self):
        cb = ch.rvq_codebook(4, 0, seed=7)
        assert cb.size == 1 and cb.bits == 0
        assert np.linalg.norm(cb.vectors[0]) == pytest.approx(1.0, abs=1e-12)

    @given(nt=st.integers(2, 8), B=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
    def test_unit_norms_and_reproducible(self, nt, B, seed):
        cb = ch.rvq_codebook(nt, B, seed)
        assert cb.vectors.shape == (2**B, nt)
        np.testing.assert_allclose(np.linalg.norm(cb.vectors, axis=1), 1.0, atol=1e-12)
        again = ch.rvq_codebook(nt, B, seed)
        assert np.array_equal(cb.vectors, again.vectors)

    def test_users_get_distinct_codebooks(self):
        cbs = [ch.user_codebook(4, 6, base_seed=99, user=u) for u in range(1, 9)]
        assert len({c.seed for c in cbs}) == 8
        for i in range(8):
            for j in range(i + 1, 8):
                assert not np.array_equal(cbs[i].vectors, cbs[j].vectors)

    def test_isotropy(self):
        cb = ch.rvq_codebook(4, 10, seed=5)
        rng = np.random.default_rng(6)
        x = ch.complex_normal(rng, (100_000, 4))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        # mean over directions of |c^H x|^2 for a few codewords
        for c in cb.vectors[:8]:
            assert np.mean(np.abs(x @ c.conj()) ** 2) == pytest.approx(0.25, abs=0.005)

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            ch.rvq_codebook(4, 25, seed=0)


class TestQuantize:
    def test_codeword_maps_to_itself(self):
        cb = ch.rvq_codebook(4, 6, seed=11)
        for i in (0, 17, 63):
            idx, cos = ch.quantize(3.0 * np.exp(0.4j) * cb.vectors[i], cb)
            assert idx == i
            assert cos == pytest.approx(1.0, abs=1e-12)

    def test_single_codeword_index(self):
        cb = ch.rvq_codebook(4, 0, seed=1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert ch.quantize(ch.complex_normal(rng, 4), cb)[0] == 0

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            ch.quantize(np.zeros(4), ch.rvq_codebook(4, 2, seed=0))

    @given(seed=st.integers(0, 10_000), scale=st.floats(1e-6, 1e6))
    def test_scale_invariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        cb = ch.rvq_codebook(4, 5, seed=seed)
        h = ch.complex_normal(rng, 4)
        i1, c1 = ch.quantize(h, cb)
        i2, c2 = ch.quantize(scale * h, cb)
        assert i1 == i2
        assert c1 == pytest.approx(c2, rel=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        cb = ch.rvq_codebook(4, 8, seed=4)
        h = ch.complex_normal(rng, (300, 4))
        idx, cos = ch.quantize_batch(h, cb, chunk=64)
        for t in range(300):
            i, c = ch.quantize(h[t], cb)
            assert idx[t] == i
            assert cos[t] == pytest.approx(c, abs=1e-14)

    def test_mean_cos2_over_codebook_ensemble(self):
        # 1000 independent codebooks x 1000 channels; a single fixed codebook
        # of 16 words is itself a random draw and deviates by ~1e-2
        Nt, B = 4, 4
        rng = np.random.default_rng(2024)
        acc = []
        for s in range(1000):
            cb = ch.rvq_codebook(Nt, B, seed=10_000 + s)
            _, cos = ch.quantize_batch(ch.complex_normal(rng, (1000, Nt)), cb)
            acc.append(np.mean(cos**2))
        assert np.mean(acc) == pytest.approx(ch.expected_cos2(Nt, B), abs=1e-3)


class TestQuantizationStatistics:
    def test_two_antennas_one_bit(self):
        assert ch.expected_cos2(2, 1) == pytest.approx(2 / 3, rel=1e-13)

    def test_large_codebook(self):
        # independent evaluation with mpmath; the value is 0.9965, not above 0.999
        ref = 1 - 2**24 * mp.beta(2**24, mp.mpf(4) / 3)
        xi = ch.expected_cos2(4, 24)
        assert xi == pytest.approx(float(ref), rel=1e-12)
        assert 0.996 < xi < 0.997

    def test_increasing_in_bits(self):
        for nt in (2, 3, 4, 6):
            vals = [ch.expected_cos2(nt, B) for B in range(0, 31)]
            assert np.all(np.diff(vals) > 0)
            assert all(0 < v <= 1 for v in vals)

    @given(nt=st.integers(2, 8), B=st.integers(0, 40))
    def test_mean_error_at_most_delta(self, nt, B):
        assert ch.expected_cos2(nt, B) >= 1 - ch.quantization_error_mean(nt, B) - 1e-15

    def test_delta_values(self):
        rho_sq = ch.doppler_correlation(**V5).rho_sq
        d4 = ch.quantization_error_mean(4, 4)
        d8 = ch.quantization_error_mean(4, 8)
        assert d4 == pytest.approx(0.39685, abs=5e-6)
        assert d8 == pytest.approx(0.15749, abs=5e-6)
        assert rho_sq * d4 == pytest.approx(0.3787, abs=5e-4)
        assert rho_sq * d8 == pytest.approx(0.1503, abs=5e-4)
        assert ch.quantization_error_mean(4, 0) == 1.0


class TestEnsembleSampler:
    def test_unit_norm_and_cosine(self):
        rng = np.random.default_rng(9)
        h = ch.complex_normal(rng, (2000, 3, 4))
        q, cos = ch.sample_rvq_directions(h, 12, rng)
        np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-12)
        hn = h / np.linalg.norm(h, axis=-1, keepdims=True)
        np.testing.assert_allclose(np.abs(np.sum(hn.conj() * q, axis=-1)), cos, atol=1e-12)

    @pytest.mark.parametrize("B", [2, 6])
    def test_matches_codebook_search(self, B):
        Nt = 4
        rng = np.random.default_rng(B)
        searched = []
        for s in range(400):
            cb = ch.rvq_codebook(Nt, B, seed=500 + s)
            _, c = ch.quantize_batch(ch.complex_normal(rng, (50, Nt)), cb)
            searched.append(c)
        searched = np.concatenate(searched) ** 2
        _, c = ch.sample_rvq_directions(ch.complex_normal(rng, (20_000, Nt)), B, rng)
        assert stats.ks_2samp(searched, c**2).pvalue > 0.01

    def test_mean_matches_formula_large_B(self):
        rng = np.random.default_rng(10)
        _, c = ch.sample_rvq_directions(ch.complex_normal(rng, (200_000, 4)), 18, rng)
        sin2 = 1 - c**2
        assert np.mean(sin2) == pytest.approx(ch.expected_sin2(4, 18), rel=0.01)

    def test_orthogonal_part_isotropic(self):
        # the error direction must not favour any axis orthogonal to h
        rng = np.random.default_rng(12)
        h = np.tile(np.array([1, 0, 0, 0], dtype=complex), (100_000, 1))
        q, _ = ch.sample_rvq_directions(h, 3, rng)
        p = np.mean(np.abs(q[:, 1:]) ** 2, axis=0)
        np.testing.assert_allclose(p, p.mean(), rtol=0.03)
