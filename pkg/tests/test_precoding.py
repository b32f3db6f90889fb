import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from fbmc_mimo import channel as chn
from fbmc_mimo import precoding as pre


class TestMrt:
    def test_plug_in(self):
        P = pre.mrt(np.array([[1.0, 1j]]))
        np.testing.assert_allclose(P, [[0.5], [-0.5j]])

    def test_scalar(self):
        assert pre.mrt(np.array([[2.0]]))[0, 0] == pytest.approx(0.5)

    def test_orthonormal_rows_match_zf(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 8, 8))
        H = Q[:3]  # orthonormal rows
        P_m, P_z = pre.mrt(H), pre.zf(H)
        # equal up to a per-column scale
        ratio = P_m / P_z
        np.testing.assert_allclose(ratio, np.broadcast_to(ratio[0], ratio.shape), atol=1e-12)

    def test_zero_row(self):
        with pytest.raises(ValueError, match="zero"):
            pre.mrt(np.array([[0.0, 0.0], [1.0, 0.0]]))


class TestZf:
    def test_nulling(self, rng):
        H = crandn(rng, 4, 16)
        assert np.max(np.abs(H @ pre.zf(H) - np.eye(4))) <= 1e-10

    def test_batched(self, rng):
        H = crandn(rng, 5, 3, 8)
        np.testing.assert_allclose(H @ pre.zf(H), np.broadcast_to(np.eye(3), (5, 3, 3)), atol=1e-10)

    def test_single_user_is_mrt(self, rng):
        H = crandn(rng, 1, 6)
        np.testing.assert_allclose(pre.zf(H), pre.mrt(H), atol=1e-12)
        assert (H @ pre.zf(H))[0, 0] == pytest.approx(1.0)

    def test_unitary(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 5, 5))
        np.testing.assert_allclose(pre.zf(Q), Q.conj().T, atol=1e-12)

    def test_rank_deficient(self):
        H = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        with pytest.raises(pre.RankDeficientError) as info:
            pre.zf(H)
        assert info.value.condition_number > 1e12

    def test_too_few_antennas(self, rng):
        with pytest.raises(ValueError):
            pre.zf(crandn(rng, 4, 3))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10), st.integers(0, 2**32 - 1))
    def test_nulling_property(self, K, extra, seed):
        H = crandn(np.random.default_rng(seed), K, K + extra)
        if np.linalg.cond(H @ H.conj().T) > 1e8:
            return
        assert np.max(np.abs(H @ pre.zf(H) - np.eye(K))) <= 1e-8


class TestAsymptotic:
    def test_scalar(self):
        assert pre.asymptotic_precoder(np.array([[2.0]]), np.array([1.0]))[0, 0] == pytest.approx(2.0)
        assert pre.asymptotic_precoder(np.array([[2j]]), np.array([1.0]))[0, 0] == pytest.approx(-2j)

    def test_zf_converges(self, rng):
        def gap(N):
            out = []
            for _ in range(50):
                H = crandn(rng, 1, N)
                z = pre.zf(H)
                a = pre.asymptotic_precoder(H, np.ones(1))
                out.append(np.linalg.norm(z - a) / np.linalg.norm(z))
            return np.mean(out)

        assert gap(256) < gap(64)

    def test_modes_coincide_for_equal_betas(self, rng):
        H = crandn(rng, 3, 10)
        a = pre.asymptotic_precoder(H, np.full(3, 0.5), "colocated")
        b = pre.asymptotic_precoder(H, np.full((3, 10), 0.5), "cellfree")
        np.testing.assert_allclose(a, b)

    def test_rejects(self, rng):
        with pytest.raises(ValueError):
            pre.asymptotic_precoder(crandn(rng, 2, 4), np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="mode"):
            pre.asymptotic_precoder(crandn(rng, 2, 4), np.ones(2), "mixed")


class TestSupportZf:
    def test_full_support_is_zf(self, rng):
        H = crandn(rng, 4, 3, 12)
        P = pre.support_zf(H, np.ones((3, 12), bool), normalize=False)
        np.testing.assert_allclose(P, pre.zf(H), atol=1e-10)

    def test_respects_support(self, rng):
        H = crandn(rng, 2, 3, 12)
        mask = rng.random((3, 12)) < 0.5
        mask[:, :3] = True
        P = pre.support_zf(H, mask)
        assert not np.any(P[:, ~mask.T])

    def test_nulls_with_enough_antennas(self, rng):
        H = crandn(rng, 3, 12)
        mask = np.zeros((3, 12), bool)
        mask[0, :6] = mask[1, 4:10] = mask[2, 6:] = True
        P = pre.support_zf(H, mask, normalize=False)
        np.testing.assert_allclose(H @ P, np.eye(3), atol=1e-10)

    def test_normalized_columns(self, rng):
        H = crandn(rng, 6, 2, 8)
        P = pre.support_zf(H, np.ones((2, 8), bool))
        np.testing.assert_allclose(np.mean(np.sum(np.abs(P) ** 2, axis=-2), axis=0), 1.0)

    def test_empty_support(self, rng):
        mask = np.ones((2, 4), bool)
        mask[1] = False
        with pytest.raises(ValueError, match="no serving"):
            pre.support_zf(crandn(rng, 2, 4), mask)


class TestFractionalPower:
    def test_equal_betas(self):
        a = pre.fractional_power(np.full((4, 6), 1e-9), 0.6, 1.2, 0.25)
        np.testing.assert_allclose(a.q, a.q[0, 0])

    def test_exponent_collapse(self, rng):
        betas = rng.uniform(0.1, 1.0, (3, 5))
        a = pre.fractional_power(betas, 0.0, 0.0, 1.0)
        np.testing.assert_allclose(a.q / betas, (a.q / betas)[0, 0])

    def test_normalization(self, rng):
        betas = 10 ** rng.uniform(-14, -9, (8, 16))
        a = pre.fractional_power(betas, 0.6, 1.2, 0.25)
        power = a.antenna_power()
        assert np.all(power <= 0.25 * (1 + 1e-12))
        assert power.max() == pytest.approx(0.25)
        assert np.all(a.q >= 0)

    def test_formula(self):
        """Two users, two antennas, against a hand evaluation of the rule."""
        b = np.array([[4.0, 1.0], [1.0, 1.0]])
        nu, gamma = 0.5, 1.0
        S = b.sum(axis=1)  # [5, 2]
        x = b / S[:, None] ** nu
        load = x.sum(axis=0)
        raw = x / load**gamma
        expected = raw * (1.0 / raw.sum(axis=0).max())
        np.testing.assert_allclose(pre.fractional_power(b, nu, gamma, 1.0).q, expected)

    def test_mask_zeroes_unserved(self, rng):
        betas = rng.uniform(0.1, 1.0, (3, 4))
        mask = np.array([[1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 0, 1]], bool)
        a = pre.fractional_power(betas, 0.6, 1.2, 1.0, mask=mask)
        assert not np.any(a.q[~mask])

    def test_precoder_gains_in_budget(self, rng):
        betas = rng.uniform(0.1, 1.0, (3, 4))
        g = rng.uniform(0.5, 2.0, (3, 4))
        a = pre.fractional_power(betas, 0.6, 1.2, 0.25, precoder_gains=g)
        assert a.antenna_power(g).max() == pytest.approx(0.25)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.integers(0, 3), st.floats(1.01, 10.0))
    def test_monotone_without_exponents(self, seed, k, i, factor):
        betas = np.random.default_rng(seed).uniform(0.1, 1.0, (3, 4))
        raised = betas.copy()
        raised[k, i] *= factor
        # undo the global scale p_max / peak load to recover the raw rule
        raw0 = pre.fractional_power(betas, 0.0, 0.0, 1.0).q * betas.sum(axis=0).max()
        raw1 = pre.fractional_power(raised, 0.0, 0.0, 1.0).q * raised.sum(axis=0).max()
        assert raw1[k, i] >= raw0[k, i] * (1 - 1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            pre.fractional_power(np.zeros((2, 2)), 0.6, 1.2, 1.0)


class TestMaxPower:
    def test_every_antenna_at_budget(self, rng):
        g = rng.uniform(0.1, 1.0, (4, 6))
        a = pre.max_power(g, 0.25)
        np.testing.assert_allclose(a.antenna_power(g), 0.25)

    def test_idle_antenna(self):
        g = np.array([[1.0, 0.0], [1.0, 0.0]])
        a = pre.max_power(g, 1.0)
        np.testing.assert_allclose(a.q[:, 1], 0.0)


class TestApSelect:
    def test_all_selected(self, rng):
        sets = pre.ap_select(rng.normal(size=(3, 5)), -np.inf)
        assert sets.ap_mask.all()

    def test_fallback(self):
        snr = np.array([[-20.0, -12.0, -30.0]])
        sets = pre.ap_select(snr, 0.0)
        np.testing.assert_array_equal(sets.ap_mask, [[False, True, False]])

    def test_antenna_mask(self):
        sets = pre.ap_select(np.array([[5.0, -20.0]]), 0.0, antennas_per_ap=3)
        np.testing.assert_array_equal(sets.mask, [[True] * 3 + [False] * 3])
        np.testing.assert_array_equal(sets.members(0), [0, 1, 2])
        np.testing.assert_array_equal(sets.ap_counts, [1])

    def test_threshold_monotonicity(self, rng):
        geo = chn.place_cellfree(36, 2.0, 1, 8, rng)
        _, beta_ap = chn.cellfree_betas(geo, rng)
        snr = 10 * np.log10(0.2 * beta_ap / chn.noise_variance(20e6, 9.0))
        previous = None
        for th in np.arange(-20.0, 6.0, 1.0):
            mask = pre.ap_select(snr, th).ap_mask
            if previous is not None:
                assert np.all(mask <= previous)  # set inclusion
            previous = mask
        counts = [pre.ap_select(snr, th).ap_counts.mean() for th in (-20.0, -10.0, -5.0)]
        assert counts[0] > counts[1] > counts[2]


class TestEquivalentChannel:
    def test_scalar_flat(self):
        h = np.array([[[2.0 + 1j]]])
        W = pre.combine_weights(1 / h[..., 0][None], 1.0)
        assert pre.equivalent_channel(W, h)[0, 0, 0, 0] == pytest.approx(1.0)

    def test_zf_flat_is_identity(self, rng):
        h = crandn(rng, 4, 16, 1)
        P = pre.zf(h[..., 0])[None]
        eq = pre.equivalent_channel(P, h)
        np.testing.assert_allclose(eq[:, :, 0, 0], np.eye(4), atol=1e-10)

    def test_direct_sum(self, rng):
        h = crandn(rng, 2, 3, 4)
        W = crandn(rng, 5, 3, 2)
        eq = pre.equivalent_channel(W, h)
        k, kp, m, l = 1, 0, 3, 2
        assert eq[k, kp, m, l] == pytest.approx(sum(W[m, i, kp] * h[k, i, l] for i in range(3)))

    def test_combine_weights_shapes(self, rng):
        P = crandn(rng, 4, 3, 2)
        np.testing.assert_allclose(pre.combine_weights(P, np.array([4.0, 9.0])), P * [2.0, 3.0])
        q = rng.uniform(size=(2, 3))
        np.testing.assert_allclose(pre.combine_weights(P, q), P * np.sqrt(q.T))

    def test_unserved_antennas_contribute_nothing(self, rng):
        h = crandn(rng, 2, 4, 3)
        P = crandn(rng, 1, 4, 2)
        q = np.ones((2, 4))
        q[0, 2:] = 0.0
        eq = pre.equivalent_channel(pre.combine_weights(P, q), h)
        expected = np.einsum("i,kil->kl", P[0, :2, 0], h[:, :2])
        np.testing.assert_allclose(eq[:, 0, 0], expected, atol=1e-12)
