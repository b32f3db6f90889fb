import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbmc_mimo import channel as chn


def test_tdlc_table_shape():
    delays, powers = chn.tdlc_table()
    assert delays.size == powers.size == 24
    assert delays[0] == 0.0 and powers[0] == pytest.approx(-4.4)
    assert delays.max() == pytest.approx(8.6523)


class TestTdlc:
    def test_bins_at_100ns(self):
        pdp = chn.tdlc_pdp(100.0, 15.36e6)
        # largest normalized delay 8.6523 * 100 ns * 15.36 MHz = 13.29 -> bin 13
        assert pdp.length == 14
        assert pdp.total_gain == pytest.approx(1.0, abs=1e-12)

    def test_binning_oracle(self):
        delays, powers = chn.tdlc_table()
        expected = np.zeros(14)
        for d, p in zip(delays, powers):
            expected[int(np.floor(d * 1.536 + 0.5))] += 10 ** (p / 10)
        np.testing.assert_allclose(chn.tdlc_pdp(100.0, 15.36e6).taps, expected / expected.sum(), rtol=1e-12)

    def test_collapse_to_one_tap(self):
        pdp = chn.tdlc_pdp(100.0, 1e3)
        np.testing.assert_array_equal(pdp.taps, [1.0])

    @given(st.floats(1.0, 2000.0), st.floats(1e5, 1e8))
    def test_normalized(self, rms, fs):
        pdp = chn.tdlc_pdp(rms, fs)
        assert pdp.total_gain == pytest.approx(1.0, abs=1e-12)
        assert np.all(pdp.taps >= 0)

    @pytest.mark.parametrize("rms", [0.0, -5.0])
    def test_rejects_nonpositive(self, rms):
        with pytest.raises(ValueError):
            chn.tdlc_pdp(rms, 15.36e6)

    def test_padded(self):
        pdp = chn.PowerDelayProfile(np.array([0.5, 0.5]))
        np.testing.assert_array_equal(pdp.padded(4), [0.5, 0.5, 0, 0])
        with pytest.raises(ValueError):
            pdp.padded(1)

    def test_profile_rejects_negative(self):
        with pytest.raises(ValueError):
            chn.PowerDelayProfile(np.array([1.0, -0.1]))

    def test_rms_delays_in_range(self, rng):
        d = chn.draw_rms_delays(1000, rng)
        assert d.min() >= 90.0 and d.max() <= 110.0


class TestDrawChannel:
    def test_moments(self, rng):
        p = np.array([0.6, 0.3, 0.1])
        ch = chn.draw_channel(np.broadcast_to(p, (1, 100000, 3)), np.full((1, 100000), 2.0), rng)
        var = np.mean(np.abs(ch.h[0]) ** 2, axis=0)
        np.testing.assert_allclose(var, 2.0 * p, rtol=0.03)

    def test_links_uncorrelated(self, rng):
        ch = chn.draw_channel(np.ones((2, 1, 1)), np.ones((2, 100000)), rng)
        a, b = ch.h[0, :, 0], ch.h[1, :, 0]
        corr = abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
        assert corr <= 0.02

    def test_zero_beta(self, rng):
        ch = chn.draw_channel(np.ones((1, 1, 4)) / 4, np.zeros((1, 3)), rng)
        assert not np.any(ch.h)

    def test_deterministic(self):
        a = chn.draw_channel(np.ones((2, 3, 2)) / 2, np.ones((2, 3)), np.random.default_rng(5))
        b = chn.draw_channel(np.ones((2, 3, 2)) / 2, np.ones((2, 3)), np.random.default_rng(5))
        np.testing.assert_array_equal(a.h, b.h)

    def test_shapes(self, rng):
        ch = chn.draw_channel(np.ones((4, 1, 5)) / 5, np.ones((4, 6)), rng)
        assert ch.h.shape == (4, 6, 5)
        assert (ch.num_users, ch.num_antennas, ch.length) == (4, 6, 5)

    def test_rejects_negative(self, rng):
        with pytest.raises(ValueError):
            chn.draw_channel(np.ones((1, 1, 2)), -np.ones((1, 1)), rng)


class TestFreqResponse:
    def test_delta(self):
        np.testing.assert_allclose(chn.freq_response([1.0], np.arange(8), 8), np.ones(8))

    def test_single_delay(self):
        assert chn.freq_response([0.0, 1.0], 1, 4) == pytest.approx(-1j)

    def test_fft_oracle(self, rng):
        h = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        full = np.fft.fft(h, 64)
        for m in (0, 5, 63):
            assert abs(chn.freq_response(h, m, 64) - full[m]) <= 1e-12
        np.testing.assert_allclose(chn.freq_responses(h, 64), full, atol=1e-12)

    def test_rejects_long_channel(self):
        with pytest.raises(ValueError, match="exceeds"):
            chn.freq_response(np.ones(9), 0, 8)
        with pytest.raises(ValueError):
            chn.freq_responses(np.ones(9), 8)


class TestLargeScale:
    @pytest.mark.parametrize(
        "d,x,expected_db",
        [(1.0, 0.0, -135.0), (0.1, 0.0, -100.0), (1.0, 8.0, -143.0), (0.001, 0.0, -65.0)],
    )
    def test_cost_hata(self, d, x, expected_db):
        assert 10 * np.log10(chn.cost_hata_beta(d, x)) == pytest.approx(expected_db)

    def test_noise_variance(self):
        assert chn.noise_variance(20e6, 9.0) == pytest.approx(290 * 1.3e-23 * 2e7 * 10**0.9)
        assert chn.noise_variance(20e6, 9.0) == pytest.approx(5.99e-13, rel=1e-3)

    def test_noise_floor_and_linearity(self):
        assert chn.noise_variance(1e6, 0.0) == pytest.approx(290 * 1.3e-23 * 1e6)
        assert chn.noise_variance(2e6, 3.0) == pytest.approx(2 * chn.noise_variance(1e6, 3.0))

    def test_noise_rejects(self):
        with pytest.raises(ValueError):
            chn.noise_variance(0.0, 9.0)


class TestGeometry:
    def test_grid(self):
        aps = chn.ap_grid(100, 2.0)
        assert aps.shape == (100, 2)
        xs = np.unique(np.round(aps[:, 0], 12))
        np.testing.assert_allclose(np.diff(xs), 0.2)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            chn.ap_grid(10, 2.0)

    def test_torus(self):
        assert chn.torus_distance([0.1, 1.0], [1.9, 1.0], 2.0) == pytest.approx(0.2)

    @given(
        st.lists(st.floats(0, 2), min_size=6, max_size=6),
    )
    def test_torus_metric(self, c):
        a, b, z = np.array(c[0:2]), np.array(c[2:4]), np.array(c[4:6])
        dab = chn.torus_distance(a, b, 2.0)
        assert dab == pytest.approx(chn.torus_distance(b, a, 2.0))
        assert dab <= chn.torus_distance(a, z, 2.0) + chn.torus_distance(z, b, 2.0) + 1e-12
        assert dab <= np.sqrt(2.0) + 1e-12

    def test_users_at_cell_centres(self):
        side = 5
        aps = chn.ap_grid(side * side, 2.0)
        spacing = 2.0 / side
        centres = aps + spacing / 2
        geo = chn.CellFreeGeometry(aps, centres, 2.0, 1)
        assert geo.distances().min(axis=1).max() == pytest.approx(spacing * np.sqrt(2) / 2)

    def test_place_and_betas(self, rng):
        geo = chn.place_cellfree(36, 2.0, 4, 8, rng)
        assert geo.num_antennas == 144 and geo.num_users == 8
        assert np.all((geo.user_positions >= 0) & (geo.user_positions <= 2.0))
        assert geo.distances().min() >= chn.MIN_DISTANCE_KM
        betas, beta_ap = chn.cellfree_betas(geo, rng)
        assert betas.shape == (8, 144) and beta_ap.shape == (8, 36)
        # antennas of one AP share the large-scale gain
        np.testing.assert_array_equal(betas[:, :4], np.repeat(beta_ap[:, :1], 4, axis=1))
        assert np.all(betas > 0)

    def test_antennas_disjoint(self, rng):
        geo = chn.place_cellfree(16, 2.0, 3, 2, rng)
        owner = geo.antenna_ap
        assert owner.size == 48
        assert np.all(np.bincount(owner) == 3)

    def test_shadowing_std(self, rng):
        aps = np.array([[1.0, 1.0]])
        geo = chn.CellFreeGeometry(aps, np.full((20000, 2), 0.0), 2.0, 1)
        _, beta_ap = chn.cellfree_betas(geo, rng, shadow_std_db=8.0)
        assert np.std(10 * np.log10(beta_ap)) == pytest.approx(8.0, rel=0.03)
