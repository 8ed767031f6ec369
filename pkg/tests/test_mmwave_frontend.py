import numpy as np
import pytest

from array_codebook import ArrayCodebook, Ula
from conftest import complex_normal, on_grid_channel
from exceptions import ConfigurationError, InputError
from mmwave_frontend import BeamPair, MeasurementSet, MmWaveFrontend, NoiseModel, dbm_to_watts
from multiband_channel import ChannelRealization, ClusterParamSet, MultiBandChannel, Ray


def random_codebooks(rng, m_rx, m_tx, n_rx, n_tx, bits=3):
    F = ArrayCodebook.random_codebook(Ula(m_tx), n_tx, bits, rng)
    Q = ArrayCodebook.random_codebook(Ula(m_rx), n_rx, bits, rng)
    return F, Q


def test_dbm_to_watts():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(37.0) == pytest.approx(5.0119, rel=1e-4)


class TestBeamPair:
    def test_flat_index_is_column_major(self):
        pair = BeamPair.from_flat(13, m_rx=4)
        assert (pair.i, pair.j) == (1, 3)
        assert BeamPair.from_indices(1, 3, m_rx=4) == pair

    def test_vec_matches_flat_index(self):
        M = np.arange(12).reshape(4, 3)
        v = MmWaveFrontend.vec(M)
        for r in range(12):
            pair = BeamPair.from_flat(r, 4)
            assert v[r] == M[pair.i, pair.j]
        np.testing.assert_array_equal(MmWaveFrontend.vec(np.stack([M, 2 * M])), np.stack([v, 2 * v]))


class TestMeasurement:
    def test_kronecker_identity(self, rng):
        m_rx, m_tx = 6, 4
        F, Q = random_codebooks(rng, m_rx, m_tx, 3, 2)
        H = complex_normal(rng, (5, m_rx, m_tx))
        ms = MmWaveFrontend.measure(H, F, Q, None, [1, 4], 1.0)
        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(m_rx, m_tx)
        for k in (1, 4):
            g = MmWaveFrontend.vec(MmWaveFrontend.beamspace(H[k], A_rx, A_tx))
            np.testing.assert_allclose(ms.psi @ g, ms.y_for(k), atol=1e-12)
        assert ms.psi.shape == (6, 24)
        assert ms.n_measurements == 6

    def test_measurement_noise_variance(self, rng):
        A = ArrayCodebook.dft_codebook(Ula(4))
        H = np.zeros((64, 4, 4), dtype=complex)
        noise = NoiseModel(sigma2=0.02)
        ms = MmWaveFrontend.measure(H, A, A, noise, range(64), p_t=2.0, rng=rng)
        assert np.mean(np.abs(ms.y) ** 2) == pytest.approx(0.02 * 64 / 2.0, rel=0.15)

    def test_noisy_measure_needs_rng(self, rng):
        F, Q = random_codebooks(rng, 4, 4, 2, 2)
        with pytest.raises(InputError):
            MmWaveFrontend.measure(np.ones((2, 4, 4)), F, Q, NoiseModel(1.0), [0], 1.0)

    @pytest.mark.parametrize("subcarriers", [[], [2], [-1]])
    def test_bad_subcarriers(self, rng, subcarriers):
        F, Q = random_codebooks(rng, 4, 4, 2, 2)
        with pytest.raises(InputError):
            MmWaveFrontend.measure(np.ones((2, 4, 4)), F, Q, None, subcarriers, 1.0)

    def test_unprobed_subcarrier_lookup(self, rng):
        F, Q = random_codebooks(rng, 4, 4, 2, 2)
        ms = MmWaveFrontend.measure(np.ones((3, 4, 4)), F, Q, None, [2], 1.0)
        with pytest.raises(InputError):
            ms.y_for(0)

    def test_measurement_set_shape_check(self, rng):
        F, Q = random_codebooks(rng, 4, 4, 2, 2)
        with pytest.raises(InputError):
            MeasurementSet(y=np.zeros((2, 4)), F=F, Q=Q, psi=np.zeros((4, 16)), probed_subcarriers=(0,))

    def test_sensing_size_mismatch(self, rng):
        F, Q = random_codebooks(rng, 4, 8, 2, 2)
        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(4, 4)
        with pytest.raises(InputError):
            MmWaveFrontend.assemble_sensing(F, Q, A_tx, A_rx)


class TestExhaustiveSearch:
    def test_noiseless_finds_on_grid_pair(self):
        H = on_grid_channel(8, 4, i=5, j=2, n_subcarriers=3)
        pair = MmWaveFrontend.exhaustive_search(H, [0, 2], None, 1.0, noiseless=True)
        assert (pair.i, pair.j, pair.r) == (5, 2, 2 * 8 + 5)

    def test_high_snr_noisy_search(self, rng):
        H = on_grid_channel(8, 8, i=1, j=6, n_subcarriers=2)
        pair = MmWaveFrontend.exhaustive_search(H, [1], NoiseModel(1e-4), 1.0, rng)
        assert (pair.i, pair.j) == (1, 6)

    def test_rank_beam_pairs_breaks_ties_by_index(self):
        ranked = MmWaveFrontend.rank_beam_pairs([0.5, 2.0, 2.0, 0.1, 1.0], 3)
        np.testing.assert_array_equal(ranked, [1, 2, 4])

    def test_power_map_sums_subcarriers(self):
        H = on_grid_channel(4, 4, i=0, j=3, n_subcarriers=4)
        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(4, 4)
        power = MmWaveFrontend.received_power_map(H, [0, 1, 3], A_rx, A_tx)
        assert power[3 * 4] == pytest.approx(3.0)
        assert power.sum() == pytest.approx(3.0)


class TestNoiseCalibration:
    def test_calibrated_snr(self):
        fc, p_t, K = 28e9, dbm_to_watts(37.0), 256
        sigma2 = MmWaveFrontend.calibrate_noise(80.0, -10.0, fc, p_t, K)
        snr = (p_t / K) / MultiBandChannel.pathloss(80.0, fc) / sigma2
        assert 10 * np.log10(snr) == pytest.approx(-10.0)

    def test_calibration_scales_with_channel_gain(self):
        fc, p_t, K = 28e9, dbm_to_watts(37.0), 256
        unit = MmWaveFrontend.calibrate_noise(80.0, -10.0, fc, p_t, K)
        assert MmWaveFrontend.calibrate_noise(80.0, -10.0, fc, p_t, K, channel_gain=3.0) == pytest.approx(3 * unit)
        with pytest.raises(InputError):
            MmWaveFrontend.calibrate_noise(80.0, -10.0, fc, p_t, K, channel_gain=0.0)

    def test_anchored_noise_model(self, sub6_spec):
        noise = NoiseModel.anchored(80.0, 10.0, sub6_spec, 5.0)
        assert noise.anchor == (80.0, 10.0)
        expected = MmWaveFrontend.calibrate_noise(
            80.0, 10.0, sub6_spec.fc, 5.0, 1, channel_gain=MultiBandChannel.expected_entry_gain(sub6_spec))
        assert noise.sigma2 == pytest.approx(expected)
        assert noise.measurement_variance(5.0, 1) == pytest.approx(noise.sigma2 / 5.0)
        with pytest.raises(ConfigurationError):
            NoiseModel(0.0)

    def test_channel_power_of_a_single_ray(self, small_mmwave_spec, sub6_spec):
        for spec in (small_mmwave_spec, sub6_spec):
            ch = ChannelRealization(band=spec, clusters=(ClusterParamSet(0.0, 0.3, -0.2),),
                                    rays=((Ray(2.0 + 0.0j, 0.0, 0.0, 0.0),),), pathloss=10.0)
            assert MmWaveFrontend.channel_power(ch) == pytest.approx(0.4)

    def test_empirical_snr_matches_anchor(self, rng, sub6_spec, small_mmwave_spec):
        p_t = dbm_to_watts(37.0)
        noise = NoiseModel.anchored(80.0, -10.0, small_mmwave_spec, p_t)
        channels = [MultiBandChannel.generate_realization(sub6_spec, small_mmwave_spec, 80.0, 9, t).mmwave
                    for t in range(2000)]
        snr = MmWaveFrontend.empirical_snr_db(channels, noise, p_t, rng)
        assert snr == pytest.approx(-10.0, abs=0.15)

    def test_empirical_snr_needs_channels(self, rng):
        with pytest.raises(InputError):
            MmWaveFrontend.empirical_snr_db([], NoiseModel(1.0), 1.0, rng)

    def test_probe_subcarriers(self, rng):
        single = MmWaveFrontend.draw_probe_subcarriers('single_k', 256, rng)
        assert single.shape == (1,) and 0 <= single[0] < 256
        np.testing.assert_array_equal(MmWaveFrontend.draw_probe_subcarriers('all_k', 4, rng), np.arange(4))
        with pytest.raises(ConfigurationError):
            MmWaveFrontend.draw_probe_subcarriers('some_k', 4, rng)


def test_beamspace_conserves_energy(rng):
    H = complex_normal(rng, (3, 8, 4))
    A_rx, A_tx = MmWaveFrontend.dft_dictionaries(8, 4)
    G = MmWaveFrontend.beamspace(H, A_rx, A_tx)
    np.testing.assert_allclose(np.linalg.norm(G, axis=(1, 2)), np.linalg.norm(H, axis=(1, 2)))


def test_noiseless_exhaustive_matches_brute_force(rng):
    A_rx, A_tx = MmWaveFrontend.dft_dictionaries(4, 8)
    for _ in range(25):
        H = complex_normal(rng, (2, 4, 8))
        G = MmWaveFrontend.beamspace(H[1], A_rx, A_tx)
        i, j = np.unravel_index(np.argmax(np.abs(G)), G.shape)
        pair = MmWaveFrontend.exhaustive_search(H, [1], None, 1.0, noiseless=True)
        assert (pair.i, pair.j) == (i, j)
