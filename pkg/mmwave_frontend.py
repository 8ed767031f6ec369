"""
mmWave OFDM training front end: measurement synthesis, beamspace transforms,
sensing-matrix assembly, noise calibration and the exhaustive-search baseline.

Vectorization is column-major throughout: flat index r = j * M_RX + i for RX
beam i and TX beam j (0-based), matching vec() in the Kronecker identity.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from array_codebook import ArrayCodebook, Codebook, Ula
from exceptions import ConfigurationError, InputError
from multiband_channel import BandSpec, ChannelRealization, MultiBandChannel

logger = logging.getLogger(__name__)

P_T_DBM = 37.0
PROBE_MODES = ('single_k', 'all_k')


def dbm_to_watts(dbm: float) -> float:
    return 10 ** (dbm / 10) / 1000


@dataclass(frozen=True)
class NoiseModel:
    """Per-subcarrier receiver noise variance (W), optionally anchored to (distance m, SNR dB)"""
    sigma2: float
    anchor: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError(f"noise variance must be positive, got {self.sigma2}")

    @classmethod
    def anchored(cls, distance: float, snr_db: float, band: BandSpec, p_t: float):
        """
        Noise that puts the pre-beamforming per-subcarrier SNR of channels rendered
        from `band` at snr_db when the TX-RX separation is `distance`
        """
        sigma2 = MmWaveFrontend.calibrate_noise(
            distance, snr_db, band.fc, p_t, band.n_subcarriers or 1, band.pathloss_exponent,
            channel_gain=MultiBandChannel.expected_entry_gain(band))
        return cls(sigma2=sigma2, anchor=(distance, snr_db))

    def measurement_variance(self, p_t: float, n_subcarriers: int) -> float:
        """Variance of the noise left after dividing by a training symbol of power P_t/K"""
        return self.sigma2 * n_subcarriers / p_t


@dataclass(frozen=True)
class BeamPair:
    """RX codeword i, TX codeword j and flat index r = j * M_RX + i (all 0-based)"""
    i: int
    j: int
    r: int

    @classmethod
    def from_flat(cls, r: int, m_rx: int):
        r = int(r)
        return cls(i=r % m_rx, j=r // m_rx, r=r)

    @classmethod
    def from_indices(cls, i: int, j: int, m_rx: int):
        return cls(i=int(i), j=int(j), r=int(j) * m_rx + int(i))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Vectorized measurements y[k] for each probed subcarrier plus the sensing matrix"""
    y: np.ndarray
    F: Codebook
    Q: Codebook
    psi: np.ndarray
    probed_subcarriers: Tuple[int, ...]

    def __post_init__(self):
        if self.y.shape != (len(self.probed_subcarriers), self.psi.shape[0]):
            raise InputError(
                f"measurement block {self.y.shape} does not match {len(self.probed_subcarriers)} "
                f"subcarriers x {self.psi.shape[0]} measurements")

    @property
    def n_measurements(self) -> int:
        """Training blocks spent, N_RX * N_TX"""
        return self.F.n_beams * self.Q.n_beams

    def y_for(self, k: int) -> np.ndarray:
        try:
            return self.y[self.probed_subcarriers.index(k)]
        except ValueError:
            raise InputError(f"subcarrier {k} was not probed")


def _as_matrix(codebook) -> np.ndarray:
    return codebook.matrix if isinstance(codebook, Codebook) else np.asarray(codebook)


class MmWaveFrontend:
    """mmWave measurement model"""

    @staticmethod
    def dft_dictionaries(m_rx: int, m_tx: int, d: float = 0.5):
        """(A_RX, A_TX) DFT codebooks"""
        return ArrayCodebook.dft_codebook(Ula(m_rx, d)), ArrayCodebook.dft_codebook(Ula(m_tx, d))

    @staticmethod
    def assemble_sensing(F, Q, A_tx, A_rx) -> np.ndarray:
        """
        Psi = (F^T kron Q^*)(A_TX^c kron A_RX), evaluated through the mixed-product
        rule as (F^T A_TX^c) kron (Q^* A_RX).
        """
        F, Q, A_tx, A_rx = (_as_matrix(x) for x in (F, Q, A_tx, A_rx))
        if F.shape[0] != A_tx.shape[0] or Q.shape[0] != A_rx.shape[0]:
            raise InputError("codebook and dictionary array sizes disagree")
        return np.kron(F.T @ A_tx.conj(), Q.conj().T @ A_rx)

    @staticmethod
    def beamspace(freq_channel, A_rx, A_tx) -> np.ndarray:
        """G[k] = A_RX^* H[k] A_TX; accepts one matrix or a K-stack"""
        A_rx, A_tx = _as_matrix(A_rx), _as_matrix(A_tx)
        return A_rx.conj().T @ np.asarray(freq_channel) @ A_tx

    @staticmethod
    def vec(matrices) -> np.ndarray:
        """Column-major vectorization of one matrix or of each matrix in a stack"""
        matrices = np.asarray(matrices)
        if matrices.ndim == 2:
            return matrices.reshape(-1, order='F')
        return np.swapaxes(matrices, -1, -2).reshape(matrices.shape[0], -1)

    @staticmethod
    def _check_subcarriers(subcarriers, n_subcarriers: int):
        subcarriers = [int(k) for k in subcarriers]
        if not subcarriers:
            raise InputError("at least one subcarrier must be probed")
        bad = [k for k in subcarriers if not 0 <= k < n_subcarriers]
        if bad:
            raise InputError(f"subcarrier indices {bad} outside [0, {n_subcarriers})")
        return subcarriers

    @staticmethod
    def measure(freq_channel, F: Codebook, Q: Codebook, noise: Optional[NoiseModel],
                subcarriers: Sequence[int], p_t: float, rng: Optional[np.random.Generator] = None,
                d: float = 0.5) -> MeasurementSet:
        """
        Y[k] = Q^* H[k] F + V[k] on each probed subcarrier, V[k] ~ CN(0, sigma2 K / P_t).
        noise=None synthesizes noiseless measurements.
        """
        freq_channel = np.asarray(freq_channel)
        n_subcarriers, m_rx, m_tx = freq_channel.shape
        subcarriers = MmWaveFrontend._check_subcarriers(subcarriers, n_subcarriers)

        Y = Q.matrix.conj().T @ freq_channel[subcarriers] @ F.matrix
        if noise is not None:
            if rng is None:
                raise InputError("noisy measurements need a random generator")
            std = np.sqrt(noise.measurement_variance(p_t, n_subcarriers) / 2)
            Y = Y + std * (rng.normal(size=Y.shape) + 1j * rng.normal(size=Y.shape))

        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(m_rx, m_tx, d)
        psi = MmWaveFrontend.assemble_sensing(F, Q, A_tx, A_rx)
        return MeasurementSet(y=MmWaveFrontend.vec(Y), F=F, Q=Q, psi=psi,
                              probed_subcarriers=tuple(subcarriers))

    @staticmethod
    def received_power_map(freq_channel, subcarriers, A_rx, A_tx) -> np.ndarray:
        """Noiseless beam-pair power sum_k |vec(G[k])|^2 over the given subcarriers"""
        freq_channel = np.asarray(freq_channel)
        subcarriers = MmWaveFrontend._check_subcarriers(subcarriers, freq_channel.shape[0])
        G = MmWaveFrontend.beamspace(freq_channel[subcarriers], A_rx, A_tx)
        return np.sum(np.abs(MmWaveFrontend.vec(G)) ** 2, axis=0)

    @staticmethod
    def rank_beam_pairs(power, n: int) -> np.ndarray:
        """Flat indices of the n strongest beam pairs, strongest first (lowest index on ties)"""
        return np.argsort(-np.asarray(power), kind='stable')[:n]

    @staticmethod
    def exhaustive_search(freq_channel, subcarriers, noise: Optional[NoiseModel], p_t: float,
                          rng: Optional[np.random.Generator] = None, noiseless: bool = False,
                          d: float = 0.5) -> BeamPair:
        """Sweep all M_RX * M_TX DFT beam pairs and return the strongest"""
        freq_channel = np.asarray(freq_channel)
        _, m_rx, m_tx = freq_channel.shape
        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(m_rx, m_tx, d)
        if noiseless or noise is None:
            power = MmWaveFrontend.received_power_map(freq_channel, subcarriers, A_rx, A_tx)
        else:
            ms = MmWaveFrontend.measure(freq_channel, A_tx, A_rx, noise, subcarriers, p_t, rng, d)
            power = np.sum(np.abs(ms.y) ** 2, axis=0)
        return BeamPair.from_flat(np.argmax(power), m_rx)

    @staticmethod
    def calibrate_noise(distance: float, snr_db: float, fc: float, p_t: float,
                        n_subcarriers: int, exponent: float = 3.0, channel_gain: float = 1.0) -> float:
        """
        sigma2 such that (P_t/K) * channel_gain / PL(distance) / sigma2 equals the
        target SNR; channel_gain is the mean per-entry channel power before path loss
        """
        if channel_gain <= 0:
            raise InputError(f"channel gain must be positive, got {channel_gain}")
        pathloss = MultiBandChannel.pathloss(distance, fc, exponent)
        sigma2 = (p_t / n_subcarriers) * channel_gain / pathloss / 10 ** (snr_db / 10)
        logger.debug("noise anchored at %.1f m / %.1f dB (gain %.3f): sigma2=%.3e W",
                     distance, snr_db, channel_gain, sigma2)
        return sigma2

    @staticmethod
    def channel_power(ch: ChannelRealization) -> float:
        """
        Mean per-entry power of a rendered channel: the subcarrier average of
        |H_mn[k]|^2 (equal to the tap-energy sum) or |H_mn|^2 for a narrowband band
        """
        band = ch.band
        if band.n_taps is None:
            H = MultiBandChannel.render_narrowband_sub6(ch)
        else:
            H = MultiBandChannel.render_taps(ch)
        return float(np.sum(np.abs(H) ** 2) / (band.m_rx * band.m_tx))

    @staticmethod
    def empirical_snr_db(realizations: Sequence[ChannelRealization], noise: NoiseModel, p_t: float,
                         rng: np.random.Generator, n_draws: int = 10_000) -> float:
        """
        Pre-beamforming per-subcarrier SNR: mean received signal power of the
        rendered channels at P_t/K per subcarrier against the power of n_draws
        receiver noise vectors
        """
        if not realizations:
            raise InputError("need at least one channel realization")
        band = realizations[0].band
        n_subcarriers = band.n_subcarriers or 1
        signal = (p_t / n_subcarriers) * np.mean([MmWaveFrontend.channel_power(ch) for ch in realizations])
        v = np.sqrt(noise.sigma2 / 2) * (rng.normal(size=(n_draws, band.m_rx))
                                         + 1j * rng.normal(size=(n_draws, band.m_rx)))
        return float(10 * np.log10(signal / np.mean(np.abs(v) ** 2)))

    @staticmethod
    def draw_probe_subcarriers(mode: str, n_subcarriers: int, rng: np.random.Generator) -> np.ndarray:
        """One uniformly drawn subcarrier for single_k, every subcarrier for all_k"""
        if mode == 'single_k':
            return np.array([rng.integers(n_subcarriers)])
        if mode == 'all_k':
            return np.arange(n_subcarriers)
        raise ConfigurationError(f"probe mode must be one of {PROBE_MODES}, got '{mode}'")
