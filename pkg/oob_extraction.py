"""
Out-of-band spatial information from the sub-6 GHz channel: least-squares channel
estimate, spatial spectrum, dominant direction, spectrum scaling to the mmWave
beam grid and the prior probability vector over mmWave beam pairs.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from array_codebook import ArrayCodebook, Ula
from exceptions import ConfigurationError, InputError

logger = logging.getLogger(__name__)

KEYS_A = -0.5


@dataclass(frozen=True, eq=False)
class SpatialSpectrum:
    """Non-negative beamspace magnitudes, RX beams along rows, TX beams along columns"""
    mags: np.ndarray

    def __post_init__(self):
        if self.mags.ndim != 2 or self.mags.size == 0:
            raise InputError(f"spatial spectrum must be a non-empty matrix, got shape {self.mags.shape}")
        if np.any(self.mags < 0):
            raise InputError("spatial spectrum entries must be non-negative")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mags.shape

    def to_csv(self, path):
        """Write the magnitude matrix as CSV (rows rx_i, columns tx_j)"""
        frame = pd.DataFrame(
            self.mags,
            index=pd.Index([f"rx_{i}" for i in range(self.mags.shape[0])], name='beam'),
            columns=[f"tx_{j}" for j in range(self.mags.shape[1])],
        )
        frame.to_csv(path)
        return path


@dataclass(frozen=True, eq=False)
class PriorVector:
    """Support prior over flat beam-pair indices, entries in [0, j_p]"""
    p: np.ndarray
    j_p: float

    def __post_init__(self):
        if not 0 < self.j_p <= 1:
            raise ConfigurationError(f"J_p must lie in (0, 1], got {self.j_p}")


@dataclass(frozen=True, eq=False)
class OOBInfo:
    """Everything the mmWave stage takes from the sub-6 GHz band"""
    channel_estimate: np.ndarray
    spectrum: SpatialSpectrum
    scaled: SpatialSpectrum
    prior: PriorVector
    dominant: Tuple[int, int]


def _keys_kernel(x, a: float = KEYS_A):
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x ** 2 + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


class OOBExtraction:
    """Sub-6 GHz stage of OOB-aided beam selection"""

    @staticmethod
    def default_training(m_tx: int, n_tr: int, power: float) -> np.ndarray:
        """
        M_TX x N_tr DFT-row training, every training vector carrying `power`;
        T T^* = (power * N_tr / M_TX) I whenever N_tr >= M_TX
        """
        if n_tr < m_tx:
            raise InputError(f"need N_tr >= M_TX training vectors, got {n_tr} < {m_tx}")
        m = np.arange(m_tx)[:, None]
        n = np.arange(n_tr)[None, :]
        return np.sqrt(power / m_tx) * np.exp(-2j * np.pi * m * n / n_tr)

    @staticmethod
    def estimate_sub6_channel(H, training, sigma2: float,
                              rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Received R = H T + V, V ~ CN(0, sigma2); returns R T^* (T T^*)^-1"""
        H = np.asarray(H)
        T = np.asarray(training)
        if T.shape[0] != H.shape[1]:
            raise InputError(f"training has {T.shape[0]} rows, channel has {H.shape[1]} TX antennas")
        if T.shape[1] < T.shape[0] or np.linalg.matrix_rank(T) < T.shape[0]:
            raise InputError("training matrix must have full row rank")

        R = H @ T
        if sigma2 > 0:
            if rng is None:
                raise InputError("noisy sub-6 training needs a random generator")
            R = R + np.sqrt(sigma2 / 2) * (rng.normal(size=R.shape) + 1j * rng.normal(size=R.shape))

        gram = T @ T.conj().T
        return np.linalg.solve(gram.T, (R @ T.conj().T).T).T

    @staticmethod
    def spatial_spectrum(H_hat, A_rx, A_tx) -> SpatialSpectrum:
        """|A_RX^* H_hat A_TX|"""
        A_rx = getattr(A_rx, 'matrix', A_rx)
        A_tx = getattr(A_tx, 'matrix', A_tx)
        return SpatialSpectrum(np.abs(A_rx.conj().T @ np.asarray(H_hat) @ A_tx))

    @staticmethod
    def dominant_indices(spectrum: SpatialSpectrum) -> Tuple[int, int]:
        """(i, j) of the largest entry; ties go to the lowest i, then the lowest j"""
        i, j = np.unravel_index(np.argmax(spectrum.mags), spectrum.mags.shape)
        return int(i), int(j)

    @staticmethod
    def cubic_convolution_matrix(n_src: int, n_dst: int, a: float = KEYS_A) -> np.ndarray:
        """
        n_dst x n_src Keys cubic convolution weights between beam grids of sizes
        n_src and n_dst, edges replicated
        """
        if n_dst < n_src:
            raise InputError(f"cannot scale {n_src} beams down to {n_dst}")
        u = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
        base = np.floor(u).astype(int)
        t = u - base

        W = np.zeros((n_dst, n_src))
        rows = np.arange(n_dst)
        for offset in (-1, 0, 1, 2):
            cols = np.clip(base + offset, 0, n_src - 1)
            np.add.at(W, (rows, cols), _keys_kernel(t - offset, a))
        return W

    @staticmethod
    def scale_spectrum(spectrum: SpatialSpectrum, target: Tuple[int, int]) -> SpatialSpectrum:
        """Bicubic interpolation of the spectrum onto an M_RX x M_TX grid, clamped at 0"""
        m_rx, m_tx = target
        W_rx = OOBExtraction.cubic_convolution_matrix(spectrum.shape[0], m_rx)
        W_tx = OOBExtraction.cubic_convolution_matrix(spectrum.shape[1], m_tx)
        return SpatialSpectrum(np.maximum(W_rx @ spectrum.mags @ W_tx.T, 0.0))

    @staticmethod
    def prior_vector(scaled: SpatialSpectrum, j_p: float) -> PriorVector:
        """p = J_p (g - min g) / max(g - min g) with g the column-major vec of the spectrum"""
        if not 0 < j_p <= 1:
            raise ConfigurationError(f"J_p must lie in (0, 1], got {j_p}")
        g = scaled.mags.reshape(-1, order='F')
        shifted = g - g.min()
        peak = shifted.max()
        if peak == 0:
            logger.warning("constant spatial spectrum; prior degenerates to a uniform J_p/2")
            return PriorVector(p=np.full(g.size, j_p / 2), j_p=j_p)
        return PriorVector(p=j_p * shifted / peak, j_p=j_p)

    @staticmethod
    def extract(H_sub6, target: Tuple[int, int], sigma2: float, power: float, j_p: float,
                rng: Optional[np.random.Generator] = None, n_tr: Optional[int] = None,
                d: float = 0.5) -> OOBInfo:
        """Full sub-6 GHz pipeline: train, estimate, transform, scale, build the prior"""
        H_sub6 = np.asarray(H_sub6)
        m_rx, m_tx = H_sub6.shape
        training = OOBExtraction.default_training(m_tx, n_tr or m_tx, power)
        H_hat = OOBExtraction.estimate_sub6_channel(H_sub6, training, sigma2, rng)

        A_rx = ArrayCodebook.dft_codebook(Ula(m_rx, d))
        A_tx = ArrayCodebook.dft_codebook(Ula(m_tx, d))
        spectrum = OOBExtraction.spatial_spectrum(H_hat, A_rx, A_tx)
        scaled = OOBExtraction.scale_spectrum(spectrum, target)
        return OOBInfo(
            channel_estimate=H_hat,
            spectrum=spectrum,
            scaled=scaled,
            prior=OOBExtraction.prior_vector(scaled, j_p),
            dominant=OOBExtraction.dominant_indices(spectrum),
        )
