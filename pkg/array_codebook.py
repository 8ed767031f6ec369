"""
ULA array responses and analog beamforming codebooks (DFT, random quantized-phase,
and out-of-band structured random codebooks)
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from exceptions import ConfigurationError, InputError

logger = logging.getLogger(__name__)

CODEBOOK_KINDS = ('dft', 'random_quantized', 'structured', 'deterministic_grid')


@dataclass(frozen=True)
class Ula:
    """Uniform linear array with `m` elements spaced `d` wavelengths apart"""
    m: int
    d: float = 0.5

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"ULA needs at least one element, got m={self.m}")
        if self.d <= 0:
            raise ConfigurationError(f"ULA spacing must be positive, got d={self.d}")


@dataclass(frozen=True)
class BeamGrid:
    """Normalized spatial angles nu_m = (2m-1-M)/(2M) and their physical angles"""
    nu: np.ndarray
    angles: np.ndarray

    @classmethod
    def for_ula(cls, ula: Ula):
        m = np.arange(1, ula.m + 1)
        nu = (2 * m - 1 - ula.m) / (2 * ula.m)
        if np.any(np.abs(nu / ula.d) > 1):
            raise ConfigurationError(
                f"beam grid undefined for spacing d={ula.d}: |nu/d| exceeds 1")
        return cls(nu=nu, angles=np.arcsin(nu / ula.d))


@dataclass(frozen=True)
class Codebook:
    """m x n matrix of constant-modulus codewords (one codeword per column)"""
    matrix: np.ndarray
    kind: str
    phase_bits: Optional[int] = None

    def __post_init__(self):
        if self.kind not in CODEBOOK_KINDS:
            raise ConfigurationError(f"unknown codebook kind '{self.kind}'")

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_beams(self) -> int:
        return self.matrix.shape[1]

    def to_dict(self) -> dict:
        """JSON-friendly dump, complex entries as [re, im] pairs (row-major)"""
        return {
            'kind': self.kind,
            'phase_bits': self.phase_bits,
            'shape': list(self.matrix.shape),
            'entries': [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix],
        }


class ArrayCodebook:
    """Array responses and codebook construction"""

    @staticmethod
    def array_response(ula: Ula, angle):
        """
        a(theta) = 1/sqrt(M) [1, e^{j2pi d sin theta}, ..., e^{j2pi(M-1) d sin theta}]^T
        Scalar angle -> length-M vector; array of angles -> M x len(angles) matrix.
        """
        angle = np.asarray(angle, dtype=float)
        n = np.arange(ula.m)
        phase = 2 * np.pi * ula.d * np.multiply.outer(n, np.sin(angle))
        return np.exp(1j * phase) / np.sqrt(ula.m)

    @staticmethod
    def dft_codebook(ula: Ula) -> Codebook:
        """Columns a(theta_m) on the beam grid; unitary for d = 1/2"""
        grid = BeamGrid.for_ula(ula)
        matrix = ArrayCodebook.array_response(ula, grid.angles)
        bits = int(np.log2(ula.m)) if ula.m & (ula.m - 1) == 0 else None
        return Codebook(matrix=matrix, kind='dft', phase_bits=bits)

    @staticmethod
    def random_codebook(ula: Ula, n_beams: int, phase_bits: int, rng: np.random.Generator) -> Codebook:
        """Entries e^{j zeta}/sqrt(M), zeta uniform over the 2^D quantized phases"""
        if n_beams < 1:
            raise InputError(f"n_beams must be >= 1, got {n_beams}")
        if phase_bits < 1:
            raise InputError(f"phase_bits must be >= 1, got {phase_bits}")
        levels = rng.integers(0, 2 ** phase_bits, size=(ula.m, n_beams))
        zeta = 2 * np.pi * levels / 2 ** phase_bits
        return Codebook(matrix=np.exp(1j * zeta) / np.sqrt(ula.m),
                        kind='random_quantized', phase_bits=phase_bits)

    @staticmethod
    def dominant_bin_angles(ula: Ula, dominant_bin: int, m_sub6: int, d_sub6: float = 0.5):
        """
        Beam-grid angles of `ula` whose spatial frequency falls in the sub-6 GHz bin
        [w_j - 1/(2M_sub6), w_j + 1/(2M_sub6)). `dominant_bin` is 0-based.
        """
        if not 0 <= dominant_bin < m_sub6:
            raise InputError(f"dominant bin {dominant_bin} outside [0, {m_sub6})")
        center = (2 * (dominant_bin + 1) - 1 - m_sub6) / (2 * m_sub6)
        low, high = center - 1 / (2 * m_sub6), center + 1 / (2 * m_sub6)

        angles = BeamGrid.for_ula(ula).angles
        # same physical angle seen through the sub-6 array spacing
        omega = d_sub6 * np.sin(angles)
        return angles[(omega >= low) & (omega < high)]

    @staticmethod
    def grid_codebook(ula: Ula, angles) -> Codebook:
        """Deterministic codebook of array responses steered at the given angles"""
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        return Codebook(matrix=ArrayCodebook.array_response(ula, angles).reshape(ula.m, -1),
                        kind='deterministic_grid')

    @staticmethod
    def select_structured(super_codebook: Codebook, deterministic, n_beams: int):
        """
        Indices of the n_beams codewords of the super-codebook most correlated with
        the deterministic codebook (largest row 2-norms of F_super^* D), ascending.
        """
        if n_beams > super_codebook.n_beams:
            raise InputError(
                f"cannot select {n_beams} codewords from a super-codebook of {super_codebook.n_beams}")
        if isinstance(deterministic, Codebook):
            deterministic = deterministic.matrix
        correlation = super_codebook.matrix.conj().T @ np.asarray(deterministic)
        norms = np.linalg.norm(correlation, axis=1)
        # stable sort: lowest index wins ties
        order = np.argsort(-norms, kind='stable')
        return np.sort(order[:n_beams])

    @staticmethod
    def structured_codebook(ula: Ula, dominant_bin: int, m_sub6: int, n_beams: int,
                            phase_bits: int, rng: np.random.Generator,
                            super_size: Optional[int] = None, d_sub6: float = 0.5) -> Codebook:
        """
        Structured random codebook: keep the random codewords that correlate best
        with the mmWave grid beams inside the dominant sub-6 GHz angle bin.
        Works for precoders (TX array, dominant AoD bin) and combiners (RX array,
        dominant AoA bin) alike.
        """
        if super_size is None:
            super_size = 4 * max(n_beams, ula.m)

        angles = ArrayCodebook.dominant_bin_angles(ula, dominant_bin, m_sub6, d_sub6)
        if angles.size == 0:
            logger.warning(
                "no mmWave beam falls in sub-6 bin %d of %d; using an unstructured random codebook",
                dominant_bin, m_sub6)
            return ArrayCodebook.random_codebook(ula, n_beams, phase_bits, rng)

        deterministic = ArrayCodebook.grid_codebook(ula, angles)
        super_codebook = ArrayCodebook.random_codebook(ula, super_size, phase_bits, rng)
        selected = ArrayCodebook.select_structured(super_codebook, deterministic, n_beams)
        logger.debug("structured codebook: |J|=%d, picked %d of %d codewords",
                     angles.size, n_beams, super_size)
        return Codebook(matrix=super_codebook.matrix[:, selected], kind='structured',
                        phase_bits=phase_bits)
