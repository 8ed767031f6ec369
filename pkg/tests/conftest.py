"""Shared fixtures: seeded generators and small, fast band specs"""
import numpy as np
import pytest

from array_codebook import ArrayCodebook, Ula
from experiment_config import ExperimentConfig, default_mmwave_spec, default_sub6_spec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mmwave_spec():
    """8 x 8 arrays, 16 taps over 16 subcarriers; tap span covers the delay spread"""
    return default_mmwave_spec(m_tx=8, m_rx=8, n_subcarriers=16, n_taps=16, cp_length=16)


@pytest.fixture
def sub6_spec():
    return default_sub6_spec()


@pytest.fixture
def small_config(small_mmwave_spec, tmp_path):
    return ExperimentConfig(
        name='small',
        mmwave=small_mmwave_spec,
        beam_grid=((2, 2), (4, 4)),
        coherence=(256.0, float('inf')),
        trials=4,
        methods=('oracle', 'exhaustive', 'omp', 'lw_omp', 'structured_lw_omp',
                 'somp', 'lw_somp', 'structured_lw_somp'),
        seed=7,
        output_dir=str(tmp_path / 'results'),
    ).validate()


def on_grid_channel(m_rx, m_tx, i, j, n_subcarriers=1):
    """Rank-one channel whose beamspace has a single unit entry at (i, j)"""
    a_rx = ArrayCodebook.dft_codebook(Ula(m_rx)).matrix[:, i]
    a_tx = ArrayCodebook.dft_codebook(Ula(m_tx)).matrix[:, j]
    H = np.outer(a_rx, a_tx.conj())
    return np.repeat(H[None, :, :], n_subcarriers, axis=0)


def complex_normal(rng, shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)
