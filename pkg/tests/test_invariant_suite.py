import numpy as np
import pytest

from invariant_suite import CheckResult, InvariantSuite
from multiband_channel import MultiBandChannel


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def test_kronecker_identity(rng):
    assert InvariantSuite.kronecker_identity(rng, 30).passed


def test_dft_unitarity(rng):
    assert InvariantSuite.dft_unitarity(rng).passed


def test_score_oracles(rng):
    result = InvariantSuite.score_oracles(rng, 15)
    assert result.passed, result.detail


def test_noiseless_recovery(rng):
    result = InvariantSuite.noiseless_recovery(rng, 50)
    assert result.passed, result.detail


def test_generator_consistency(rng):
    result = InvariantSuite.generator_consistency(rng, 100_000, 300_000)
    assert result.passed, result.detail


def test_snr_anchoring(rng):
    result = InvariantSuite.snr_anchoring(rng, realizations=3000)
    assert result.passed, result.detail
    assert "dB at 80 m over 3000 channels" in result.detail


def test_snr_anchoring_fails_with_unscaled_noise(rng, monkeypatch):
    # noise set from path loss alone ignores the rendered channel power
    monkeypatch.setattr(MultiBandChannel, 'expected_entry_gain', staticmethod(lambda band: 1.0))
    result = InvariantSuite.snr_anchoring(rng, realizations=500)
    assert not result.passed, result.detail


def test_run_all_quick():
    results = InvariantSuite.run_all(seed=3, quick=True)
    assert [r.name for r in results] == ['kronecker_identity', 'dft_unitarity', 'score_oracles',
                                         'noiseless_recovery', 'generator_consistency', 'snr_anchoring']
    assert all(isinstance(r, CheckResult) and r.passed for r in results)
