"""
Self-checks behind `app.py validate`: measurement identity, DFT unitarity,
selection score oracles, noiseless recovery, generator consistency and SNR anchoring.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from array_codebook import ArrayCodebook, Ula
from experiment_config import default_mmwave_spec, default_sub6_spec
from mmwave_frontend import MmWaveFrontend, NoiseModel, dbm_to_watts, P_T_DBM
from multiband_channel import MultiBandChannel
from oob_extraction import PriorVector
from sparse_beamsel import SparseBeamSelection, WeightingConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _complex_normal(rng, shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def _relative_error(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


class InvariantSuite:
    """Named pass/fail checks of the simulator's core identities"""

    @staticmethod
    def kronecker_identity(rng: np.random.Generator, instances: int = 200) -> CheckResult:
        worst = 0.0
        for _ in range(instances):
            m_rx, m_tx = rng.integers(2, 9, size=2)
            n_rx, n_tx = rng.integers(1, 9, size=2)
            F = ArrayCodebook.random_codebook(Ula(m_tx), n_tx, 3, rng)
            Q = ArrayCodebook.random_codebook(Ula(m_rx), n_rx, 3, rng)
            H = _complex_normal(rng, (1, m_rx, m_tx))
            ms = MmWaveFrontend.measure(H, F, Q, None, [0], 1.0)
            A_rx, A_tx = MmWaveFrontend.dft_dictionaries(m_rx, m_tx)
            g = MmWaveFrontend.vec(MmWaveFrontend.beamspace(H[0], A_rx, A_tx))
            worst = max(worst, _relative_error(ms.psi @ g, ms.y[0]))
        return CheckResult('kronecker_identity', worst < 1e-10, f"worst relative error {worst:.2e}")

    @staticmethod
    def dft_unitarity(rng: np.random.Generator) -> CheckResult:
        worst = 0.0
        for m in (4, 32):
            A = ArrayCodebook.dft_codebook(Ula(m)).matrix
            worst = max(worst, float(np.linalg.norm(A.conj().T @ A - np.eye(m))))
            H = _complex_normal(rng, (m, m))
            G = MmWaveFrontend.beamspace(H, A, A)
            worst = max(worst, float(np.linalg.norm(A @ G @ A.conj().T - H)))
        return CheckResult('dft_unitarity', worst < 1e-10, f"worst Frobenius error {worst:.2e}")

    @staticmethod
    def score_oracles(rng: np.random.Generator, instances: int = 100) -> CheckResult:
        worst = 0.0
        collapsed = True
        weighting = WeightingConfig()
        for _ in range(instances):
            m_rx, m_tx = rng.integers(2, 9, size=2)
            n_rx, n_tx = rng.integers(1, 9, size=2)
            F = ArrayCodebook.random_codebook(Ula(m_tx), n_tx, 2, rng)
            Q = ArrayCodebook.random_codebook(Ula(m_rx), n_rx, 2, rng)
            H = _complex_normal(rng, (3, m_rx, m_tx))
            ms = MmWaveFrontend.measure(H, F, Q, NoiseModel(0.1), [0, 1, 2], 1.0, rng)
            prior = PriorVector(p=rng.random(m_rx * m_tx), j_p=1.0)

            loop = np.array([[abs(np.vdot(ms.psi[:, r], y)) for r in range(ms.psi.shape[1])]
                             for y in ms.y])
            scale = float(np.max(loop))
            omp = SparseBeamSelection.omp_select(ms, 1)
            worst = max(worst, float(np.max(np.abs(omp.scores - loop[1]))) / scale)
            somp = SparseBeamSelection.somp_select(ms)
            worst = max(worst, float(np.max(np.abs(somp.scores - loop.sum(axis=0)))) / scale)

            weights = SparseBeamSelection.logit_weights(prior, weighting, float(np.mean(loop[1])))
            lw = SparseBeamSelection.lw_omp_select(ms, 1, prior, weighting)
            worst = max(worst, float(np.max(np.abs(lw.scores - (loop[1] + weights)))) / scale)

            uniform = PriorVector(p=np.full(m_rx * m_tx, 0.3), j_p=1.0)
            collapsed &= SparseBeamSelection.lw_omp_select(ms, 1, uniform, weighting).pair == omp.pair
            collapsed &= SparseBeamSelection.lw_somp_select(ms, uniform, weighting).pair == somp.pair
        passed = worst < 1e-12 and collapsed
        return CheckResult('score_oracles', passed,
                           f"worst relative score error {worst:.2e}, uniform-prior collapse {collapsed}")

    @staticmethod
    def noiseless_recovery(rng: np.random.Generator, trials: int = 1000) -> CheckResult:
        m = 8
        ula = Ula(m)
        A = ArrayCodebook.dft_codebook(ula)
        grid = A.matrix
        weighting = WeightingConfig()
        failures = 0
        for _ in range(trials):
            i, j = rng.integers(0, m, size=2)
            H = np.outer(grid[:, i], grid[:, j].conj())[None, :, :] * np.ones((2, 1, 1))
            ms = MmWaveFrontend.measure(H, A, A, None, [0, 1], 1.0)
            r = j * m + i
            p = np.zeros(m * m)
            p[r] = 1.0
            prior = PriorVector(p=p, j_p=1.0)
            picks = [
                SparseBeamSelection.omp_select(ms, 0).pair.r,
                SparseBeamSelection.lw_omp_select(ms, 0, prior, weighting).pair.r,
                SparseBeamSelection.somp_select(ms).pair.r,
                SparseBeamSelection.lw_somp_select(ms, prior, weighting).pair.r,
                MmWaveFrontend.exhaustive_search(H, [0], None, 1.0, noiseless=True).r,
            ]
            failures += int(any(pick != r for pick in picks))
        return CheckResult('noiseless_recovery', failures == 0, f"{failures} of {trials} trials missed")

    @staticmethod
    def generator_consistency(rng: np.random.Generator, draws: int = 100_000,
                              ray_samples: int = 1_000_000) -> CheckResult:
        problems = []

        spec = default_mmwave_spec()
        a, b, _ = MultiBandChannel.generate_clusters(spec, spec, rng)
        if a != b:
            problems.append("identical specs produced different cluster sets")

        tau_max, separation = 1.0, 0.6
        taus = rng.uniform(0, tau_max, draws)
        kept = np.zeros(draws, dtype=bool)
        kept[MultiBandChannel.replacement_index_set(taus, tau_max, separation, rng)] = True
        expected = 1 - np.minimum(1.0, separation * taus / tau_max)
        gap = abs(kept.mean() - expected.mean())
        if gap > 0.01:
            problems.append(f"replacement rate off by {gap:.3f}")
        bins = np.linspace(0, tau_max, 6)
        for lo, hi in zip(bins[:-1], bins[1:]):
            mask = (taus >= lo) & (taus < hi)
            gap = abs(kept[mask].mean() - expected[mask].mean())
            if gap > 0.03:
                problems.append(f"replacement rate off by {gap:.3f} for tau in [{lo:.1f}, {hi:.1f})")

        for distribution in ('uniform', 'gaussian', 'laplacian', 'exponential'):
            sigma = 0.035
            offsets = MultiBandChannel.draw_offsets(ray_samples, sigma, distribution, rng)
            rms = float(np.sqrt(np.mean(offsets ** 2)))
            if abs(rms / sigma - 1) > 0.01:
                problems.append(f"{distribution} ray spread RMS {rms:.4f} vs {sigma}")
        sub6 = default_sub6_spec()
        offsets = MultiBandChannel.draw_offsets(ray_samples, sub6.sigma_tau_ray, 'uniform', rng)
        rms = float(np.sqrt(np.mean(offsets ** 2)))
        if abs(rms / sub6.sigma_tau_ray - 1) > 0.01:
            problems.append(f"ray delay RMS {rms:.3e} vs {sub6.sigma_tau_ray:.3e}")

        return CheckResult('generator_consistency', not problems, "; ".join(problems) or "ok")

    @staticmethod
    def snr_anchoring(rng: np.random.Generator, realizations: int = 10_000,
                      draws: int = 10_000) -> CheckResult:
        sub6, spec = default_sub6_spec(), default_mmwave_spec()
        p_t = dbm_to_watts(P_T_DBM)
        noise = NoiseModel.anchored(80.0, -10.0, spec, p_t)
        seed = int(rng.integers(2 ** 32))
        channels = [MultiBandChannel.generate_realization(sub6, spec, 80.0, seed, trial).mmwave
                    for trial in range(realizations)]
        snr = MmWaveFrontend.empirical_snr_db(channels, noise, p_t, rng, draws)
        return CheckResult('snr_anchoring', abs(snr + 10.0) < 0.1,
                           f"empirical SNR {snr:.3f} dB at 80 m over {realizations} channels")

    @staticmethod
    def run_all(seed: int = 0, quick: bool = False) -> List[CheckResult]:
        """Run every check; quick mode shrinks the Monte-Carlo sizes"""
        rng = np.random.default_rng(seed)
        checks: List[Callable[[], CheckResult]] = [
            lambda: InvariantSuite.kronecker_identity(rng, 50 if quick else 200),
            lambda: InvariantSuite.dft_unitarity(rng),
            lambda: InvariantSuite.score_oracles(rng, 20 if quick else 100),
            lambda: InvariantSuite.noiseless_recovery(rng, 100 if quick else 1000),
            lambda: InvariantSuite.generator_consistency(
                rng, 100_000, 300_000 if quick else 1_000_000),
            lambda: InvariantSuite.snr_anchoring(rng, 3000 if quick else 10_000),
        ]
        results = []
        for check in checks:
            result = check()
            log = logger.info if result.passed else logger.error
            log("%-22s %s  %s", result.name, 'PASS' if result.passed else 'FAIL', result.detail)
            results.append(result)
        return results
