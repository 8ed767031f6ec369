"""
Single-step greedy beam-pair selection (OMP, SOMP and their logit-weighted variants)
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from exceptions import ConfigurationError, InputError
from mmwave_frontend import BeamPair, MeasurementSet
from oob_extraction import PriorVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightingConfig:
    """
    Logit weighting w(p) = J_w log(p / (1 - p)). j_w=None matches the weight scale
    to the mean unweighted score; j_w_scale multiplies whichever J_w is in effect.
    """
    j_w: Optional[float] = None
    epsilon_p: float = 1e-3
    j_w_scale: float = 1.0

    def __post_init__(self):
        if self.j_w is not None and not self.j_w > 0:
            raise ConfigurationError(f"J_w must be positive, got {self.j_w}")
        if not 0 < self.epsilon_p < 0.5:
            raise ConfigurationError(f"epsilon_p must lie in (0, 1/2), got {self.epsilon_p}")
        if not self.j_w_scale >= 0:
            raise ConfigurationError(f"j_w_scale must be non-negative, got {self.j_w_scale}")


@dataclass(frozen=True, eq=False)
class SelectionResult:
    pair: BeamPair
    scores: np.ndarray
    method: str
    codebook: str = 'random'

    @property
    def tag(self) -> str:
        return self.method if self.codebook == 'random' else f"structured_{self.method}"


class SparseBeamSelection:
    """Beam-pair selection from compressed measurements"""

    @staticmethod
    def correlations(ms: MeasurementSet) -> np.ndarray:
        """|Psi^* y[k]| for every probed subcarrier, shape (n_probed, M_RX * M_TX)"""
        return np.abs(ms.psi.conj().T @ ms.y.T).T

    @staticmethod
    def logit_weights(prior: PriorVector, cfg: WeightingConfig, scale: float) -> np.ndarray:
        """J_w log(p~/(1-p~)) with p~ = clip(p, eps, 1-eps); J_w defaults to `scale`"""
        j_w = (cfg.j_w if cfg.j_w is not None else scale) * cfg.j_w_scale
        p = np.clip(prior.p, cfg.epsilon_p, 1 - cfg.epsilon_p)
        return j_w * np.log(p / (1 - p))

    @staticmethod
    def _result(scores, ms: MeasurementSet, method: str, codebook: str) -> SelectionResult:
        m_rx = ms.psi.shape[1] // ms.F.m
        return SelectionResult(pair=BeamPair.from_flat(np.argmax(scores), m_rx),
                               scores=scores, method=method, codebook=codebook)

    @staticmethod
    def _weighted(scores, prior: PriorVector, cfg: WeightingConfig):
        if prior.p.size != scores.size:
            raise InputError(f"prior has {prior.p.size} entries, expected {scores.size}")
        weights = SparseBeamSelection.logit_weights(prior, cfg, float(np.mean(scores)))
        # a constant shift cannot move the argmax; skip it so the argmax stays exact
        if np.all(weights == weights[0]):
            return scores
        return scores + weights

    @staticmethod
    def omp_select(ms: MeasurementSet, k: int, codebook: str = 'random') -> SelectionResult:
        """r* = argmax_r |Psi_r^* y[k]|"""
        ms.y_for(k)
        scores = SparseBeamSelection.correlations(ms)[ms.probed_subcarriers.index(k)]
        return SparseBeamSelection._result(scores, ms, 'omp', codebook)

    @staticmethod
    def lw_omp_select(ms: MeasurementSet, k: int, prior: PriorVector, w: WeightingConfig,
                      codebook: str = 'random') -> SelectionResult:
        """r* = argmax_r |Psi_r^* y[k]| + w(p_r)"""
        ms.y_for(k)
        scores = SparseBeamSelection.correlations(ms)[ms.probed_subcarriers.index(k)]
        return SparseBeamSelection._result(
            SparseBeamSelection._weighted(scores, prior, w), ms, 'lw_omp', codebook)

    @staticmethod
    def somp_select(ms: MeasurementSet, codebook: str = 'random') -> SelectionResult:
        """r* = argmax_r sum_k |Psi_r^* y[k]| over the probed subcarriers"""
        scores = np.sum(SparseBeamSelection.correlations(ms), axis=0)
        return SparseBeamSelection._result(scores, ms, 'somp', codebook)

    @staticmethod
    def lw_somp_select(ms: MeasurementSet, prior: PriorVector, w: WeightingConfig,
                       codebook: str = 'random') -> SelectionResult:
        scores = np.sum(SparseBeamSelection.correlations(ms), axis=0)
        return SparseBeamSelection._result(
            SparseBeamSelection._weighted(scores, prior, w), ms, 'lw_somp', codebook)
