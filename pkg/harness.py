"""
Monte-Carlo experiment harness: per-trial pipeline (channel, OOB prior, codebooks,
measurements, selection), effective rate and success percentage metrics, metric
tables and result files.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from array_codebook import ArrayCodebook, Ula
from exceptions import InputError
from experiment_config import ExperimentConfig
from mmwave_frontend import BeamPair, MmWaveFrontend, NoiseModel, dbm_to_watts
from multiband_channel import MultiBandChannel, spawn_rng
from oob_extraction import OOBExtraction
from sparse_beamsel import SparseBeamSelection, WeightingConfig

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ['method', 'n_meas', 'T_c', 'R_eff', 'SP_B1', 'SP_B5', 'E']
SWEEP_COLUMN = 'sweep_value'
TOP_N = 5


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """One method's outcome on one trial channel"""
    trial: int
    method: str
    n_meas: int
    pair: BeamPair
    spectral_efficiency: np.ndarray
    best_pairs: tuple
    sweep_value: Optional[float] = None

    def __post_init__(self):
        if np.any(self.spectral_efficiency < 0):
            raise InputError("spectral efficiencies must be non-negative")

    def to_dict(self) -> dict:
        return {
            'trial': self.trial,
            'method': self.method,
            'n_meas': self.n_meas,
            'sweep_value': self.sweep_value,
            'pair': {'i': self.pair.i, 'j': self.pair.j, 'r': self.pair.r},
            'mean_se': float(np.mean(self.spectral_efficiency)),
            'best_pairs': [int(r) for r in self.best_pairs],
        }


@dataclass(frozen=True, eq=False)
class MetricTable:
    """Rows keyed by (sweep_value, method, n_meas, T_c)"""
    frame: pd.DataFrame

    @classmethod
    def empty(cls, with_sweep: bool = False):
        columns = METRIC_COLUMNS + ([SWEEP_COLUMN] if with_sweep else [])
        return cls(pd.DataFrame(columns=columns))

    @property
    def has_sweep(self) -> bool:
        return SWEEP_COLUMN in self.frame.columns

    def __len__(self):
        return len(self.frame)

    def lookup(self, method: str, n_meas: int, t_c: float, sweep_value: Optional[float] = None):
        """The single matching row as a dict"""
        mask = ((self.frame['method'] == method) & (self.frame['n_meas'] == n_meas)
                & (self.frame['T_c'] == t_c))
        if sweep_value is not None:
            mask &= np.isclose(self.frame[SWEEP_COLUMN].astype(float), sweep_value)
        rows = self.frame[mask]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows for {(method, n_meas, t_c, sweep_value)}")
        return rows.iloc[0].to_dict()

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format='%.10g')
        return path


class ExperimentHarness:
    """Experiment orchestration and metrics"""

    @staticmethod
    def eta(n_meas: int, t_c: float) -> float:
        """Fraction of the coherence interval left for data, max(0, 1 - N/T_c)"""
        if math.isinf(t_c):
            return 1.0
        return max(0.0, 1.0 - n_meas / t_c)

    @staticmethod
    def spectral_efficiency(beamspace_gain, pair: BeamPair, snr_scale: float) -> np.ndarray:
        """log2(1 + P_t/(K sigma2) |G[k]_{i,j}|^2) for every subcarrier k"""
        return np.log2(1.0 + snr_scale * beamspace_gain[:, pair.i, pair.j])

    @staticmethod
    def effective_rate(records: Sequence[TrialRecord], t_c: float, n_meas: int) -> float:
        """R_eff = eta/(E K) sum_e sum_k SE_k"""
        if not records:
            return 0.0
        mean_se = float(np.mean([np.mean(rec.spectral_efficiency) for rec in records]))
        return ExperimentHarness.eta(n_meas, t_c) * mean_se

    @staticmethod
    def success_percentage(records: Sequence[TrialRecord], n: int,
                           ground_truth: Optional[Dict[int, Sequence[int]]] = None) -> float:
        """Percent of trials whose selected pair lies in the top-n ground-truth set B_n"""
        if not records:
            return 0.0
        hits = 0
        for rec in records:
            truth = ground_truth[rec.trial] if ground_truth is not None else rec.best_pairs
            hits += int(rec.pair.r in set(int(r) for r in truth[:n]))
        return 100.0 * hits / len(records)

    @staticmethod
    def apply_sweep(config: ExperimentConfig, value: Optional[float]) -> ExperimentConfig:
        """Config with the swept parameter set to `value`"""
        if config.sweep is None or value is None:
            return config
        parameter = config.sweep.parameter
        if parameter == 'sub6_aoa':
            return replace(config, sub6_angles=(float(value), 0.0))
        if parameter == 'sub6_angle_spread':
            return replace(config, sub6=replace(config.sub6, sigma_aoa_ray=float(value),
                                                sigma_aod_ray=float(value)))
        return replace(config, j_w_scale=float(value))

    @staticmethod
    def noise_models(config: ExperimentConfig):
        """(mmWave NoiseModel, sub-6 noise variance) from the configured SNR anchors"""
        p_t = dbm_to_watts(config.p_t_dbm)
        noise = NoiseModel.anchored(config.snr_anchor[0], config.snr_anchor[1], config.mmwave, p_t)
        sigma2_sub6 = NoiseModel.anchored(
            config.sub6_snr_anchor[0], config.sub6_snr_anchor[1], config.sub6, p_t).sigma2
        return noise, sigma2_sub6

    @staticmethod
    def run_trial(config: ExperimentConfig, trial: int,
                  sweep_value: Optional[float] = None) -> List[TrialRecord]:
        """All configured methods at every training size on one trial channel"""
        cfg = ExperimentHarness.apply_sweep(config, sweep_value)
        seed, mm, sub6 = cfg.seed, cfg.mmwave, cfg.sub6
        n_sub = mm.n_subcarriers
        p_t = dbm_to_watts(cfg.p_t_dbm)
        noise, sigma2_sub6 = ExperimentHarness.noise_models(cfg)

        realization = MultiBandChannel.generate_realization(
            sub6, mm, cfg.distance, seed, trial,
            sub6_angles=cfg.sub6_angles, mmwave_angles=cfg.mmwave_angles)
        H = MultiBandChannel.render_freq(MultiBandChannel.render_taps(realization.mmwave), n_sub)
        H_sub6 = MultiBandChannel.render_narrowband_sub6(realization.sub6)

        oob = OOBExtraction.extract(H_sub6, (mm.m_rx, mm.m_tx), sigma2_sub6, p_t, cfg.j_p,
                                    rng=spawn_rng(seed, trial, 'sub6_noise'), d=sub6.d)
        i_bar, j_bar = oob.dominant

        probe_rng = spawn_rng(seed, trial, 'probe')
        k_single = int(MmWaveFrontend.draw_probe_subcarriers('single_k', n_sub, probe_rng)[0])
        probed = ([k_single] if cfg.probe_mode == 'single_k'
                  else MmWaveFrontend.draw_probe_subcarriers('all_k', n_sub, probe_rng).tolist())

        A_rx, A_tx = MmWaveFrontend.dft_dictionaries(mm.m_rx, mm.m_tx, mm.d)
        gain = np.abs(MmWaveFrontend.beamspace(H, A_rx, A_tx)) ** 2
        truth_band = gain if cfg.truth_scope == 'wideband' else gain[probed]
        best = tuple(int(r) for r in MmWaveFrontend.rank_beam_pairs(
            MmWaveFrontend.vec(truth_band.sum(axis=0)), TOP_N))
        snr_scale = p_t / (n_sub * noise.sigma2)
        weighting = WeightingConfig(j_w=cfg.j_w, epsilon_p=cfg.epsilon_p, j_w_scale=cfg.j_w_scale)

        def record(method, n_meas, pair):
            return TrialRecord(
                trial=trial, method=method, n_meas=n_meas, pair=pair,
                spectral_efficiency=ExperimentHarness.spectral_efficiency(gain, pair, snr_scale),
                best_pairs=best, sweep_value=sweep_value)

        records = []
        full_sweep = mm.m_rx * mm.m_tx
        if 'oracle' in cfg.methods:
            # perfect-CSI pair with the highest spectral efficiency averaged over all subcarriers
            mean_se = np.mean(np.log2(1.0 + snr_scale * gain), axis=0)
            oracle = BeamPair.from_flat(np.argmax(MmWaveFrontend.vec(mean_se)), mm.m_rx)
            records.append(record('oracle', full_sweep, oracle))
        if 'exhaustive' in cfg.methods:
            pair = MmWaveFrontend.exhaustive_search(
                H, probed, noise, p_t, spawn_rng(seed, trial, 'exhaustive_noise'), d=mm.d)
            records.append(record('exhaustive', full_sweep, pair))

        random_methods = [m for m in ('omp', 'lw_omp', 'somp', 'lw_somp') if m in cfg.methods]
        structured_methods = [m for m in ('structured_lw_omp', 'structured_lw_somp') if m in cfg.methods]
        ula_rx, ula_tx = Ula(mm.m_rx, mm.d), Ula(mm.m_tx, mm.d)

        for g, (n_rx, n_tx) in enumerate(cfg.beam_grid):
            n_meas = n_rx * n_tx
            if random_methods:
                cb_rng = spawn_rng(seed, trial, 'codebook', g)
                F = ArrayCodebook.random_codebook(ula_tx, n_tx, cfg.phase_bits, cb_rng)
                Q = ArrayCodebook.random_codebook(ula_rx, n_rx, cfg.phase_bits, cb_rng)
                ms = MmWaveFrontend.measure(H, F, Q, noise, probed, p_t,
                                            spawn_rng(seed, trial, 'measurement_noise', g), mm.d)
                for method in random_methods:
                    if method == 'omp':
                        result = SparseBeamSelection.omp_select(ms, k_single)
                    elif method == 'lw_omp':
                        result = SparseBeamSelection.lw_omp_select(ms, k_single, oob.prior, weighting)
                    elif method == 'somp':
                        result = SparseBeamSelection.somp_select(ms)
                    else:
                        result = SparseBeamSelection.lw_somp_select(ms, oob.prior, weighting)
                    records.append(record(method, n_meas, result.pair))

            if structured_methods:
                st_rng = spawn_rng(seed, trial, 'structured_codebook', g)
                F = ArrayCodebook.structured_codebook(ula_tx, j_bar, sub6.m_tx, n_tx, cfg.phase_bits,
                                                      st_rng, cfg.super_size, sub6.d)
                Q = ArrayCodebook.structured_codebook(ula_rx, i_bar, sub6.m_rx, n_rx, cfg.phase_bits,
                                                      st_rng, cfg.super_size, sub6.d)
                ms = MmWaveFrontend.measure(H, F, Q, noise, probed, p_t,
                                            spawn_rng(seed, trial, 'structured_noise', g), mm.d)
                for method in structured_methods:
                    if method == 'structured_lw_omp':
                        result = SparseBeamSelection.lw_omp_select(
                            ms, k_single, oob.prior, weighting, codebook='structured')
                    else:
                        result = SparseBeamSelection.lw_somp_select(
                            ms, oob.prior, weighting, codebook='structured')
                    records.append(record(method, n_meas, result.pair))
        return records

    @staticmethod
    def _trial_batch(config: ExperimentConfig, trial: int, sweep_values) -> List[TrialRecord]:
        records = []
        for value in sweep_values:
            records.extend(ExperimentHarness.run_trial(config, trial, value))
        return records

    @staticmethod
    def collect_records(config: ExperimentConfig, n_jobs: Optional[int] = None,
                        progress: bool = True) -> List[TrialRecord]:
        """Run every trial (in parallel when n_jobs != 1); records come back in trial order"""
        config.validate()
        n_jobs = config.n_jobs if n_jobs is None else n_jobs
        sweep_values = list(config.sweep.values) if config.sweep is not None else [None]
        trials = range(config.trials)

        if n_jobs == 1:
            batches = [ExperimentHarness._trial_batch(config, t, sweep_values)
                       for t in tqdm(trials, desc=f"{config.name} trials", disable=not progress)]
        else:
            batches = Parallel(n_jobs=n_jobs)(
                delayed(ExperimentHarness._trial_batch)(config, t, sweep_values) for t in trials)
        return [rec for batch in batches for rec in batch]

    @staticmethod
    def aggregate(records: Iterable[TrialRecord], config: ExperimentConfig) -> MetricTable:
        """Metric rows in fixed order: sweep value, method, training size, coherence"""
        groups: Dict[tuple, List[TrialRecord]] = {}
        for rec in records:
            groups.setdefault((rec.sweep_value, rec.method, rec.n_meas), []).append(rec)

        sweep_values = list(config.sweep.values) if config.sweep is not None else [None]
        n_meas_order = sorted({n_rx * n_tx for n_rx, n_tx in config.beam_grid}
                              | {config.mmwave.m_rx * config.mmwave.m_tx})
        rows = []
        for value in sweep_values:
            for method in config.methods:
                for n_meas in n_meas_order:
                    group = groups.get((value, method, n_meas))
                    if not group:
                        continue
                    for t_c in config.coherence:
                        # the oracle is charged no training
                        rate_t_c = math.inf if method == 'oracle' else t_c
                        row = {
                            'method': method,
                            'n_meas': n_meas,
                            'T_c': t_c,
                            'R_eff': ExperimentHarness.effective_rate(group, rate_t_c, n_meas),
                            'SP_B1': ExperimentHarness.success_percentage(group, 1),
                            'SP_B5': ExperimentHarness.success_percentage(group, 5),
                            'E': len(group),
                        }
                        if value is not None:
                            row[SWEEP_COLUMN] = value
                        rows.append(row)

        if not rows:
            return MetricTable.empty(with_sweep=config.sweep is not None)
        columns = METRIC_COLUMNS + ([SWEEP_COLUMN] if config.sweep is not None else [])
        return MetricTable(pd.DataFrame(rows, columns=columns))

    @staticmethod
    def run_experiment(config: ExperimentConfig, n_jobs: Optional[int] = None,
                       progress: bool = True, return_records: bool = False):
        """Deterministic given config.seed; returns the MetricTable (and records on request)"""
        logger.info("running %s: %d trials, grid %s, methods %s, seed %d",
                    config.name, config.trials, list(config.beam_grid), list(config.methods), config.seed)
        records = ExperimentHarness.collect_records(config, n_jobs, progress)
        table = ExperimentHarness.aggregate(records, config)
        logger.info("%s finished: %d metric rows from %d records", config.name, len(table), len(records))
        if return_records:
            return table, records
        return table

    @staticmethod
    def locate_crossover(table: MetricTable, method_a: str, method_b: str,
                         n_meas: Optional[int] = None, t_c: Optional[float] = None) -> Optional[float]:
        """
        First sweep value where R_eff(method_a) drops below R_eff(method_b), linearly
        interpolated between neighbouring sweep points. None if it never does.
        """
        if not table.has_sweep:
            raise InputError("crossover needs a table with a sweep_value column")
        frame = table.frame
        if t_c is not None:
            frame = frame[frame['T_c'] == t_c]

        def curve(method):
            sub = frame[frame['method'] == method]
            if n_meas is not None:
                sub = sub[sub['n_meas'] == n_meas]
            return sub.groupby(SWEEP_COLUMN, sort=True)['R_eff'].mean()

        a, b = curve(method_a), curve(method_b)
        diff = (a - b).dropna()
        x, y = diff.index.to_numpy(dtype=float), diff.to_numpy(dtype=float)
        for idx in range(1, len(x)):
            if y[idx - 1] >= 0 > y[idx]:
                return float(x[idx - 1] + (x[idx] - x[idx - 1]) * y[idx - 1] / (y[idx - 1] - y[idx]))
        return None

    @staticmethod
    def emit_results(table: MetricTable, config: ExperimentConfig, output_dir: Optional[str] = None,
                     stem: Optional[str] = None, records: Optional[Sequence[TrialRecord]] = None,
                     ledger=None, metadata: Optional[dict] = None) -> dict:
        """
        Write <stem>.csv (one row per metric cell) and <stem>.json (config, config
        hash, seed, metadata, optional per-trial records); record the run in the
        ledger when one is given.
        """
        output_dir = output_dir or config.output_dir
        stem = stem or config.name
        os.makedirs(output_dir, exist_ok=True)
        csv_path = os.path.join(output_dir, f"{stem}.csv")
        json_path = os.path.join(output_dir, f"{stem}.json")

        table.to_csv(csv_path)
        meta = {
            'trials': config.trials,
            'mmwave_snr_anchor': list(config.snr_anchor),
            'sub6_snr_anchor': list(config.sub6_snr_anchor),
            'probe_mode': config.probe_mode,
            **(metadata or {}),
        }
        payload = {
            'config': config.to_dict(),
            'config_hash': config.config_hash(),
            'seed': config.seed,
            'metadata': meta,
        }
        if records is not None and config.save_records:
            payload['records'] = [rec.to_dict() for rec in records]
        with open(json_path, 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True)

        run_id = None
        if ledger is not None:
            run_id = ledger.record_run(config, table, csv_path=csv_path, metadata=meta)
        logger.info("wrote %s and %s", csv_path, json_path)
        return {'csv': csv_path, 'json': json_path, 'run_id': run_id}
