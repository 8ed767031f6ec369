"""
Experiment configuration: band parameter sets, the ExperimentConfig record,
JSON loading/hashing and the named experiment-family presets.
"""
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, asdict, replace
from typing import Optional, Tuple

from exceptions import ConfigurationError
from multiband_channel import BandSpec

logger = logging.getLogger(__name__)

KNOWN_METHODS = ('oracle', 'exhaustive', 'omp', 'lw_omp', 'structured_lw_omp',
                 'somp', 'lw_somp', 'structured_lw_somp')
SWEEP_PARAMETERS = ('sub6_aoa', 'sub6_angle_spread', 'j_w_scale')
TRUTH_SCOPES = ('wideband', 'probed')
MMWAVE_ANGLE_SPREAD = 0.035
# linear K of the specular component riding on the earliest cluster
RICEAN_K_FACTOR = 2.0


def default_sub6_spec(**overrides) -> BandSpec:
    """3.5 GHz, 1 MHz, 4 x 4 ULA, flat ricean channel"""
    tau_max = 57e-9
    spec = BandSpec(
        fc=3.5e9, bandwidth=1e6, n_clusters=4, rays_per_cluster=10,
        tau_max=tau_max, sigma_tau_ray=tau_max / (20 * math.sqrt(12)),
        sigma_aoa_ray=0.042, sigma_aod_ray=0.042, m_tx=4, m_rx=4,
        fading='ricean', k_factor=RICEAN_K_FACTOR,
    )
    return replace(spec, **overrides)


def default_mmwave_spec(**overrides) -> BandSpec:
    """28 GHz, 320 MHz, 32 x 32 ULA, 63 taps over 256 subcarriers, ricean"""
    tau_max = 48e-9
    spec = BandSpec(
        fc=28e9, bandwidth=320e6, n_clusters=3, rays_per_cluster=10,
        tau_max=tau_max, sigma_tau_ray=tau_max / (20 * math.sqrt(12)),
        sigma_aoa_ray=MMWAVE_ANGLE_SPREAD, sigma_aod_ray=MMWAVE_ANGLE_SPREAD, m_tx=32, m_rx=32,
        n_taps=63, n_subcarriers=256, cp_length=64, roll_off=1.0,
        fading='ricean', k_factor=RICEAN_K_FACTOR,
    )
    return replace(spec, **overrides)


@dataclass(frozen=True)
class SweepSpec:
    """One swept scalar: the sub-6 mean AoA (rad), the sub-6 angle spread (rad) or j_w_scale"""
    parameter: str
    values: Tuple[float, ...]

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigurationError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if not self.values:
            raise ConfigurationError("sweep needs at least one value")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'rate_vs_measurements'
    sub6: BandSpec = field(default_factory=default_sub6_spec)
    mmwave: BandSpec = field(default_factory=default_mmwave_spec)
    distance: float = 40.0
    # (N_RX, N_TX) training sizes
    beam_grid: Tuple[Tuple[int, int], ...] = ((2, 4), (4, 4), (4, 8), (8, 8), (8, 16), (16, 16))
    coherence: Tuple[float, ...] = (6144.0,)
    trials: int = 200
    methods: Tuple[str, ...] = ('exhaustive', 'omp', 'lw_omp', 'structured_lw_omp')
    probe_mode: str = 'single_k'
    # B_N from noiseless power over all subcarriers, or over the probed ones only
    truth_scope: str = 'wideband'
    seed: int = 0
    j_p: float = 0.5
    j_w: Optional[float] = None
    j_w_scale: float = 1.0
    epsilon_p: float = 1e-3
    p_t_dbm: float = 37.0
    snr_anchor: Tuple[float, float] = (80.0, -10.0)
    sub6_snr_anchor: Tuple[float, float] = (80.0, 10.0)
    phase_bits: int = 5
    super_size: Optional[int] = None
    sweep: Optional[SweepSpec] = None
    sub6_angles: Optional[Tuple[float, float]] = None
    mmwave_angles: Optional[Tuple[float, float]] = None
    output_dir: str = 'results'
    save_records: bool = False
    n_jobs: int = 1

    def validate(self):
        """Raise ConfigurationError on an inconsistent config"""
        self.sub6.validate()
        self.mmwave.validate()
        if self.mmwave.n_taps is None or self.mmwave.n_subcarriers is None:
            raise ConfigurationError("mmWave band needs n_taps and n_subcarriers")
        if self.trials < 1:
            raise ConfigurationError(f"need at least one trial, got {self.trials}")
        if not self.methods:
            raise ConfigurationError("methods must not be empty")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; known: {KNOWN_METHODS}")
        if self.probe_mode not in ('single_k', 'all_k'):
            raise ConfigurationError(f"probe_mode must be single_k or all_k, got '{self.probe_mode}'")
        if self.truth_scope not in TRUTH_SCOPES:
            raise ConfigurationError(f"truth_scope must be one of {TRUTH_SCOPES}, got '{self.truth_scope}'")
        if any(not t > 0 for t in self.coherence) or not self.coherence:
            raise ConfigurationError("coherence times must be positive (inf allowed)")
        if not self.beam_grid:
            raise ConfigurationError("beam_grid must not be empty")
        for n_rx, n_tx in self.beam_grid:
            if n_rx < 1 or n_tx < 1:
                raise ConfigurationError(f"training sizes must be >= 1, got {(n_rx, n_tx)}")
        if self.distance <= 0:
            raise ConfigurationError("distance must be positive")
        if not 0 < self.j_p <= 1:
            raise ConfigurationError(f"J_p must lie in (0, 1], got {self.j_p}")
        if self.j_w is not None and self.j_w <= 0:
            raise ConfigurationError("J_w must be positive")
        if self.phase_bits < 1:
            raise ConfigurationError("phase_bits must be >= 1")
        if self.n_jobs == 0:
            raise ConfigurationError("n_jobs must be non-zero")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data['coherence'] = [_encode_float(t) for t in self.coherence]
        return data

    @classmethod
    def from_dict(cls, data: dict):
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")

        for key, factory in (('sub6', default_sub6_spec), ('mmwave', default_mmwave_spec)):
            if key in data:
                base = factory().to_dict()
                base.update(data[key])
                data[key] = BandSpec.from_dict(base)
        if 'beam_grid' in data:
            data['beam_grid'] = tuple(tuple(int(n) for n in pair) for pair in data['beam_grid'])
        if 'coherence' in data:
            data['coherence'] = tuple(_decode_float(t) for t in data['coherence'])
        for key in ('methods',):
            if key in data:
                data[key] = tuple(data[key])
        for key in ('snr_anchor', 'sub6_snr_anchor', 'sub6_angles', 'mmwave_angles'):
            if data.get(key) is not None:
                data[key] = tuple(float(v) for v in data[key])
        if data.get('sweep') is not None:
            sweep = data['sweep']
            data['sweep'] = SweepSpec(parameter=sweep['parameter'],
                                      values=tuple(float(v) for v in sweep['values']))
        try:
            return cls(**data).validate()
        except TypeError as e:
            raise ConfigurationError(f"invalid config: {e}")

    @classmethod
    def load(cls, path):
        """Read a JSON config file"""
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read config '{path}': {e}")
        logger.info("loaded config %s", path)
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        """Sorted, compact JSON of everything that affects results (not n_jobs or output_dir)"""
        data = {k: v for k, v in self.to_dict().items() if k not in ('n_jobs', 'output_dir')}
        return json.dumps(data, sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form"""
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()


def _encode_float(value: float):
    return 'inf' if math.isinf(value) else value


def _decode_float(value) -> float:
    return float(value)


def env_n_jobs(default: int = 1) -> int:
    """Trial parallelism from BEAMSEL_N_JOBS"""
    value = os.getenv('BEAMSEL_N_JOBS')
    if not value:
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"BEAMSEL_N_JOBS must be an integer, got '{value}'")


def _single_cluster_defaults() -> dict:
    return {
        'sub6': default_sub6_spec(n_clusters=1, fading='rayleigh', k_factor=0.0),
        'mmwave': default_mmwave_spec(n_clusters=1, fading='rayleigh', k_factor=0.0),
        'distance': 40.0,
        'beam_grid': ((8, 8),),
        'coherence': (math.inf,),
        'methods': ('omp', 'structured_lw_omp'),
        'mmwave_angles': (0.0, 0.0),
        'trials': 500,
    }


PRESETS = {
    'rate_vs_measurements': lambda: {},
    'coherence': lambda: {
        'coherence': (2.0 * 1024, 4.0 * 1024, 6.0 * 1024),
    },
    'success': lambda: {
        'beam_grid': ((4, 8), (8, 8), (8, 16)),
    },
    'mmv': lambda: {
        'distance': 80.0,
        'probe_mode': 'all_k',
        'methods': ('exhaustive', 'somp', 'lw_somp', 'structured_lw_somp'),
        'trials': 100,
    },
    'aoa_mismatch': lambda: {
        **_single_cluster_defaults(),
        'sweep': SweepSpec('sub6_aoa', tuple(round(0.1 * i, 10) for i in range(13))),
    },
    'as_mismatch': lambda: {
        **_single_cluster_defaults(),
        'sub6_angles': (0.0, 0.0),
        'sweep': SweepSpec('sub6_angle_spread',
                           tuple(m * MMWAVE_ANGLE_SPREAD for m in range(1, 17))),
    },
    'jw_calibration': lambda: {
        'beam_grid': ((8, 8),),
        'methods': ('omp', 'lw_omp', 'structured_lw_omp'),
        'sweep': SweepSpec('j_w_scale', (0.25, 0.5, 1.0, 2.0, 4.0)),
    },
}


def preset(family: str, **overrides) -> ExperimentConfig:
    """Named experiment family with optional field overrides"""
    if family not in PRESETS:
        raise ConfigurationError(f"unknown family '{family}'; known: {sorted(PRESETS)}")
    fields = {'name': family, **PRESETS[family]()}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**fields).validate()
    except TypeError as e:
        raise ConfigurationError(f"invalid override for '{family}': {e}")
