"""
Coupled sub-6 GHz / mmWave cluster channel generator and channel rendering.

Clusters for the two bands are drawn jointly (independent draw, replacement of
early clusters, frequency dependent perturbation); rays inside clusters are drawn
independently per band. Realizations render to tap-domain, subcarrier-domain and
narrowband MIMO matrices.
"""
import logging
from dataclasses import dataclass, asdict, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.constants import speed_of_light

from array_codebook import ArrayCodebook, Ula
from exceptions import ConfigurationError, InputError
from pulse_shaping import PulseShape

logger = logging.getLogger(__name__)

# fixed substream ids; never reorder, seeds of stored runs depend on them
RNG_PURPOSES = {
    'clusters': 0,
    'rays_sub6': 1,
    'rays_mmwave': 2,
    'sub6_noise': 3,
    'probe': 4,
    'codebook': 5,
    'structured_codebook': 6,
    'measurement_noise': 7,
    'structured_noise': 8,
    'exhaustive_noise': 9,
}

DELAY_DISTRIBUTIONS = ('uniform', 'exponential')
ANGLE_DISTRIBUTIONS = ('uniform', 'gaussian', 'laplacian')
FADING_MODELS = ('rayleigh', 'ricean')
ANGLE_DOMAINS = ('half', 'full')

# truncated gaussian/laplacian offsets stop at this many units of the underlying scale
OFFSET_TRUNCATION = 3.0


def spawn_rng(seed: int, trial: int, purpose: str, *extra: int) -> np.random.Generator:
    """Deterministic per-trial, per-purpose generator derived from one master seed"""
    key = (trial, RNG_PURPOSES[purpose]) + tuple(int(x) for x in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class BandSpec:
    """Per-band channel and array parameters"""
    fc: float
    bandwidth: float
    n_clusters: int
    rays_per_cluster: int
    tau_max: float
    sigma_tau_ray: float
    sigma_aoa_ray: float
    sigma_aod_ray: float
    m_tx: int
    m_rx: int
    d: float = 0.5
    pathloss_exponent: float = 3.0
    n_taps: Optional[int] = None
    n_subcarriers: Optional[int] = None
    cp_length: Optional[int] = None
    roll_off: float = 1.0
    angle_domain: str = 'half'
    ray_delay_distribution: str = 'uniform'
    ray_angle_distribution: str = 'uniform'
    fading: str = 'rayleigh'
    k_factor: float = 0.0

    def validate(self):
        """Raise ConfigurationError on an unusable spec"""
        if self.fc <= 0:
            raise ConfigurationError(f"carrier frequency must be positive, got {self.fc}")
        if self.bandwidth <= 0:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.n_clusters < 1:
            raise ConfigurationError(f"need at least one cluster, got {self.n_clusters}")
        if self.rays_per_cluster < 1:
            raise ConfigurationError(f"need at least one ray per cluster, got {self.rays_per_cluster}")
        if self.tau_max <= 0:
            raise ConfigurationError(f"tau_max must be positive, got {self.tau_max}")
        if min(self.sigma_tau_ray, self.sigma_aoa_ray, self.sigma_aod_ray) < 0:
            raise ConfigurationError("intra-cluster spreads must be non-negative")
        if self.m_tx < 1 or self.m_rx < 1 or self.d <= 0:
            raise ConfigurationError("antenna counts must be >= 1 and spacing positive")
        if self.angle_domain not in ANGLE_DOMAINS:
            raise ConfigurationError(f"angle_domain must be one of {ANGLE_DOMAINS}")
        if self.ray_delay_distribution not in DELAY_DISTRIBUTIONS:
            raise ConfigurationError(f"ray_delay_distribution must be one of {DELAY_DISTRIBUTIONS}")
        if self.ray_angle_distribution not in ANGLE_DISTRIBUTIONS:
            raise ConfigurationError(f"ray_angle_distribution must be one of {ANGLE_DISTRIBUTIONS}")
        if self.fading not in FADING_MODELS:
            raise ConfigurationError(f"fading must be one of {FADING_MODELS}")
        if self.k_factor < 0:
            raise ConfigurationError("k_factor must be non-negative")
        if self.n_taps is not None:
            if self.n_taps < 1:
                raise ConfigurationError("n_taps must be >= 1")
            if self.cp_length is not None and self.n_taps > self.cp_length + 1:
                raise ConfigurationError(
                    f"n_taps={self.n_taps} exceeds cyclic prefix length + 1 ({self.cp_length + 1})")
            if self.n_subcarriers is not None and self.n_subcarriers < self.n_taps:
                raise ConfigurationError("n_subcarriers must be >= n_taps")
        return self

    @property
    def angle_bounds(self) -> Tuple[float, float]:
        if self.angle_domain == 'half':
            return -np.pi / 2, np.pi / 2
        return 0.0, 2 * np.pi

    @property
    def ts(self) -> float:
        """Sampling interval 1/bandwidth (s)"""
        return 1.0 / self.bandwidth

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown band spec fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigurationError(f"incomplete band spec: {e}")


@dataclass(frozen=True)
class ClusterParamSet:
    """Mean delay (s) and mean AoA/AoD (rad) of one cluster"""
    tau: float
    theta: float
    phi: float


@dataclass(frozen=True)
class Ray:
    """Complex gain plus delay/angle offsets relative to the cluster mean"""
    alpha: complex
    tau_r: float
    vartheta_r: float
    varphi_r: float


@dataclass(frozen=True)
class ChannelRealization:
    """Clusters and rays of one band with its linear path loss"""
    band: BandSpec
    clusters: Tuple[ClusterParamSet, ...]
    rays: Tuple[Tuple[Ray, ...], ...]
    pathloss: float

    def __post_init__(self):
        if len(self.clusters) != len(self.rays):
            raise InputError("one ray list is required per cluster")
        if self.pathloss <= 0:
            raise InputError(f"pathloss must be positive, got {self.pathloss}")

    def paths(self):
        """Flattened per-ray arrays: gains, absolute delays, AoAs, AoDs"""
        alpha, delay, aoa, aod = [], [], [], []
        for cluster, rays in zip(self.clusters, self.rays):
            for ray in rays:
                alpha.append(ray.alpha)
                delay.append(cluster.tau + ray.tau_r)
                aoa.append(cluster.theta + ray.vartheta_r)
                aod.append(cluster.phi + ray.varphi_r)
        return (np.asarray(alpha, dtype=complex), np.asarray(delay, dtype=float),
                np.asarray(aoa, dtype=float), np.asarray(aod, dtype=float))

    def to_dict(self) -> dict:
        return {
            'band': self.band.to_dict(),
            'pathloss': self.pathloss,
            'clusters': [asdict(c) for c in self.clusters],
            'rays': [[{'alpha': [ray.alpha.real, ray.alpha.imag], 'tau_r': ray.tau_r,
                       'vartheta_r': ray.vartheta_r, 'varphi_r': ray.varphi_r}
                      for ray in rays] for rays in self.rays],
        }


@dataclass(frozen=True)
class MultiBandRealization:
    """Frequency-consistent sub-6 GHz and mmWave realizations"""
    sub6: ChannelRealization
    mmwave: ChannelRealization
    shared_cluster_indices: Tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            'sub6': self.sub6.to_dict(),
            'mmwave': self.mmwave.to_dict(),
            'shared_cluster_indices': list(self.shared_cluster_indices),
        }


class MultiBandChannel:
    """Multi-band channel generation and rendering"""

    @staticmethod
    def frequency_separation(f_1: float, f_2: float) -> float:
        """Percent frequency separation |f1-f2|/max(f1,f2)"""
        return abs(f_1 - f_2) / max(f_1, f_2)

    @staticmethod
    def q_sign(x, w, y, z, rng: np.random.Generator) -> int:
        """
        +1 if x-w < y, else -1 if x+w > z, else +-1 with equal probability.
        The first branch wins when both hold.
        """
        if x - w < y:
            return 1
        if x + w > z:
            return -1
        return 1 if rng.random() < 0.5 else -1

    @staticmethod
    def replacement_index_set(taus, tau_max: float, separation: float,
                              rng: Optional[np.random.Generator] = None, xi=None):
        """
        Indices c with xi_c > separation * tau_c / tau_max. xi_c ~ U[0,1] is drawn
        per cluster unless given; generate_clusters passes one draw per cluster
        index to both bands.
        """
        taus = np.asarray(taus, dtype=float)
        if xi is None:
            if rng is None:
                raise InputError("replacement needs either a random generator or xi")
            xi = rng.random(taus.size)
        xi = np.asarray(xi, dtype=float)
        if xi.size < taus.size:
            raise InputError(f"need {taus.size} replacement draws, got {xi.size}")
        return np.flatnonzero(xi[:taus.size] > separation * taus / tau_max)

    @staticmethod
    def draw_clusters(spec: BandSpec, rng: np.random.Generator):
        """Independent cluster draw for one band, sorted by ascending mean delay"""
        low, high = spec.angle_bounds
        taus = rng.uniform(0.0, spec.tau_max, spec.n_clusters)
        thetas = rng.uniform(low, high, spec.n_clusters)
        phis = rng.uniform(low, high, spec.n_clusters)
        order = np.argsort(taus, kind='stable')
        return [ClusterParamSet(float(taus[i]), float(thetas[i]), float(phis[i])) for i in order]

    @staticmethod
    def _limit_angle(angle, spec: BandSpec):
        low, high = spec.angle_bounds
        if spec.angle_domain == 'full':
            return float(np.mod(angle, 2 * np.pi)), False
        if angle < low:
            return low, True
        if angle >= high:
            return float(np.nextafter(high, low)), True
        return angle, False

    @staticmethod
    def perturb_clusters(clusters, spec: BandSpec, separation: float, rng: np.random.Generator):
        """
        Frequency dependent perturbation of one band's clusters: one Delta ~ U[0,1]
        per cluster, modified into delay and angle offsets proportional to the mean
        delay and to the frequency separation. The sign of every offset is
        q_sign(x, Delta, lower, upper); delays are in seconds, so x - Delta < 0
        and delays only move later.
        """
        low, high = spec.angle_bounds
        perturbed = []
        n_clamped = 0
        for cluster in clusters:
            delta = rng.random()
            relative_delay = cluster.tau / spec.tau_max

            tau_step = separation * cluster.tau * delta
            angle_step = separation * relative_delay * delta

            tau = cluster.tau + MultiBandChannel.q_sign(cluster.tau, delta, 0.0, spec.tau_max, rng) * tau_step
            theta = cluster.theta + MultiBandChannel.q_sign(cluster.theta, delta, low, high, rng) * angle_step
            phi = cluster.phi + MultiBandChannel.q_sign(cluster.phi, delta, low, high, rng) * angle_step

            clamped_tau = min(max(tau, 0.0), spec.tau_max)
            theta, theta_clamped = MultiBandChannel._limit_angle(theta, spec)
            phi, phi_clamped = MultiBandChannel._limit_angle(phi, spec)
            if clamped_tau != tau or theta_clamped or phi_clamped:
                n_clamped += 1
            perturbed.append(ClusterParamSet(float(clamped_tau), float(theta), float(phi)))

        if n_clamped:
            logger.debug("clamped %d perturbed clusters back into range", n_clamped)
        return perturbed

    @staticmethod
    def generate_clusters(spec_a: BandSpec, spec_b: BandSpec, rng: np.random.Generator):
        """
        First stage: coupled cluster generation for two bands.
        Returns (clusters_a, clusters_b, shared_indices); shared indices refer to
        positions in the delay-sorted cluster lists.
        """
        spec_a.validate()
        spec_b.validate()

        # Part 1: independent draws
        clusters = [MultiBandChannel.draw_clusters(spec_a, rng),
                    MultiBandChannel.draw_clusters(spec_b, rng)]
        specs = (spec_a, spec_b)
        separation = MultiBandChannel.frequency_separation(spec_a.fc, spec_b.fc)

        # Part 2: replacement of co-occurring clusters in the band with larger tau_max,
        # one xi per cluster index shared by both bands
        xi = rng.random(max(spec_a.n_clusters, spec_b.n_clusters))
        index_sets = [
            set(MultiBandChannel.replacement_index_set(
                [c.tau for c in clusters[i]], specs[i].tau_max, separation, xi=xi).tolist())
            for i in range(2)
        ]
        n_common = min(spec_a.n_clusters, spec_b.n_clusters)
        shared = sorted(c for c in index_sets[0] & index_sets[1] if c < n_common)

        b = int(np.argmax([spec_a.tau_max, spec_b.tau_max]))
        other = 1 - b
        for c in shared:
            clusters[b][c] = clusters[other][c]

        # Part 3: perturbation of band b
        clusters[b] = MultiBandChannel.perturb_clusters(clusters[b], specs[b], separation, rng)

        logger.debug("generated clusters: %d/%d shared, band %d perturbed (separation %.3f)",
                     len(shared), n_common, b, separation)
        return clusters[0], clusters[1], shared

    @staticmethod
    def draw_offsets(n: int, sigma: float, distribution: str, rng: np.random.Generator):
        """
        Intra-cluster offsets with RMS spread sigma. Gaussian and laplacian offsets
        are truncated at OFFSET_TRUNCATION units of their scale and rescaled so the
        RMS stays sigma; exponential offsets are one-sided delays.
        """
        if sigma == 0:
            return np.zeros(n)
        if distribution == 'uniform':
            half_width = np.sqrt(3.0) * sigma
            return rng.uniform(-half_width, half_width, n)
        if distribution == 'gaussian':
            shape = stats.truncnorm(-OFFSET_TRUNCATION, OFFSET_TRUNCATION)
            return shape.rvs(size=n, random_state=rng) * (sigma / shape.std())
        if distribution == 'laplacian':
            magnitude = stats.truncexpon(OFFSET_TRUNCATION)
            scale = sigma / np.sqrt(magnitude.moment(2))
            signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return signs * magnitude.rvs(size=n, random_state=rng) * scale
        if distribution == 'exponential':
            return rng.exponential(sigma / np.sqrt(2.0), n)
        raise ConfigurationError(f"unknown offset distribution '{distribution}'")

    @staticmethod
    def draw_gains(n: int, rays_per_cluster: int, rng: np.random.Generator):
        """Diffuse complex ray gains, CN(0, 1/R_c)"""
        return (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2 * rays_per_cluster)

    @staticmethod
    def specular_gain(n_clusters: int, k_factor: float, rng: np.random.Generator) -> complex:
        """Random-phase specular gain carrying K/(K+1) of the C units of expected channel power"""
        return complex(np.sqrt(n_clusters * k_factor / (k_factor + 1)) * np.exp(2j * np.pi * rng.random()))

    @staticmethod
    def ray_powers(spec: BandSpec, n_clusters: Optional[int] = None) -> np.ndarray:
        """
        Expected |alpha|^2 per ray as a C x R_c array. Rayleigh gives 1/R_c
        everywhere; ricean scales the diffuse part by 1/(K+1) and puts the
        specular power on the first ray of the earliest cluster.
        """
        n_clusters = spec.n_clusters if n_clusters is None else n_clusters
        power = np.full((n_clusters, spec.rays_per_cluster), 1.0 / spec.rays_per_cluster)
        if spec.fading == 'ricean':
            power /= spec.k_factor + 1
            power[0, 0] += n_clusters * spec.k_factor / (spec.k_factor + 1)
        return power

    @staticmethod
    def generate_rays(clusters: Sequence[ClusterParamSet], spec: BandSpec, rng: np.random.Generator):
        """
        Second stage: rays for every cluster, drawn independently per band.
        Under ricean fading the first ray of the first listed cluster, the
        earliest of the initial delay-sorted draw, carries the specular component.
        """
        n = spec.rays_per_cluster * len(clusters)
        tau_r = MultiBandChannel.draw_offsets(n, spec.sigma_tau_ray, spec.ray_delay_distribution, rng)
        vartheta = MultiBandChannel.draw_offsets(n, spec.sigma_aoa_ray, spec.ray_angle_distribution, rng)
        varphi = MultiBandChannel.draw_offsets(n, spec.sigma_aod_ray, spec.ray_angle_distribution, rng)
        alpha = MultiBandChannel.draw_gains(n, spec.rays_per_cluster, rng)
        if spec.fading == 'ricean' and n:
            alpha = alpha / np.sqrt(spec.k_factor + 1)
            alpha[0] += MultiBandChannel.specular_gain(len(clusters), spec.k_factor, rng)

        rays = []
        for c in range(len(clusters)):
            block = slice(c * spec.rays_per_cluster, (c + 1) * spec.rays_per_cluster)
            rays.append(tuple(
                Ray(complex(a), float(t), float(th), float(ph))
                for a, t, th, ph in zip(alpha[block], tau_r[block], vartheta[block], varphi[block])
            ))
        return rays

    @staticmethod
    def pathloss(distance: float, fc: float, exponent: float = 3.0) -> float:
        """
        Linear path loss: free space at 1 m plus an exponent law beyond it,
        PL(dB) = 20 log10(4 pi fc / c) + 10 n log10(distance)
        """
        if distance <= 0:
            raise InputError(f"distance must be positive, got {distance}")
        fspl_1m = 20 * np.log10(4 * np.pi * fc / speed_of_light)
        return 10 ** ((fspl_1m + 10 * exponent * np.log10(distance)) / 10)

    @staticmethod
    @lru_cache(maxsize=64)
    def expected_entry_gain(spec: BandSpec, n_draws: int = 2000, seed: int = 0) -> float:
        """
        Expected per-antenna-pair channel power before path loss, E|H_mn|^2 * PL,
        averaged over subcarriers (the sum over taps) for wideband bands and at
        the single narrowband sample otherwise.

        Ray gains are zero mean and independent, so cross terms vanish and the
        expectation is sum over rays of E|alpha|^2 times the pulse energy landing
        on the taps. Delays are drawn with a private generator so the value is a
        deterministic function of the band.
        """
        spec.validate()
        rng = np.random.default_rng(seed)
        n_clusters, n_rays = spec.n_clusters, spec.rays_per_cluster
        taus = np.sort(rng.uniform(0.0, spec.tau_max, (n_draws, n_clusters)), axis=1)
        offsets = MultiBandChannel.draw_offsets(
            n_draws * n_clusters * n_rays, spec.sigma_tau_ray, spec.ray_delay_distribution, rng)
        delays = taus[:, :, None] + offsets.reshape(n_draws, n_clusters, n_rays)

        if spec.n_taps is None:
            pulse = PulseShape.for_bandwidth(spec.bandwidth, spec.roll_off)
            energy = pulse(-delays) ** 2
        else:
            pulse = PulseShape(roll_off=spec.roll_off, period=spec.ts)
            energy = np.zeros_like(delays)
            for ell in range(spec.n_taps):
                energy += pulse(ell * spec.ts - delays) ** 2

        power = MultiBandChannel.ray_powers(spec)
        gain = float(np.mean(np.sum(power[None, :, :] * energy, axis=(1, 2))))
        logger.debug("expected entry gain at %.3g Hz: %.4f (%d draws)", spec.fc, gain, n_draws)
        return gain

    @staticmethod
    def _array_responses(ch: ChannelRealization, aoa, aod):
        a_rx = ArrayCodebook.array_response(Ula(ch.band.m_rx, ch.band.d), aoa)
        a_tx = ArrayCodebook.array_response(Ula(ch.band.m_tx, ch.band.d), aod)
        return a_rx.reshape(ch.band.m_rx, -1), a_tx.reshape(ch.band.m_tx, -1)

    @staticmethod
    def render_taps(ch: ChannelRealization, pulse: Optional[PulseShape] = None,
                    ts: Optional[float] = None):
        """
        Tap-domain channel H[l], l = 0..L-1, as an L x M_RX x M_TX array:
        H[l] = sqrt(M_RX M_TX / rho) sum alpha p(l Ts - tau_c - tau_r) a_RX a_TX^*
        """
        band = ch.band
        if band.n_taps is None:
            raise InputError("render_taps needs a band spec with n_taps")
        ts = band.ts if ts is None else ts
        pulse = pulse or PulseShape(roll_off=band.roll_off, period=ts)

        alpha, delay, aoa, aod = ch.paths()
        max_ray_delay = max((ray.tau_r for rays in ch.rays for ray in rays), default=0.0)
        if band.n_taps * ts < band.tau_max + max(max_ray_delay, 0.0):
            logger.warning("tap span %.3g s shorter than the delay spread; channel energy is truncated",
                           band.n_taps * ts)

        a_rx, a_tx = MultiBandChannel._array_responses(ch, aoa, aod)
        ell = np.arange(band.n_taps)
        weights = alpha[None, :] * pulse(ell[:, None] * ts - delay[None, :])
        scale = np.sqrt(band.m_rx * band.m_tx / ch.pathloss)
        return scale * ((weights[:, None, :] * a_rx[None, :, :]) @ a_tx.conj().T)

    @staticmethod
    def render_freq(taps, n_subcarriers: int):
        """Subcarrier channels H[k] = sum_l H[l] e^{-j 2 pi k l / K}, shape K x M_RX x M_TX"""
        taps = np.asarray(taps)
        if n_subcarriers < taps.shape[0]:
            raise InputError(f"need K >= L, got K={n_subcarriers}, L={taps.shape[0]}")
        return np.fft.fft(taps, n=n_subcarriers, axis=0)

    @staticmethod
    def render_narrowband_sub6(ch: ChannelRealization, pulse: Optional[PulseShape] = None):
        """Narrowband M_RX x M_TX matrix with the pulse evaluated at -tau_c - tau_r"""
        band = ch.band
        pulse = pulse or PulseShape.for_bandwidth(band.bandwidth, band.roll_off)
        alpha, delay, aoa, aod = ch.paths()
        a_rx, a_tx = MultiBandChannel._array_responses(ch, aoa, aod)
        weights = alpha * pulse(-delay)
        scale = np.sqrt(band.m_rx * band.m_tx / ch.pathloss)
        return scale * ((a_rx * weights[None, :]) @ a_tx.conj().T)

    @staticmethod
    def _override_angles(clusters, angles):
        if angles is None:
            return clusters
        theta, phi = angles
        return [ClusterParamSet(c.tau, float(theta), float(phi)) for c in clusters]

    @staticmethod
    def generate_realization(spec_sub6: BandSpec, spec_mmwave: BandSpec, distance: float,
                             seed: int, trial: int, sub6_angles=None, mmwave_angles=None):
        """
        Draw one MultiBandRealization from the trial's substreams. Optional
        (theta, phi) pairs pin the mean angles of every cluster of a band.
        """
        clusters_sub6, clusters_mm, shared = MultiBandChannel.generate_clusters(
            spec_sub6, spec_mmwave, spawn_rng(seed, trial, 'clusters'))
        clusters_sub6 = MultiBandChannel._override_angles(clusters_sub6, sub6_angles)
        clusters_mm = MultiBandChannel._override_angles(clusters_mm, mmwave_angles)

        rays_sub6 = MultiBandChannel.generate_rays(clusters_sub6, spec_sub6, spawn_rng(seed, trial, 'rays_sub6'))
        rays_mm = MultiBandChannel.generate_rays(clusters_mm, spec_mmwave, spawn_rng(seed, trial, 'rays_mmwave'))

        sub6 = ChannelRealization(
            band=spec_sub6, clusters=tuple(clusters_sub6), rays=tuple(rays_sub6),
            pathloss=MultiBandChannel.pathloss(distance, spec_sub6.fc, spec_sub6.pathloss_exponent))
        mmwave = ChannelRealization(
            band=spec_mmwave, clusters=tuple(clusters_mm), rays=tuple(rays_mm),
            pathloss=MultiBandChannel.pathloss(distance, spec_mmwave.fc, spec_mmwave.pathloss_exponent))
        return MultiBandRealization(sub6=sub6, mmwave=mmwave, shared_cluster_indices=tuple(shared))
