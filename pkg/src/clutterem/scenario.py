"""Seeded synthesis of heterogeneous clutter windows with injected targets.

A window holds ``K`` range bins split into contiguous clutter regions. Bin
indices in configurations and ground truth are 1-based and global; the data
array itself is ``(K, N)`` with row ``k - 1`` holding snapshot ``z_k``.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .numerics import cholesky


class TargetModel(str, Enum):
    DETERMINISTIC = "deterministic"
    FLUCTUATING = "fluctuating-steered"
    SWARM = "swarm"


@dataclass(frozen=True)
class ClutterRegion:
    bins: int
    cnr_db: float
    rho: float = 0.9


@dataclass(frozen=True)
class Target:
    bin: int
    sinr_db: float
    model: TargetModel = TargetModel.DETERMINISTIC


@dataclass(frozen=True)
class ScenarioConfig:
    n_channels: int
    regions: tuple
    targets: tuple = ()
    aoa_rad: float = 0.0
    noise_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.n_channels < 1:
            raise InvalidInputError("need at least one channel")
        if not self.regions:
            raise InvalidInputError("need at least one clutter region")
        if self.noise_power <= 0:
            raise InvalidInputError("noise power must be positive")
        for r in self.regions:
            if r.bins <= self.n_channels:
                raise InvalidInputError(
                    f"region with {r.bins} bins must exceed N={self.n_channels}")
            if not np.isfinite(r.cnr_db):
                raise InvalidInputError("CNR must be finite")
            if not 0.0 <= r.rho < 1.0:
                raise InvalidInputError("one-lag correlation must lie in [0, 1)")
        seen = set()
        for t in self.targets:
            if not 1 <= t.bin <= self.n_bins:
                raise InvalidInputError(f"target bin {t.bin} outside 1..{self.n_bins}")
            if t.bin in seen:
                raise InvalidInputError(f"two targets in bin {t.bin}")
            seen.add(t.bin)

    @property
    def n_bins(self):
        return sum(r.bins for r in self.regions)

    @property
    def n_regions(self):
        return len(self.regions)

    def region_labels(self):
        """1-based region label of every bin."""
        return np.repeat(np.arange(1, self.n_regions + 1), [r.bins for r in self.regions])

    def with_targets(self, bins, sinr_db, model):
        targets = tuple(Target(int(b), float(sinr_db), TargetModel(model)) for b in bins)
        return ScenarioConfig(self.n_channels, self.regions, targets,
                              self.aoa_rad, self.noise_power)


@dataclass
class GroundTruth:
    region_labels: np.ndarray
    target_flags: np.ndarray
    #: bin -> injected complex amplitude (deterministic) or power (fluctuating)
    injected: dict = field(default_factory=dict)

    @property
    def target_bins(self):
        return set((np.flatnonzero(self.target_flags) + 1).tolist())


def steering_vector(n_channels, aoa_rad=0.0):
    """Half-wavelength ULA response ``exp(i pi n sin(aoa))``, ``n = 0..N-1``."""
    if n_channels < 1:
        raise InvalidInputError("need at least one channel")
    n = np.arange(n_channels)
    return np.exp(1j * np.pi * n * np.sin(aoa_rad))


def clutter_covariance(n_channels, rho, cnr_db, noise_power=1.0):
    """Region clutter covariance and clutter-plus-noise covariance.

    Returns ``(M, Sigma)`` with ``M[i, j] = sigma_c^2 rho^|i-j|``,
    ``sigma_c^2 = noise_power * 10^(cnr_db / 10)`` and
    ``Sigma = M + noise_power * I``.
    """
    if not 0.0 <= rho < 1.0:
        raise InvalidInputError("one-lag correlation must lie in [0, 1)")
    if noise_power <= 0:
        raise InvalidInputError("noise power must be positive")
    clutter_power = noise_power * 10.0 ** (cnr_db / 10.0)
    idx = np.arange(n_channels)
    lag = np.abs(idx[:, None] - idx[None, :])
    M = clutter_power * rho ** lag.astype(float)
    M = M.astype(complex)
    return M, M + noise_power * np.eye(n_channels)


def target_amplitude(sinr_db, sigma, v, rng=None):
    """Deterministic target amplitude with ``|a|^2 v^H Sigma^-1 v = SINR``.

    The phase is uniform on ``[0, 2 pi)`` drawn from ``rng``; without a
    generator the amplitude is real and positive. ``sinr_db = -inf`` gives 0.
    """
    if np.isneginf(sinr_db):
        return 0j
    gain = np.real(np.conj(v) @ np.linalg.solve(sigma, v))
    assert gain > 0, "v^H Sigma^-1 v must be positive for PD Sigma"
    modulus = np.sqrt(10.0 ** (sinr_db / 10.0) / gain)
    phase = 0.0 if rng is None else rng.uniform(0.0, 2 * np.pi)
    return modulus * np.exp(1j * phase)


def target_power(sinr_db, clutter_power, noise_power=1.0):
    """Fluctuating target power ``SINR * (sigma_c^2 + sigma_n^2)``."""
    return 10.0 ** (sinr_db / 10.0) * (clutter_power + noise_power)


def circular_normal(rng, shape):
    """Standard circular complex normal draws (unit variance)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def synthesize(config: ScenarioConfig, seed=None, rng: Optional[np.random.Generator] = None):
    """Draw one data window and its ground truth.

    Clutter-only bins of region ``l`` are ``CN(0, Sigma_l)``. Deterministic
    targets add ``alpha v``; fluctuating and swarm targets add an independent
    ``CN(0, sigma^2 v v^H)`` term, so the bin covariance is
    ``Sigma_l + sigma^2 v v^H``.

    Either ``seed`` or an explicit ``rng`` drives all draws; the same seed
    reproduces the window bit for bit.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    N, K = config.n_channels, config.n_bins
    v = steering_vector(N, config.aoa_rad)
    labels = config.region_labels()
    Z = circular_normal(rng, (K, N))
    start = 0
    region_stats = []
    for region in config.regions:
        M, sigma = clutter_covariance(N, region.rho, region.cnr_db, config.noise_power)
        C = cholesky(sigma)
        Z[start:start + region.bins] = Z[start:start + region.bins] @ C.T
        region_stats.append((np.real(M[0, 0]), sigma))
        start += region.bins

    flags = np.zeros(K, dtype=bool)
    injected = {}
    for t in sorted(config.targets, key=lambda t: t.bin):
        k = t.bin - 1
        clutter_power, sigma = region_stats[labels[k] - 1]
        flags[k] = True
        if t.model is TargetModel.DETERMINISTIC:
            alpha = target_amplitude(t.sinr_db, sigma, v, rng)
            Z[k] += alpha * v
            injected[t.bin] = alpha
        else:
            power = target_power(t.sinr_db, clutter_power, config.noise_power)
            Z[k] += np.sqrt(power) * circular_normal(rng, ()) * v
            injected[t.bin] = power
    return Z, GroundTruth(labels, flags, injected)
