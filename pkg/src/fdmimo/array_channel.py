"""Geometry-based stochastic channel model for a uniform planar array.

Angles follow one convention throughout the package: the zenith ``theta`` is
measured from the axis along which the vertical phase progression
``exp(-j 2 pi m d_v cos(theta))`` runs, and the azimuth ``phi`` enters the
horizontal progression through ``sin(theta) cos(phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

# Sampling period used by the reference wideband model (1/1760 us).
DEFAULT_SAMPLING_PERIOD = 1.0 / 1760e6

_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """UPA with ``n_rows`` x ``n_cols`` elements; spacings in wavelengths."""

    n_rows: int
    n_cols: int
    spacing_v: float = 0.5
    spacing_h: float = 0.5

    def __post_init__(self):
        if int(self.n_rows) != self.n_rows or self.n_rows < 1:
            raise DomainError(f"n_rows must be a positive integer, got {self.n_rows}")
        if int(self.n_cols) != self.n_cols or self.n_cols < 1:
            raise DomainError(f"n_cols must be a positive integer, got {self.n_cols}")
        if not (self.spacing_v > 0 and self.spacing_h > 0):
            raise DomainError("element spacings must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_rows * self.n_cols


@dataclass(frozen=True)
class Path:
    gain: complex
    delay: float
    zenith: float
    azimuth: float

    def __post_init__(self):
        _check_angles(np.asarray(self.zenith), np.asarray(self.azimuth))


@dataclass(frozen=True)
class ChannelRealization:
    """Time- and frequency-domain channel of one drop.

    ``taps`` has shape ``(L_d, N_a)`` and ``freq`` has shape ``(K, N_a)``;
    row ``l`` of ``taps`` is the channel at delay tap ``l + 1``.
    """

    taps: np.ndarray
    freq: np.ndarray
    paths: tuple
    sampling_period: float
    rolloff: float

    @property
    def matrix(self) -> np.ndarray:
        """Frequency-domain channel as an ``N_a x K`` matrix ``H``."""
        return self.freq.T


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the stochastic path model.

    Path directions are isotropic over the zenith band ``zenith_range`` and
    the full azimuth circle.
    """

    geometry: ArrayGeometry
    n_subcarriers: int = 8
    n_paths_range: tuple = (6, 12)
    sampling_period: float = DEFAULT_SAMPLING_PERIOD
    rolloff: float = 1.0
    n_taps: int | None = None
    zenith_range: tuple = field(default=(0.0, math.pi / 2))

    def __post_init__(self):
        lo, hi = self.n_paths_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid path count range {self.n_paths_range}", "channel.n_paths_range")
        if self.n_subcarriers < 1:
            raise ConfigError("must be positive", "channel.n_subcarriers")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError("rolloff must lie in [0, 1]", "channel.rolloff")
        if self.sampling_period <= 0:
            raise ConfigError("must be positive", "channel.sampling_period")
        z0, z1 = self.zenith_range
        if not 0.0 <= z0 < z1 <= math.pi:
            raise ConfigError(f"invalid zenith range {self.zenith_range}", "channel.zenith_range")
        if self.n_taps is not None and not 1 <= self.n_taps <= self.n_subcarriers:
            raise ConfigError("need 1 <= n_taps <= n_subcarriers", "channel.n_taps")

    @property
    def tap_count(self) -> int:
        """Resolved ``L_d``: enough taps to cover the longest delay plus filter tail."""
        if self.n_taps is not None:
            return self.n_taps
        max_delay_samples = self.n_paths_range[1] - 1
        return min(self.n_subcarriers, max_delay_samples + 4)


def _check_angles(zenith, azimuth):
    if np.any(zenith < -_ANGLE_TOL) or np.any(zenith > math.pi + _ANGLE_TOL):
        raise DomainError("zenith must lie in [0, pi]")
    if np.any(azimuth < -math.pi - _ANGLE_TOL) or np.any(azimuth >= math.pi):
        raise DomainError("azimuth must lie in [-pi, pi)")


def wrap_azimuth(azimuth):
    """Map azimuths onto [-pi, pi)."""
    return np.mod(np.asarray(azimuth, dtype=float) + math.pi, 2 * math.pi) - math.pi


def steering_matrix(zeniths, azimuths, geom: ArrayGeometry) -> np.ndarray:
    """Stack normalized steering vectors column-wise.

    Returns an ``N_a x G`` matrix whose column ``i`` responds to the
    direction ``(zeniths[i], azimuths[i])``.  Element ``m * n_cols + n``
    belongs to row ``m`` and column ``n`` of the array.
    """
    zen = np.atleast_1d(np.asarray(zeniths, dtype=float))
    azi = np.atleast_1d(np.asarray(azimuths, dtype=float))
    if zen.shape != azi.shape or zen.ndim != 1:
        raise DomainError("zeniths and azimuths must be 1-D arrays of equal length")
    _check_angles(zen, azi)

    m = np.arange(geom.n_rows)[:, None]
    n = np.arange(geom.n_cols)[:, None]
    a_v = np.exp(-2j * np.pi * geom.spacing_v * m * np.cos(zen))
    a_h = np.exp(-2j * np.pi * geom.spacing_h * n * (np.sin(zen) * np.cos(azi)))
    atoms = (a_v[:, None, :] * a_h[None, :, :]).reshape(geom.n_elements, zen.size)
    return atoms / math.sqrt(geom.n_elements)


def steering_vector(zenith: float, azimuth: float, geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm UPA response ``a(theta, phi)`` of length ``N_a``."""
    return steering_matrix([zenith], [azimuth], geom)[:, 0]


def raised_cosine(t, rolloff: float = 1.0, period: float = 1.0):
    """Raised-cosine impulse response normalized to ``f(0) = 1``.

    The removable singularities at ``|t| = period / (2 rolloff)`` take their
    limit ``(pi / 4) sinc(1 / (2 rolloff))``.
    """
    x = np.asarray(t, dtype=float) / period
    out = np.sinc(x)
    if rolloff == 0:
        return out if out.ndim else float(out)
    bx = 2.0 * rolloff * x
    denom = 1.0 - bx * bx
    singular = np.abs(denom) < 1e-10
    safe = np.where(singular, 1.0, denom)
    out = np.where(
        singular,
        (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)),
        out * np.cos(np.pi * rolloff * x) / safe,
    )
    return out if out.ndim else float(out)


def _path_arrays(paths: Sequence[Path]):
    if len(paths) == 0:
        raise DomainError("path list is empty")
    gains = np.array([p.gain for p in paths], dtype=complex)
    delays = np.array([p.delay for p in paths], dtype=float)
    zen = np.array([p.zenith for p in paths], dtype=float)
    azi = np.array([p.azimuth for p in paths], dtype=float)
    return gains, delays, zen, azi


def tap_gains(n_taps: int, gains, delays, period: float, rolloff: float) -> np.ndarray:
    """Per-tap path gains ``g(l)`` as an ``L_d x N_p`` array, ``l = 1..L_d``."""
    l = np.arange(1, n_taps + 1)[:, None]
    return gains[None, :] * raised_cosine(l * period - delays[None, :], rolloff, period)


def channel_tap(l: int, paths: Sequence[Path], geom: ArrayGeometry, period: float,
                rolloff: float = 1.0) -> np.ndarray:
    """Spatial channel at delay tap ``l`` (1-based)."""
    if l < 1:
        raise DomainError("tap index is 1-based")
    gains, delays, zen, azi = _path_arrays(paths)
    weights = gains * raised_cosine(l * period - delays, rolloff, period)
    return steering_matrix(zen, azi, geom) @ weights


def dft_matrix(n_taps: int, n_subcarriers: int) -> np.ndarray:
    """``K x L_d`` matrix with entries ``exp(-j 2 pi (l - 1) k / K)``, ``k = 1..K``."""
    k = np.arange(1, n_subcarriers + 1)[:, None]
    l = np.arange(n_taps)[None, :]
    return np.exp(-2j * np.pi * l * k / n_subcarriers)


def to_frequency(taps, n_subcarriers: int) -> np.ndarray:
    """Transform ``L_d`` delay taps (rows) into ``K`` subcarrier channels (rows)."""
    taps = np.atleast_2d(np.asarray(taps, dtype=complex))
    if taps.shape[0] == 0:
        raise DomainError("no taps given")
    if n_subcarriers < taps.shape[0]:
        raise ConfigError(f"K={n_subcarriers} is smaller than L_d={taps.shape[0]}")
    return dft_matrix(taps.shape[0], n_subcarriers) @ taps


def realize_channel(paths: Sequence[Path], geom: ArrayGeometry, n_subcarriers: int,
                    n_taps: int, period: float = DEFAULT_SAMPLING_PERIOD,
                    rolloff: float = 1.0) -> ChannelRealization:
    gains, delays, zen, azi = _path_arrays(paths)
    A = steering_matrix(zen, azi, geom)
    taps = tap_gains(n_taps, gains, delays, period, rolloff) @ A.T
    return ChannelRealization(
        taps=taps,
        freq=to_frequency(taps, n_subcarriers),
        paths=tuple(paths),
        sampling_period=period,
        rolloff=rolloff,
    )


def sample_paths(config: ChannelConfig, rng: np.random.Generator) -> list[Path]:
    """Draw a random path set.

    Gains are complex Gaussian and rescaled so that the subcarrier-averaged
    ``||h[k]||^2`` of this realization equals ``N_a``.
    """
    lo, hi = config.n_paths_range
    n_paths = int(rng.integers(lo, hi + 1))
    z0, z1 = config.zenith_range
    zen = np.arccos(rng.uniform(math.cos(z1), math.cos(z0), n_paths))
    azi = wrap_azimuth(rng.uniform(-math.pi, math.pi, n_paths))
    delays = rng.uniform(0.0, (n_paths - 1) * config.sampling_period, n_paths)
    gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / math.sqrt(2)

    n_taps = config.tap_count
    A = steering_matrix(zen, azi, config.geometry)
    g_freq = dft_matrix(n_taps, config.n_subcarriers) @ tap_gains(
        n_taps, gains, delays, config.sampling_period, config.rolloff)
    energy = np.mean(np.sum(np.abs(g_freq @ A.T) ** 2, axis=1))
    if energy > 0:
        gains = gains * math.sqrt(config.geometry.n_elements / energy)

    return [Path(complex(g), float(d), float(z), float(a))
            for g, d, z, a in zip(gains, delays, zen, azi)]


def sample_channel(config: ChannelConfig, rng: np.random.Generator) -> ChannelRealization:
    paths = sample_paths(config, rng)
    return realize_channel(paths, config.geometry, config.n_subcarriers, config.tap_count,
                           config.sampling_period, config.rolloff)
