"""Candidate-direction grids, steering dictionaries and grid-uniformity statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .array_channel import ArrayGeometry, steering_matrix, wrap_azimuth
from .errors import DomainError, FormatError

GOLDEN_ANGLE = (3.0 - math.sqrt(5.0)) * math.pi

METHODS = ("SFG", "USPD", "USVD")


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Ordered candidate directions.

    Zeniths lie in [0, pi] and azimuths are reported on [0, 2pi) for every
    method.
    """

    zenith: np.ndarray
    azimuth: np.ndarray
    method: str
    angle_range: float | None = None

    def __post_init__(self):
        zen = np.array(self.zenith, dtype=float)
        azi = np.array(self.azimuth, dtype=float)
        if zen.ndim != 1 or zen.shape != azi.shape or zen.size == 0:
            raise DomainError("grid needs matching, non-empty 1-D angle arrays")
        zen.setflags(write=False)
        azi.setflags(write=False)
        object.__setattr__(self, "zenith", zen)
        object.__setattr__(self, "azimuth", azi)

    def __len__(self):
        return self.zenith.size

    @property
    def directions(self) -> np.ndarray:
        """``G x 2`` array of ``(zenith, azimuth)`` rows."""
        return np.column_stack([self.zenith, self.azimuth])

    def unit_vectors(self) -> np.ndarray:
        return unit_vectors(self.zenith, self.azimuth)


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: np.ndarray
    grid: DirectionGrid
    geometry: ArrayGeometry

    @property
    def size(self) -> int:
        return self.atoms.shape[1]


def unit_vectors(zenith, azimuth) -> np.ndarray:
    """Cartesian unit vectors, one row per direction."""
    zen = np.asarray(zenith, dtype=float)
    azi = np.asarray(azimuth, dtype=float)
    s = np.sin(zen)
    return np.stack([s * np.cos(azi), s * np.sin(azi), np.cos(zen)], axis=-1)


def sfg_grid(G: int, xi: float = math.pi / 2) -> DirectionGrid:
    """Spherical Fibonacci grid over a polar cap of angular size ``xi``.

    Lattice point ``n`` has polar coordinate ``x_n = 1 - 2(n-1) xi / ((G-1) pi)``
    and azimuth ``n * GOLDEN_ANGLE``; the lattice pole maps to zenith 0.
    """
    if G < 2:
        raise DomainError(f"SFG needs at least two points, got G={G}")
    if not 0 < xi <= math.pi:
        raise DomainError(f"angle range must lie in (0, pi], got {xi}")
    n = np.arange(1, G + 1)
    x = 1.0 - 2.0 * (n - 1) * xi / ((G - 1) * math.pi)
    zenith = np.arccos(np.clip(x, -1.0, 1.0))
    # atan2(alpha sin(n w), alpha cos(n w)) without the undefined value at the poles
    azimuth = np.mod(n * GOLDEN_ANGLE, 2 * math.pi)
    return DirectionGrid(zenith, azimuth, "SFG", xi)


def uspd_grid(G_v: int, G_h: int) -> DirectionGrid:
    """Uniform sampling of the physical angles; azimuth covers [0, pi) only."""
    if G_v < 1 or G_h < 1:
        raise DomainError("grid dimensions must be positive")
    theta = np.arange(G_v) * math.pi / G_v
    phi = np.arange(G_h) * math.pi / G_h
    zen, azi = np.meshgrid(theta, phi, indexing="ij")
    return DirectionGrid(zen.ravel(), azi.ravel(), "USPD")


def usvd_grid(G_v: int, G_h: int) -> DirectionGrid:
    """Uniform sampling of the direction cosines ``cos(theta)`` and ``cos(phi)``."""
    if G_v < 1 or G_h < 1:
        raise DomainError("grid dimensions must be positive")
    theta = np.arccos(1.0 - (2.0 * np.arange(1, G_v + 1) - 1.0) / G_v)
    phi = np.arccos(1.0 - (2.0 * np.arange(1, G_h + 1) - 1.0) / G_h)
    zen, azi = np.meshgrid(theta, phi, indexing="ij")
    return DirectionGrid(zen.ravel(), azi.ravel(), "USVD")


def make_grid(method: str, G_v: int, G_h: int, xi: float = math.pi / 2) -> DirectionGrid:
    """Build a grid of ``G = G_v * G_h`` directions by method name."""
    method = method.upper()
    if method == "SFG":
        return sfg_grid(G_v * G_h, xi)
    if method == "USPD":
        return uspd_grid(G_v, G_h)
    if method == "USVD":
        return usvd_grid(G_v, G_h)
    raise DomainError(f"unknown grid method {method!r}; expected one of {METHODS}")


def build_dictionary(grid: DirectionGrid, geom: ArrayGeometry) -> Dictionary:
    atoms = steering_matrix(grid.zenith, wrap_azimuth(grid.azimuth), geom)
    atoms.setflags(write=False)
    return Dictionary(atoms, grid, geom)


def _nearest_angles(points: np.ndarray, grid_vecs: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        nearest = np.argmax(block @ grid_vecs.T, axis=1)
        # chord-length form keeps full precision near zero separation
        chord = np.linalg.norm(block - grid_vecs[nearest], axis=1)
        out[start:start + chunk] = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return out


def min_angles(zenith, azimuth, grid: DirectionGrid) -> np.ndarray:
    """Great-circle distance from each query direction to its nearest grid point."""
    points = np.atleast_2d(unit_vectors(zenith, azimuth))
    return _nearest_angles(points, grid.unit_vectors())


def min_angle(point, grid: DirectionGrid) -> float:
    zenith, azimuth = point
    return float(min_angles([zenith], [azimuth], grid)[0])


def sample_hemisphere(n_samples: int, rng: np.random.Generator):
    """Area-uniform directions with zenith in [0, pi/2]."""
    zenith = np.arccos(rng.uniform(0.0, 1.0, n_samples))
    azimuth = rng.uniform(0.0, 2 * math.pi, n_samples)
    return zenith, azimuth


def empirical_min_angle_cdf(grid: DirectionGrid, n_samples: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Sorted minimal angles of ``n_samples`` random hemisphere directions."""
    if n_samples < 1:
        raise DomainError("need at least one sample")
    zenith, azimuth = sample_hemisphere(n_samples, rng)
    return np.sort(min_angles(zenith, azimuth, grid))


def theoretical_cdf(G: int) -> tuple[float, Callable]:
    """Tessellation radius ``r0`` and the ideal minimal-angle CDF ``r^2 / r0^2``."""
    if G < 1:
        raise DomainError("G must be positive")
    r0 = math.acos((G - 1) / G)

    def cdf(r):
        r = np.asarray(r, dtype=float)
        out = np.clip(r / r0, 0.0, 1.0) ** 2
        return out if out.ndim else float(out)

    return r0, cdf


def ks_distance(samples, G: int) -> float:
    """Kolmogorov distance between empirical minimal angles and the ideal CDF."""
    _, cdf = theoretical_cdf(G)
    return float(stats.kstest(np.asarray(samples), cdf).statistic)


def save_grid(grid: DirectionGrid, fh) -> None:
    """Write ``zenith azimuth`` rows in radians with 17 significant digits."""
    np.savetxt(fh, grid.directions, fmt="%.17g", delimiter=" ")


def load_grid(fh, method: str = "SFG", angle_range: float | None = None) -> DirectionGrid:
    try:
        data = np.loadtxt(fh, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"unreadable grid file: {exc}") from None
    if data.shape[1] != 2:
        raise FormatError("grid file rows must hold two columns: zenith azimuth")
    return DirectionGrid(data[:, 0], data[:, 1], method, angle_range)
