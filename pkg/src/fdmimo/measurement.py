"""Uplink pilot reception through analog combiners and noise whitening."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError, FormatError, RankError


@dataclass(frozen=True, eq=False)
class CombinerSet:
    """``M`` training combiners of shape ``N_a x L`` with unit-modulus entries."""

    frames: np.ndarray
    tx_power: float = 1.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=complex)
        if frames.ndim != 3:
            raise DomainError("frames must have shape (M, N_a, L)")
        if self.tx_power <= 0:
            raise DomainError("tx_power must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def m_count(self) -> int:
        return self.frames.shape[0]

    @property
    def n_elements(self) -> int:
        return self.frames.shape[1]

    @property
    def l_count(self) -> int:
        return self.frames.shape[2]

    @property
    def stacked(self) -> np.ndarray:
        """``W = sqrt(P) [W_RF^(1), ..., W_RF^(M)]``, shape ``N_a x ML``."""
        w = np.concatenate(list(self.frames), axis=1)
        return math.sqrt(self.tx_power) * w

    def subset(self, m_count: int) -> "CombinerSet":
        """The first ``m_count`` frames."""
        return CombinerSet(self.frames[:m_count], self.tx_power)


@dataclass(frozen=True, eq=False)
class Whitener:
    """Block-diagonal lower Cholesky factor ``D`` of the combined-noise Gram.

    ``blocks[m]`` satisfies ``blocks[m] @ blocks[m].conj().T == W_RF^(m)H W_RF^(m)``.
    """

    blocks: np.ndarray

    @property
    def size(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return linalg.block_diag(*self.blocks)

    def apply_inverse(self, x: np.ndarray) -> np.ndarray:
        """``D^{-1} x`` for an ``ML x n`` array, solved block by block."""
        x = np.asarray(x)
        M, L, _ = self.blocks.shape
        if x.shape[0] != M * L:
            raise ConfigError(f"whitener expects {M * L} rows, got {x.shape[0]}")
        out = np.empty(x.shape, dtype=complex)
        for m, block in enumerate(self.blocks):
            rows = slice(m * L, (m + 1) * L)
            out[rows] = linalg.solve_triangular(block, x[rows], lower=True)
        return out


@dataclass(frozen=True, eq=False)
class MeasurementBatch:
    """Whitened model ``Y = Phi H + N`` with ``N`` white of variance ``noise_var``."""

    sensing: np.ndarray
    observations: np.ndarray
    noise_var: float
    whitener: np.ndarray

    @property
    def n_measurements(self) -> int:
        return self.sensing.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.observations.shape[1]


def random_combiners(M: int, L: int, N_a: int, tx_power: float,
                     rng: np.random.Generator) -> CombinerSet:
    """Phase-shifter combiners with i.i.d. uniform phases."""
    if min(M, L, N_a) < 1:
        raise ConfigError("M, L and N_a must be positive")
    phases = rng.uniform(0.0, 2 * math.pi, size=(M, N_a, L))
    return CombinerSet(np.exp(1j * phases), tx_power)


def draw_noise(M: int, N_a: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circular Gaussian antenna noise, shape ``(M, N_a, K)``."""
    z = rng.standard_normal(size=(M, N_a, K, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2)


def observe_with_noise(H: np.ndarray, combiners: CombinerSet, noise: np.ndarray,
                       noise_std: float) -> np.ndarray:
    """Stacked pilots ``W^H H + [W_RF^(m)H n^(m)]_m`` for a given noise draw.

    ``H`` is ``N_a x K``; ``noise`` holds unit-variance antenna noise of shape
    ``(M, N_a, K)`` and is scaled by ``noise_std``.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != combiners.n_elements:
        raise ConfigError(f"channel has shape {H.shape}, combiners expect "
                          f"{combiners.n_elements} antennas")
    Y = combiners.stacked.conj().T @ H
    if noise_std > 0:
        if noise.shape != (combiners.m_count, H.shape[0], H.shape[1]):
            raise ConfigError(f"noise has shape {noise.shape}")
        combined = np.einsum("mal,mak->mlk", combiners.frames.conj(), noise)
        Y = Y + noise_std * combined.reshape(-1, H.shape[1])
    return Y


def observe(freq_channel, combiners: CombinerSet, noise_var: float,
            rng: np.random.Generator) -> np.ndarray:
    """Raw stacked pilots, ``ML x K``.

    ``freq_channel`` is a ``K x N_a`` array (one row per subcarrier).
    """
    if noise_var < 0:
        raise DomainError("noise variance must be nonnegative")
    H = np.asarray(freq_channel).T
    noise = draw_noise(combiners.m_count, H.shape[0], H.shape[1], rng)
    return observe_with_noise(H, combiners, noise, math.sqrt(noise_var))


def whitener(combiners: CombinerSet) -> Whitener:
    """Cholesky factor of ``blockdiag(W_RF^(m)H W_RF^(m))`` (noise variance excluded)."""
    blocks = []
    for m, frame in enumerate(combiners.frames):
        gram = frame.conj().T @ frame
        try:
            chol = linalg.cholesky(gram, lower=True)
        except linalg.LinAlgError:
            raise RankError(f"combiner Gram of frame {m} is not positive definite", block=m)
        diag = np.abs(np.diag(chol))
        if diag.min() <= 1e-10 * diag.max():
            raise RankError(f"combiner Gram of frame {m} is numerically singular", block=m)
        blocks.append(chol)
    return Whitener(np.array(blocks))


def whiten_observations(raw: np.ndarray, combiners: CombinerSet, noise_var: float,
                        white: Whitener | None = None) -> MeasurementBatch:
    if white is None:
        white = whitener(combiners)
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.shape[0] != white.size:
        raise ConfigError(f"raw pilots have shape {raw.shape}, expected {white.size} rows")
    sensing = white.apply_inverse(combiners.stacked.conj().T)
    return MeasurementBatch(
        sensing=sensing,
        observations=white.apply_inverse(raw),
        noise_var=float(noise_var),
        whitener=white.matrix,
    )


# Binary batch container, little-endian:
#   4s magic "FDMB" | u32 version | u64 ML | u64 N_a | u64 K | u64 has_truth
#   f64 noise_var | complex128 row-major: sensing (ML x N_a),
#   observations (ML x K), whitener (ML x ML), [truth (N_a x K)]
_MAGIC = b"FDMB"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQQd")


def save_batch(fh, batch: MeasurementBatch, truth: np.ndarray | None = None) -> None:
    ml, n_a = batch.sensing.shape
    k = batch.observations.shape[1]
    if truth is not None and np.shape(truth) != (n_a, k):
        raise ConfigError(f"truth must have shape {(n_a, k)}")
    fh.write(_HEADER.pack(_MAGIC, _VERSION, ml, n_a, k, int(truth is not None), batch.noise_var))
    arrays = [batch.sensing, batch.observations, batch.whitener]
    if truth is not None:
        arrays.append(truth)
    for arr in arrays:
        fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_batch(fh) -> tuple[MeasurementBatch, np.ndarray | None]:
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise FormatError("truncated batch header")
    magic, version, ml, n_a, k, has_truth, noise_var = _HEADER.unpack(header)
    if magic != _MAGIC or version != _VERSION:
        raise FormatError("not a measurement batch file")

    def read(rows, cols):
        buf = fh.read(rows * cols * 16)
        if len(buf) != rows * cols * 16:
            raise FormatError("truncated batch payload")
        return np.frombuffer(buf, dtype="<c16").reshape(rows, cols).astype(complex)

    sensing, obs, white = read(ml, n_a), read(ml, k), read(ml, ml)
    truth = read(n_a, k) if has_truth else None
    return MeasurementBatch(sensing, obs, noise_var, white), truth
