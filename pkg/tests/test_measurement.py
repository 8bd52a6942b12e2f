import io
import math

import numpy as np
import pytest

from fdmimo.errors import ConfigError, FormatError, RankError
from fdmimo.measurement import (
    CombinerSet, load_batch, observe, random_combiners, save_batch, whiten_observations, whitener,
)


def whitened_noise_cov(M, L, N_a, sigma2, draws, seed):
    """Sample covariance of D^-1 W^H n over independent noise draws."""
    rng = np.random.default_rng(seed)
    comb = random_combiners(M, L, N_a, 1.0, rng)
    white = whitener(comb)
    n = (rng.standard_normal((M, N_a, draws)) + 1j * rng.standard_normal((M, N_a, draws)))
    n *= math.sqrt(sigma2 / 2)
    combined = np.einsum("mal,mad->mld", comb.frames.conj(), n).reshape(M * L, draws)
    w = white.apply_inverse(combined)
    return w @ w.conj().T / draws


def test_combiners_unit_modulus_and_shapes():
    comb = random_combiners(3, 4, 16, 2.0, np.random.default_rng(0))
    assert comb.frames.shape == (3, 16, 4)
    np.testing.assert_allclose(np.abs(comb.frames), 1.0)
    assert comb.stacked.shape == (16, 12)
    np.testing.assert_allclose(comb.stacked, math.sqrt(2.0) * np.hstack(list(comb.frames)))
    assert comb.subset(2).m_count == 2
    assert np.array_equal(comb.subset(2).frames, comb.frames[:2])


def test_combiner_phases_uniform():
    comb = random_combiners(50, 8, 64, 1.0, np.random.default_rng(1))
    ph = np.angle(comb.frames).ravel()
    hist = np.histogram(ph, bins=8, range=(-math.pi, math.pi))[0] / ph.size
    np.testing.assert_allclose(hist, 1 / 8, atol=0.01)
    assert abs(np.mean(comb.frames)) < 0.02


def test_whitener_factorizes_gram_blocks():
    comb = random_combiners(4, 3, 12, 1.0, np.random.default_rng(2))
    white = whitener(comb)
    D = white.matrix
    assert np.allclose(D, np.tril(D))
    gram = np.zeros((12, 12), dtype=complex)
    for m, frame in enumerate(comb.frames):
        gram[3 * m:3 * m + 3, 3 * m:3 * m + 3] = frame.conj().T @ frame
    np.testing.assert_allclose(D @ D.conj().T, gram, atol=1e-10)
    off_block = D.copy()
    for m in range(4):
        off_block[3 * m:3 * m + 3, 3 * m:3 * m + 3] = 0
    assert not off_block.any()


def test_sensing_is_dinv_wh():
    rng = np.random.default_rng(3)
    comb = random_combiners(3, 4, 16, 1.5, rng)
    H = rng.standard_normal((16, 5)) + 1j * rng.standard_normal((16, 5))
    raw = observe(H.T, comb, 0.1, rng)
    batch = whiten_observations(raw, comb, 0.1)
    expected = np.linalg.solve(batch.whitener, comb.stacked.conj().T)
    np.testing.assert_allclose(batch.sensing, expected, atol=1e-10)
    np.testing.assert_allclose(batch.observations, np.linalg.solve(batch.whitener, raw), atol=1e-10)
    assert batch.n_measurements == 12 and batch.n_subcarriers == 5


def test_noiseless_observation_is_exact():
    rng = np.random.default_rng(4)
    comb = random_combiners(2, 2, 8, 1.0, rng)
    H = rng.standard_normal((8, 3)) + 0j
    np.testing.assert_allclose(observe(H.T, comb, 0.0, rng), comb.stacked.conj().T @ H)


def test_raw_noise_covariance():
    """Combined antenna noise has covariance sigma^2 W_RF^H W_RF per frame."""
    rng = np.random.default_rng(5)
    comb = random_combiners(1, 3, 6, 1.0, rng)
    sigma2 = 0.5
    raw = observe(np.zeros((40_000, 6)), comb, sigma2, rng)
    cov = raw @ raw.conj().T / raw.shape[1]
    target = sigma2 * comb.frames[0].conj().T @ comb.frames[0]
    assert np.linalg.norm(cov - target, 2) / np.linalg.norm(target, 2) < 0.05


def test_whitened_noise_is_white():
    cov = whitened_noise_cov(2, 3, 16, 0.7, 50_000, 6)
    assert np.linalg.norm(cov - 0.7 * np.eye(6), 2) / 0.7 < 0.05


def test_singular_combiner_rejected():
    frames = np.ones((2, 4, 2), dtype=complex)
    frames[0] = np.exp(1j * np.random.default_rng(0).uniform(0, 6, (4, 2)))
    with pytest.raises(RankError) as err:
        whitener(CombinerSet(frames))
    assert err.value.block == 1


def test_shape_errors():
    rng = np.random.default_rng(0)
    comb = random_combiners(2, 2, 8, 1.0, rng)
    with pytest.raises(ConfigError):
        observe(np.zeros((3, 7)), comb, 0.1, rng)
    with pytest.raises(ConfigError):
        whiten_observations(np.zeros((3, 2)), comb, 0.1)


def test_batch_roundtrip_and_corruption():
    rng = np.random.default_rng(8)
    comb = random_combiners(2, 2, 8, 1.0, rng)
    H = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    batch = whiten_observations(observe(H.T, comb, 0.2, rng), comb, 0.2)
    buf = io.BytesIO()
    save_batch(buf, batch, truth=H)
    data = buf.getvalue()
    assert len(data) == 48 + 16 * (4 * 8 + 4 * 4 + 4 * 4 + 8 * 4)
    back, truth = load_batch(io.BytesIO(data))
    assert np.array_equal(back.sensing, batch.sensing)
    assert np.array_equal(back.observations, batch.observations)
    assert np.array_equal(back.whitener, batch.whitener)
    assert back.noise_var == 0.2 and np.array_equal(truth, H)

    buf = io.BytesIO()
    save_batch(buf, batch)
    assert load_batch(io.BytesIO(buf.getvalue()))[1] is None
    with pytest.raises(FormatError):
        load_batch(io.BytesIO(data[:-5]))
    with pytest.raises(FormatError):
        load_batch(io.BytesIO(b"XXXX" + data[4:]))
    with pytest.raises(FormatError):
        load_batch(io.BytesIO(data[:10]))
