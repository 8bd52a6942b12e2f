import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fdmimo.array_channel import (
    ArrayGeometry, ChannelConfig, Path, channel_tap, dft_matrix, raised_cosine,
    realize_channel, sample_channel, sample_paths, steering_matrix, steering_vector,
    to_frequency, wrap_azimuth,
)
from fdmimo.errors import ConfigError, DomainError


def loop_steering(zenith, azimuth, n_rows, n_cols, d_v=0.5, d_h=0.5):
    """Element-by-element phase evaluation, no Kronecker structure."""
    out = []
    for m in range(n_rows):
        for n in range(n_cols):
            phase = -2 * math.pi * (m * d_v * math.cos(zenith)
                                    + n * d_h * math.sin(zenith) * math.cos(azimuth))
            out.append(cmath.exp(1j * phase) / math.sqrt(n_rows * n_cols))
    return np.array(out)


def rc_by_spectrum(t, beta, T=1.0):
    """Inverse Fourier transform of the raised-cosine spectrum, by quadrature."""
    f1 = (1 - beta) / (2 * T)
    f2 = (1 + beta) / (2 * T)

    def spectrum(f):
        if f <= f1:
            return T
        return T / 2 * (1 + math.cos(math.pi * T / beta * (f - f1)))

    flat = 2 * integrate.quad(lambda f: T * math.cos(2 * math.pi * f * t), 0, f1)[0] if f1 > 0 else 0.0
    roll = 2 * integrate.quad(lambda f: spectrum(f) * math.cos(2 * math.pi * f * t), f1, f2,
                              epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return (flat + roll) / T


def test_steering_matches_element_loop():
    geom = ArrayGeometry(2, 2)
    got = steering_vector(math.pi / 3, math.pi / 4, geom)
    np.testing.assert_allclose(got, loop_steering(math.pi / 3, math.pi / 4, 2, 2), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, math.pi), st.floats(-math.pi, math.pi, exclude_max=True),
       st.integers(1, 5), st.integers(1, 5), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_steering_loop_oracle_random(zen, azi, nr, nc, dv, dh):
    geom = ArrayGeometry(nr, nc, dv, dh)
    got = steering_vector(zen, azi, geom)
    np.testing.assert_allclose(got, loop_steering(zen, azi, nr, nc, dv, dh), atol=1e-12)
    assert np.linalg.norm(got) == pytest.approx(1.0, abs=1e-12)


def test_steering_kronecker_layout():
    geom = ArrayGeometry(3, 4)
    zen, azi = 1.1, -0.7
    a_v = np.exp(-1j * np.pi * np.arange(3) * math.cos(zen))
    a_h = np.exp(-1j * np.pi * np.arange(4) * math.sin(zen) * math.cos(azi))
    np.testing.assert_allclose(steering_vector(zen, azi, geom), np.kron(a_v, a_h) / math.sqrt(12),
                               atol=1e-14)


def test_steering_front_back_ambiguity():
    geom = ArrayGeometry(4, 4)
    np.testing.assert_allclose(steering_vector(0.8, 0.5, geom), steering_vector(0.8, -0.5, geom),
                               atol=1e-14)


@pytest.mark.parametrize("zen, azi", [(-0.1, 0.0), (math.pi + 0.1, 0.0), (1.0, math.pi),
                                      (1.0, -4.0)])
def test_steering_rejects_out_of_domain(zen, azi):
    with pytest.raises(DomainError):
        steering_vector(zen, azi, ArrayGeometry(2, 2))


def test_geometry_validation():
    with pytest.raises(DomainError):
        ArrayGeometry(0, 4)
    with pytest.raises(DomainError):
        ArrayGeometry(2, 2, spacing_v=0.0)
    assert ArrayGeometry(8, 4).n_elements == 32


@pytest.mark.parametrize("beta", [1.0, 0.5, 0.25])
@pytest.mark.parametrize("t", [0.0, 0.3, 0.5, 1.0, 1.7, 2.0, 3.25])
def test_raised_cosine_matches_spectrum_quadrature(beta, t):
    assert raised_cosine(t, beta) == pytest.approx(rc_by_spectrum(t, beta), abs=1e-9)


@pytest.mark.parametrize("beta", [1.0, 0.5, 0.25])
def test_raised_cosine_singular_point(beta):
    t0 = 1 / (2 * beta)
    expected = math.pi / 4 * np.sinc(1 / (2 * beta))
    assert raised_cosine(t0, beta) == pytest.approx(expected, abs=1e-15)
    assert raised_cosine(-t0, beta) == pytest.approx(expected, abs=1e-15)
    # continuity from both sides
    for eps in (1e-6, -1e-6):
        assert raised_cosine(t0 + eps, beta) == pytest.approx(expected, abs=1e-5)


def test_raised_cosine_zero_crossings_and_period_scaling():
    T = 2.5e-9
    assert raised_cosine(0.0, 0.4, T) == 1.0
    for n in (2, 3, 4):
        assert abs(raised_cosine(n * T, 0.4, T)) < 1e-15
    assert raised_cosine(0.7 * T, 0.4, T) == pytest.approx(raised_cosine(0.7, 0.4), rel=1e-14)
    # rolloff 0 is the plain sinc
    assert raised_cosine(0.3, 0.0) == pytest.approx(np.sinc(0.3))


def test_dft_against_double_loop():
    L, K = 3, 5
    rng = np.random.default_rng(0)
    taps = rng.standard_normal((L, 4)) + 1j * rng.standard_normal((L, 4))
    expected = np.zeros((K, 4), dtype=complex)
    for k in range(1, K + 1):
        for l in range(1, L + 1):
            expected[k - 1] += taps[l - 1] * cmath.exp(-2j * math.pi * (l - 1) * k / K)
    np.testing.assert_allclose(to_frequency(taps, K), expected, atol=1e-13)
    assert dft_matrix(L, K).shape == (K, L)


def test_to_frequency_rejects_short_transform():
    with pytest.raises(ConfigError):
        to_frequency(np.ones((4, 2)), 3)


def test_single_path_tap_is_scaled_steering_vector():
    geom = ArrayGeometry(3, 3)
    T = 1.0
    p = Path(0.7 - 0.2j, 1.3, 0.9, 2.0)
    for l in (1, 2, 5):
        expected = p.gain * raised_cosine(l * T - p.delay, 1.0, T) * steering_vector(0.9, 2.0, geom)
        np.testing.assert_allclose(channel_tap(l, [p], geom, T), expected, atol=1e-14)


def test_frequency_channel_factorization():
    """DFT of taps equals steering matrix times per-subcarrier path gains."""
    geom = ArrayGeometry(4, 4)
    rng = np.random.default_rng(5)
    cfg = ChannelConfig(geom, n_subcarriers=16, n_paths_range=(3, 6), n_taps=8)
    paths = sample_paths(cfg, rng)
    ch = realize_channel(paths, geom, 16, 8, cfg.sampling_period, 1.0)
    A = steering_matrix([p.zenith for p in paths], [p.azimuth for p in paths], geom)
    taps_gain = np.array([[p.gain * raised_cosine(l * cfg.sampling_period - p.delay, 1.0,
                                                  cfg.sampling_period) for p in paths]
                          for l in range(1, 9)])
    g_k = dft_matrix(8, 16) @ taps_gain
    expected = (A @ g_k.T).T
    assert np.linalg.norm(ch.freq - expected) / np.linalg.norm(expected) < 1e-10
    for l in range(1, 9):
        np.testing.assert_allclose(ch.taps[l - 1], channel_tap(l, paths, geom, cfg.sampling_period),
                                   atol=1e-12)
    assert ch.matrix.shape == (16, 16)


def test_sample_paths_distribution():
    geom = ArrayGeometry(2, 2)
    cfg = ChannelConfig(geom, n_subcarriers=8)
    rng = np.random.default_rng(11)
    counts, cos_z, azi, rel_delay = [], [], [], []
    for _ in range(4000):
        paths = sample_paths(cfg, rng)
        counts.append(len(paths))
        cos_z += [math.cos(p.zenith) for p in paths]
        azi += [p.azimuth for p in paths]
        rel_delay += [p.delay / ((len(paths) - 1) * cfg.sampling_period) for p in paths]
    freq = np.bincount(counts, minlength=13)[6:13] / len(counts)
    np.testing.assert_allclose(freq, np.full(7, 1 / 7), atol=0.02)
    assert min(counts) == 6 and max(counts) == 12
    # isotropic on the upper hemisphere: cos(zenith) uniform on [0, 1]
    assert min(cos_z) >= 0 and np.mean(cos_z) == pytest.approx(0.5, abs=0.01)
    assert np.mean(azi) == pytest.approx(0.0, abs=0.03)
    assert min(azi) >= -math.pi and max(azi) < math.pi
    assert 0 <= min(rel_delay) and max(rel_delay) <= 1
    assert np.mean(rel_delay) == pytest.approx(0.5, abs=0.01)


def test_channel_energy_normalization():
    geom = ArrayGeometry(4, 4)
    cfg = ChannelConfig(geom, n_subcarriers=8)
    rng = np.random.default_rng(2)
    energies = []
    for _ in range(10_000 // 10):
        ch = sample_channel(cfg, rng)
        energies.append(np.mean(np.sum(np.abs(ch.freq) ** 2, axis=1)))
    assert np.mean(energies) == pytest.approx(geom.n_elements, rel=0.05)


def test_channel_config_validation_and_taps():
    geom = ArrayGeometry(2, 2)
    assert ChannelConfig(geom, n_subcarriers=8).tap_count == 8
    assert ChannelConfig(geom, n_subcarriers=32).tap_count == 15
    assert ChannelConfig(geom, n_subcarriers=8, n_taps=3).tap_count == 3
    with pytest.raises(ConfigError):
        ChannelConfig(geom, n_paths_range=(5, 4))
    with pytest.raises(ConfigError):
        ChannelConfig(geom, rolloff=1.5)
    with pytest.raises(ConfigError):
        ChannelConfig(geom, n_subcarriers=4, n_taps=6)


def test_wrap_azimuth():
    np.testing.assert_allclose(wrap_azimuth([math.pi, 3 * math.pi / 2, -math.pi, 0.2]),
                               [-math.pi, -math.pi / 2, -math.pi, 0.2])


def test_sampling_is_reproducible():
    cfg = ChannelConfig(ArrayGeometry(4, 4))
    a = sample_channel(cfg, np.random.default_rng(9))
    b = sample_channel(cfg, np.random.default_rng(9))
    assert np.array_equal(a.freq, b.freq)
