"""Monte-Carlo experiment harness: NMSE sweeps and the grid-uniformity experiment.

Every trial is a pure function of ``(sweep.seed, trial_index)``.  The channel,
combiners and unit-variance antenna noise are drawn from independent child
streams, so one trial sees the same channel and noise shape at every SNR and
the same leading combiner frames at every pilot count.  All schemes of a trial
consume the identical whitened batch.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np

from . import dictionary as dct
from .array_channel import Path, realize_channel, sample_channel, sample_paths, wrap_azimuth
from .config import ExperimentConfig, require_seed
from .errors import DomainError
from .estimators import estimate
from .measurement import draw_noise, observe_with_noise, random_combiners, whiten_observations

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("sweep_value", "estimator", "dictionary", "mean_nmse", "median_nmse",
                 "trial_count", "seed")


def nmse(estimated, truth) -> float:
    """``||H_hat - H||_F^2 / ||H||_F^2`` for one realization."""
    estimated = np.asarray(estimated)
    truth = np.asarray(truth)
    if estimated.shape != truth.shape:
        raise DomainError(f"shape mismatch {estimated.shape} vs {truth.shape}")
    energy = float(np.sum(np.abs(truth) ** 2))
    if energy == 0:
        raise DomainError("true channel has zero energy")
    return float(np.sum(np.abs(estimated - truth) ** 2)) / energy


@dataclass(frozen=True)
class SchemeOutcome:
    dictionary: str
    estimator: str
    nmse: float
    data_digest: str


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    snr_db: float
    pilots: int
    channel_digest: str
    outcomes: tuple

    def nmse_of(self, dictionary: str, estimator: str) -> float:
        for o in self.outcomes:
            if (o.dictionary, o.estimator) == (dictionary, estimator):
                return o.nmse
        raise KeyError(f"{dictionary}+{estimator}")


@dataclass(frozen=True)
class SweepRow:
    sweep_value: float
    estimator: str
    dictionary: str
    mean_nmse: float
    median_nmse: float
    trial_count: int
    seed: int


@dataclass
class SweepResult:
    rows: list
    records: list = field(default_factory=list, repr=False)

    def row(self, sweep_value, dictionary: str, estimator: str) -> SweepRow:
        for r in self.rows:
            if (r.sweep_value, r.dictionary, r.estimator) == (sweep_value, dictionary, estimator):
                return r
        raise KeyError((sweep_value, dictionary, estimator))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(r.sweep_value), r.estimator, r.dictionary, _fmt(r.mean_nmse),
                             _fmt(r.median_nmse), r.trial_count, r.seed])
        return buf.getvalue()


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


@lru_cache(maxsize=16)
def _dictionary(method, G_v, G_h, xi, geometry):
    return dct.build_dictionary(dct.make_grid(method, G_v, G_h, xi), geometry)


def config_dictionary(config: ExperimentConfig, method: str) -> dct.Dictionary:
    d = config.dictionary
    return _dictionary(method.upper(), d.G_v, d.G_h, d.xi, config.geometry)


def _trial_streams(seed: int, trial_index: int):
    ss = np.random.SeedSequence([seed, trial_index])
    return [np.random.default_rng(child) for child in ss.spawn(4)]


def _noise_var(config: ExperimentConfig, snr_db: float) -> float:
    return config.measurement.tx_power / 10.0 ** (snr_db / 10.0)


def simulate_trial(config: ExperimentConfig, trial_index: int, snr_db: float, pilots: int):
    """Channel, combiners and whitened batch of one trial.

    Returns ``(channel, combiners, batch, raw)``.
    """
    seed = require_seed(config)
    ch_rng, comb_rng, noise_rng, _ = _trial_streams(seed, trial_index)
    chan_cfg = config.channel_config
    if config.channel.on_grid:
        channel = _on_grid_channel(config, ch_rng)
    else:
        channel = sample_channel(chan_cfg, ch_rng)
    H = channel.matrix
    n_a, K = H.shape
    combiners = random_combiners(pilots, config.measurement.rf_chains, n_a,
                                 config.measurement.tx_power, comb_rng)
    noise_var = _noise_var(config, snr_db)
    noise = draw_noise(pilots, n_a, K, noise_rng)
    raw = observe_with_noise(H, combiners, noise, math.sqrt(noise_var))
    batch = whiten_observations(raw, combiners, noise_var)
    return channel, combiners, batch, raw


def _on_grid_channel(config: ExperimentConfig, rng):
    """Paths placed exactly on directions of the configured grid (planted model)."""
    chan_cfg = config.channel_config
    grid = config_dictionary(config, config.channel.on_grid).grid
    drawn = sample_paths(chan_cfg, rng)
    idx = rng.choice(len(grid), size=len(drawn), replace=False)
    paths = [Path(p.gain, p.delay, float(grid.zenith[i]), float(wrap_azimuth(grid.azimuth[i])))
             for p, i in zip(drawn, idx)]
    return realize_channel(paths, chan_cfg.geometry, chan_cfg.n_subcarriers, chan_cfg.tap_count,
                           chan_cfg.sampling_period, chan_cfg.rolloff)


def _with_context(exc: Exception, context: str) -> Exception:
    """Same exception type and attributes, message prefixed with ``context``."""
    out = copy.copy(exc)
    out.args = (f"{context}: {exc}",) + tuple(exc.args[1:])
    return out


def run_trial(config: ExperimentConfig, trial_index: int, snr_db: float | None = None,
              pilots: int | None = None) -> TrialRecord:
    """Run every configured scheme on one shared realization."""
    snr_db = config.sweep.fixed_snr_db if snr_db is None else float(snr_db)
    pilots = config.measurement.pilots if pilots is None else int(pilots)
    if pilots < 1:
        raise DomainError("pilot count must be positive")
    seed = require_seed(config)
    try:
        channel, _, batch, raw = simulate_trial(config, trial_index, snr_db, pilots)
    except Exception as exc:
        raise _with_context(exc, f"trial {trial_index} (snr={snr_db} dB, M={pilots})") from exc
    H = channel.matrix
    est = config.estimator
    noise_var = max(batch.noise_var, est.noise_floor)
    outcomes = []
    for j, (method, kind) in enumerate(config.schemes):
        digest = _digest(H, batch.observations, batch.sensing)
        rng = np.random.default_rng([seed, trial_index, 1, j])
        try:
            result = estimate(kind, batch.observations, batch.sensing,
                              config_dictionary(config, method), noise_var, rng,
                              V=est.V, max_support=est.max_support, prior_var=est.prior_var,
                              score_on=est.score_on, omp_mode=est.omp_mode)
        except Exception as exc:
            raise _with_context(exc, f"trial {trial_index} scheme {method}+{kind}") from exc
        outcomes.append(SchemeOutcome(method, kind, nmse(result.channel, H), digest))
    return TrialRecord(trial_index, snr_db, pilots, _digest(H, raw), tuple(outcomes))


def _trial_worker(config, points, trial_index):
    return [run_trial(config, trial_index, snr, m) for snr, m in points]


def _run_points(config: ExperimentConfig, points, sweep_values):
    seed = require_seed(config)
    trials = range(config.sweep.trials)
    worker = partial(_trial_worker, config, points)
    if config.sweep.workers > 1:
        with ProcessPoolExecutor(config.sweep.workers) as pool:
            per_trial = list(pool.map(worker, trials))
    else:
        per_trial = []
        for t in trials:
            per_trial.append(worker(t))
            if (t + 1) % max(1, config.sweep.trials // 10) == 0:
                log.info("finished %d/%d trials", t + 1, config.sweep.trials)

    rows, records = [], []
    for p, value in enumerate(sweep_values):
        point_records = [recs[p] for recs in per_trial]
        records.extend(point_records)
        for method, kind in config.schemes:
            vals = np.array([r.nmse_of(method, kind) for r in point_records])
            rows.append(SweepRow(float(value), kind, method, float(np.mean(vals)),
                                 float(np.median(vals)), len(vals), seed))
    return SweepResult(rows, records)


def sweep_snr(config: ExperimentConfig) -> SweepResult:
    """NMSE versus SNR at the configured pilot count."""
    snrs = [float(s) for s in config.sweep.snr_db]
    if not snrs:
        raise DomainError("SNR list is empty")
    m = config.measurement.pilots
    return _run_points(config, [(s, m) for s in snrs], snrs)


def sweep_pilots(config: ExperimentConfig) -> SweepResult:
    """NMSE versus the number of pilots at ``sweep.fixed_snr_db``."""
    pilots = [int(m) for m in config.sweep.pilots]
    if not pilots or min(pilots) < 1:
        raise DomainError("pilot counts must be positive")
    snr = config.sweep.fixed_snr_db
    return _run_points(config, [(snr, m) for m in pilots], pilots)


@dataclass
class CdfTable:
    """Empirical minimal-angle CDFs of the three grids on a common radius axis."""

    radii: np.ndarray
    empirical: dict
    theoretical: np.ndarray
    r0: float
    ks: dict
    samples: dict = field(repr=False, default_factory=dict)

    def to_csv(self) -> str:
        methods = list(self.empirical)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r"] + [f"F_{m}" for m in methods] + ["F_theoretical"])
        for i, r in enumerate(self.radii):
            writer.writerow([_fmt(r)] + [_fmt(self.empirical[m][i]) for m in methods]
                            + [_fmt(self.theoretical[i])])
        return buf.getvalue()


def dict_cdf_experiment(G_v: int, G_h: int, xi: float, n_samples: int, seed: int,
                        n_points: int = 201) -> CdfTable:
    """Minimal-angle statistics of SFG, USPD and USVD grids with ``G = G_v G_h``.

    The same hemisphere sample set is used for every grid.
    """
    G = G_v * G_h
    r0, cdf = dct.theoretical_cdf(G)
    samples, ks = {}, {}
    for method in dct.METHODS:
        grid = dct.make_grid(method, G_v, G_h, xi)
        s = dct.empirical_min_angle_cdf(grid, n_samples, np.random.default_rng(seed))
        samples[method] = s
        ks[method] = dct.ks_distance(s, G)
    r_max = max(r0, max(float(s[-1]) for s in samples.values()))
    radii = np.union1d(np.linspace(0.0, r_max, n_points), [r0])
    empirical = {m: np.searchsorted(s, radii, side="right") / s.size for m, s in samples.items()}
    return CdfTable(radii, empirical, cdf(radii), r0, ks, samples)
