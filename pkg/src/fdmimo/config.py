"""Experiment configuration: typed sections, TOML loading and presets.

A config file is a TOML document with the sections ``[array]``,
``[channel]``, ``[measurement]``, ``[dictionary]``, ``[estimator]`` and
``[sweep]``.  Every field has a default except ``sweep.seed``.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .array_channel import DEFAULT_SAMPLING_PERIOD, ArrayGeometry, ChannelConfig
from .dictionary import METHODS
from .errors import ConfigError
from .estimators import ESTIMATORS


@dataclass(frozen=True)
class ArraySection:
    n_rows: int = 8
    n_cols: int = 8
    spacing_v: float = 0.5
    spacing_h: float = 0.5


@dataclass(frozen=True)
class ChannelSection:
    n_subcarriers: int = 8
    n_paths_min: int = 6
    n_paths_max: int = 12
    sampling_period: float = DEFAULT_SAMPLING_PERIOD
    rolloff: float = 1.0
    n_taps: Optional[int] = None
    zenith_min: float = 0.0
    zenith_max: float = math.pi / 2
    # grid method whose directions the paths are drawn from; "" = off-grid
    on_grid: str = ""


@dataclass(frozen=True)
class MeasurementSection:
    rf_chains: int = 4
    pilots: int = 6
    tx_power: float = 1.0


@dataclass(frozen=True)
class DictionarySection:
    G_v: int = 16
    G_h: int = 16
    xi: float = math.pi / 2


@dataclass(frozen=True)
class EstimatorSection:
    V: int = 20
    max_support: Optional[int] = None
    prior_var: Optional[float] = None
    score_on: str = "residual"
    omp_mode: str = "per_subcarrier"
    noise_floor: float = 1e-12


DEFAULT_SCHEMES = ("USPD+OMP", "USVD+OMP", "SFG+OMP",
                   "USPD+SWOMP", "USVD+SWOMP", "SFG+SWOMP", "SFG+BSOMP")


@dataclass(frozen=True)
class SweepSection:
    seed: Optional[int] = None
    trials: int = 200
    snr_db: tuple = (-5.0, 0.0, 5.0, 10.0, 15.0)
    pilots: tuple = (4, 6, 8, 10, 12)
    fixed_snr_db: float = 10.0
    schemes: tuple = DEFAULT_SCHEMES
    workers: int = 1
    cdf_samples: int = 10000


@dataclass(frozen=True)
class ExperimentConfig:
    array: ArraySection = field(default_factory=ArraySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    dictionary: DictionarySection = field(default_factory=DictionarySection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def __post_init__(self):
        validate(self)

    @property
    def geometry(self) -> ArrayGeometry:
        a = self.array
        return ArrayGeometry(a.n_rows, a.n_cols, a.spacing_v, a.spacing_h)

    @property
    def channel_config(self) -> ChannelConfig:
        c = self.channel
        return ChannelConfig(
            geometry=self.geometry,
            n_subcarriers=c.n_subcarriers,
            n_paths_range=(c.n_paths_min, c.n_paths_max),
            sampling_period=c.sampling_period,
            rolloff=c.rolloff,
            n_taps=c.n_taps,
            zenith_range=(c.zenith_min, c.zenith_max),
        )

    @property
    def schemes(self) -> list[tuple[str, str]]:
        return [parse_scheme(s) for s in self.sweep.schemes]

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section field overrides, e.g. ``replace(sweep={"trials": 5})``."""
        kwargs = {}
        for name, updates in sections.items():
            kwargs[name] = dataclasses.replace(getattr(self, name), **updates)
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            section = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out


_SECTIONS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def parse_scheme(text: str) -> tuple[str, str]:
    """Split ``"DICT+EST"`` into its validated upper-case parts."""
    parts = str(text).upper().split("+")
    if len(parts) != 2 or parts[0] not in METHODS or parts[1] not in ESTIMATORS:
        raise ConfigError(f"scheme {text!r} must look like 'SFG+BSOMP'", "sweep.schemes")
    return parts[0], parts[1]


def validate(cfg: ExperimentConfig) -> None:
    positive = {
        "array.n_rows": cfg.array.n_rows, "array.n_cols": cfg.array.n_cols,
        "channel.n_subcarriers": cfg.channel.n_subcarriers,
        "channel.n_paths_min": cfg.channel.n_paths_min,
        "measurement.rf_chains": cfg.measurement.rf_chains,
        "measurement.pilots": cfg.measurement.pilots,
        "dictionary.G_v": cfg.dictionary.G_v, "dictionary.G_h": cfg.dictionary.G_h,
        "estimator.V": cfg.estimator.V, "sweep.trials": cfg.sweep.trials,
        "sweep.workers": cfg.sweep.workers, "sweep.cdf_samples": cfg.sweep.cdf_samples,
    }
    for key, value in positive.items():
        if value < 1:
            raise ConfigError(f"must be positive, got {value}", key)
    for key in ("spacing_v", "spacing_h"):
        if getattr(cfg.array, key) <= 0:
            raise ConfigError("must be positive", f"array.{key}")
    if cfg.channel.n_paths_max < cfg.channel.n_paths_min:
        raise ConfigError("must be >= channel.n_paths_min", "channel.n_paths_max")
    if cfg.measurement.tx_power <= 0:
        raise ConfigError("must be positive", "measurement.tx_power")
    if cfg.measurement.rf_chains > cfg.array.n_rows * cfg.array.n_cols:
        raise ConfigError("cannot exceed the number of antennas", "measurement.rf_chains")
    if not cfg.sweep.snr_db:
        raise ConfigError("snr list is empty", "sweep.snr_db")
    if not cfg.sweep.pilots:
        raise ConfigError("pilot list is empty", "sweep.pilots")
    if any(int(m) != m or m < 1 for m in cfg.sweep.pilots):
        raise ConfigError("pilot counts must be positive integers", "sweep.pilots")
    if not cfg.sweep.schemes:
        raise ConfigError("no schemes configured", "sweep.schemes")
    for s in cfg.sweep.schemes:
        parse_scheme(s)
    if cfg.channel.on_grid and cfg.channel.on_grid.upper() not in METHODS:
        raise ConfigError(f"unknown grid method {cfg.channel.on_grid!r}", "channel.on_grid")
    if cfg.estimator.score_on not in ("residual", "observations"):
        raise ConfigError("must be 'residual' or 'observations'", "estimator.score_on")
    if cfg.estimator.omp_mode not in ("per_subcarrier", "joint"):
        raise ConfigError("must be 'per_subcarrier' or 'joint'", "estimator.omp_mode")
    if cfg.estimator.noise_floor <= 0:
        raise ConfigError("must be positive", "estimator.noise_floor")
    if cfg.sweep.seed is not None and (int(cfg.sweep.seed) != cfg.sweep.seed or cfg.sweep.seed < 0):
        raise ConfigError("must be a nonnegative integer", "sweep.seed")
    try:
        cfg.channel_config
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.key) from None


def _coerce(value: Any, tp: Any, key: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        if value is None:
            return None
        inner = [t for t in typing.get_args(tp) if t is not type(None)][0]
        return _coerce(value, inner, key)
    if tp is bool or isinstance(value, bool):
        raise ConfigError(f"unexpected boolean {value!r}", key)
    if tp is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if tp is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", key)
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float, str)):
                raise ConfigError(f"unsupported list entry {item!r}", f"{key}[{i}]")
        return tuple(value)
    raise TypeError(tp)


def from_mapping(data: Mapping, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay a nested mapping onto ``base`` (defaults when omitted)."""
    base = base or ExperimentConfig()
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a table")
    sections = {}
    for name, section in data.items():
        if name not in _SECTIONS:
            raise ConfigError("unknown section", name)
        if not isinstance(section, Mapping):
            raise ConfigError("section must be a table", name)
        cls = type(getattr(base, name))
        hints = typing.get_type_hints(cls)
        updates = {}
        for key, value in section.items():
            if key not in hints:
                raise ConfigError("unknown key", f"{name}.{key}")
            updates[key] = _coerce(value, hints[key], f"{name}.{key}")
        sections[name] = dataclasses.replace(getattr(base, name), **updates)
    return dataclasses.replace(base, **sections)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML: {exc}", "<file>") from None
    return from_mapping(data, base)


def preset(name: str) -> ExperimentConfig:
    """``desk``: 8x8 array, K=8, L=4, G=256.  ``paper``: 16x16 array, K=24, L=8, M=10, G=1024."""
    if name == "desk":
        return ExperimentConfig()
    if name == "paper":
        return from_mapping({
            "array": {"n_rows": 16, "n_cols": 16},
            "channel": {"n_subcarriers": 24},
            "measurement": {"rf_chains": 8, "pilots": 10},
            "dictionary": {"G_v": 32, "G_h": 32},
            "sweep": {"pilots": [4, 6, 8, 10, 12, 14]},
        })
    raise ConfigError(f"unknown preset {name!r}", "--preset")


def require_seed(cfg: ExperimentConfig) -> int:
    if cfg.sweep.seed is None:
        raise ConfigError("a seed is required (config or --seed)", "sweep.seed")
    return int(cfg.sweep.seed)
