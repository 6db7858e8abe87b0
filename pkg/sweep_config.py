#!/usr/bin/env python3
"""
Scenario configuration: strict JSON → nested frozen dataclasses, then an
ordered list of validation checks. Every check returns (ok, reason); the
first failure aborts with a ConfigError naming the offending key.
"""

import hashlib
import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from typing import Callable, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints
import numpy as np
from config import Config, logger
from errors import ConfigError, InvalidArgumentError
from array_geometry import ArrayGeometry, NoiseSpec, OfdmGrid, build_ula, fraunhofer_distance

KINDS = ('mme-map', 'chest-map', 'ser-map', 'metrics-report')
MAP_KINDS = ('mme-map', 'chest-map', 'ser-map')


# ─────────────────────────────────────────────
# SCHEMA
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class ArrayConfig:
    n_antennas: int
    carrier_hz: float
    spacing_wavelengths: Tuple[float, ...] = (0.5,)


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int = 1
    bandwidth_hz: float = 0.0


@dataclass(frozen=True)
class PowerConfig:
    tx_power_dbm: float
    noise_psd_dbm_per_hz: float
    noise_figure_db: float = 0.0


@dataclass(frozen=True)
class AxisSpec:
    min_m: float
    max_m: float
    count: int
    scale: str = 'linear'

    def values(self) -> np.ndarray:
        if self.scale == 'log':
            return np.geomspace(self.min_m, self.max_m, self.count)
        return np.linspace(self.min_m, self.max_m, self.count)


@dataclass(frozen=True)
class SweepGrid:
    """Cells in row-major order: one row per y value, x varying fastest."""

    x: AxisSpec
    y: AxisSpec

    @property
    def n_cells(self) -> int:
        return self.x.count * self.y.count

    def cells(self) -> List[Tuple[float, float]]:
        xs, ys = self.x.values(), self.y.values()
        return [(float(x), float(y)) for y in ys for x in xs]


@dataclass(frozen=True)
class UeConfig:
    n_rows: int = 4
    n_cols: int = 4
    spacing_m: float = 1.0 / 3.0


@dataclass(frozen=True)
class BlockageConfig:
    d_corr_m: float = Config.DEFAULT_D_CORR_M


@dataclass(frozen=True)
class SerConfig:
    target_ser: float = Config.TARGET_SER
    tol_db: float = Config.TOL_DB
    symbols_per_draw: int = Config.SYMBOLS_PER_DRAW
    n_shards: int = 1


@dataclass(frozen=True)
class SolverConfig:
    n_theta: Optional[int] = None
    n_tau: int = Config.INIT_N_TAU


@dataclass(frozen=True)
class ChestConfig:
    pilot_snr_db: float = 10.0
    pilot_reference_distance_m: Optional[float] = None


@dataclass(frozen=True)
class ProbeConfig:
    range_fraunhofer: float
    aoa_deg: float = 0.0


@dataclass(frozen=True)
class MetricsConfig:
    probes: Tuple[ProbeConfig, ...]
    snr_db: float = 10.0
    n_mc: int = 2000
    n_symbols: int = 100000
    tau_rel: float = Config.DOF_REL_THRESHOLD


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    seed: int
    array: ArrayConfig
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    power: Optional[PowerConfig] = None
    grid: Optional[SweepGrid] = None
    ue: UeConfig = field(default_factory=UeConfig)
    blockage: BlockageConfig = field(default_factory=BlockageConfig)
    ser: SerConfig = field(default_factory=SerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    chest: ChestConfig = field(default_factory=ChestConfig)
    metrics: Optional[MetricsConfig] = None
    truth_sns: bool = True
    max_failed_fraction: float = Config.MAX_FAILED_FRACTION

    # ── derived physics ──

    @property
    def variants(self) -> Tuple[float, ...]:
        return self.array.spacing_wavelengths

    def geometry(self, variant: int = 0) -> ArrayGeometry:
        wavelength = Config.SPEED_OF_LIGHT / self.array.carrier_hz
        return build_ula(self.array.n_antennas, self.variants[variant] * wavelength, self.array.carrier_hz)

    def ofdm_grid(self) -> OfdmGrid:
        return OfdmGrid(self.ofdm.n_subcarriers, self.array.carrier_hz, self.ofdm.bandwidth_hz)

    def noise_power_w(self) -> float:
        return NoiseSpec(self.power.noise_psd_dbm_per_hz, self.power.noise_figure_db).noise_power_w(self.ofdm_grid())

    def subcarrier_gain(self) -> float:
        """sqrt(P/K) with P in watts."""
        p_w = 10 ** (self.power.tx_power_dbm / 10) * 1e-3
        return math.sqrt(p_w / self.ofdm.n_subcarriers)

    def fraunhofer_m(self, variant: int = 0) -> float:
        geom = self.geometry(variant)
        return fraunhofer_distance(geom, geom.wavelength)

    # ── identity ──

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def with_seed(self, seed: int) -> 'ScenarioConfig':
        return replace(self, seed=seed)


# ─────────────────────────────────────────────
# STRICT LOADING
# ─────────────────────────────────────────────

def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _unwrap_optional(hint):
    if get_origin(hint) is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        return args[0], True
    return hint, False


def _convert(value, hint, key: str):
    hint, optional = _unwrap_optional(hint)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"'{key}' must not be null", key)
    if hasattr(hint, '__dataclass_fields__'):
        return _build(hint, value, key)
    if get_origin(hint) is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"'{key}' must be a list", key)
        item = get_args(hint)[0]
        return tuple(_convert(v, item, f"{key}[{i}]") for i, v in enumerate(value))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"'{key}' must be true or false", key)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{key}' must be an integer", key)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"'{key}' must be a finite number", key)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string", key)
        return value
    raise ConfigError(f"unsupported config type at '{key}'", key)


def _build(cls, data, path: str = ''):
    if not isinstance(data, dict):
        raise ConfigError(f"'{path or 'config'}' must be an object", path or None)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key '{_join(path, key)}'", _join(path, key))
    hints = get_type_hints(cls)
    kwargs = {}
    for name, f in known.items():
        key = _join(path, name)
        if name not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(f"missing config key '{key}'", key)
            continue
        kwargs[name] = _convert(data[name], hints[name], key)
    return cls(**kwargs)


def parse_config(data: dict) -> ScenarioConfig:
    cfg = _build(ScenarioConfig, data)
    ConfigValidator(cfg).validate()
    return cfg


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config '{path}' is not valid JSON: {e}") from e
    cfg = parse_config(data)
    logger.info(f"Loaded {cfg.kind} config from {path} (hash {cfg.config_hash()[:12]})")
    return cfg


# ─────────────────────────────────────────────
# VALIDATION
# ─────────────────────────────────────────────

Check = Callable[[ScenarioConfig], Tuple[bool, str]]


class ConfigValidator:
    """Runs every scenario check in order; the first failure is fatal."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def validate(self) -> Tuple[bool, str]:
        checks: List[Tuple[str, Check]] = [
            ('kind', self._check_kind),
            ('seed', self._check_seed),
            ('array', self._check_array),
            ('ofdm', self._check_ofdm),
            ('power', self._check_power),
            ('grid', self._check_grid),
            ('ue', self._check_ue),
            ('blockage.d_corr_m', self._check_blockage),
            ('ser', self._check_ser),
            ('solver', self._check_solver),
            ('chest.pilot_reference_distance_m', self._check_chest),
            ('metrics', self._check_metrics),
            ('max_failed_fraction', self._check_failure_budget),
        ]
        for key, check in checks:
            ok, reason = check(self.cfg)
            if not ok:
                logger.error(f"CONFIG REJECTED [{key}]: {reason}")
                raise ConfigError(f"{key}: {reason}", key)
        return True, "All checks passed"

    def _check_kind(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if cfg.kind not in KINDS:
            return False, f"unknown scenario kind '{cfg.kind}' (expected one of {', '.join(KINDS)})"
        return True, "OK"

    def _check_seed(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if not 0 <= cfg.seed < 2 ** 64:
            return False, f"seed must be an unsigned 64-bit integer, got {cfg.seed}"
        return True, "OK"

    def _check_array(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        a = cfg.array
        if a.n_antennas < 1:
            return False, f"n_antennas must be >= 1, got {a.n_antennas}"
        if not a.carrier_hz > 0:
            return False, f"carrier_hz must be > 0, got {a.carrier_hz}"
        if not a.spacing_wavelengths or any(s <= 0 for s in a.spacing_wavelengths):
            return False, "spacing_wavelengths must be a non-empty list of positive values"
        return True, "OK"

    def _check_ofdm(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        try:
            cfg.ofdm_grid()
        except InvalidArgumentError as e:
            return False, str(e)
        if cfg.kind == 'mme-map' and not cfg.ofdm.bandwidth_hz > 0:
            return False, "mme-map needs bandwidth_hz > 0 (noise is integrated per subcarrier)"
        return True, "OK"

    def _check_power(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if cfg.kind == 'mme-map' and cfg.power is None:
            return False, "mme-map needs a power section"
        return True, "OK"

    def _check_grid(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if cfg.grid is None:
            if cfg.kind in MAP_KINDS:
                return False, f"{cfg.kind} needs a sweep grid"
            return True, "OK"
        for name, axis in (('x', cfg.grid.x), ('y', cfg.grid.y)):
            if axis.scale not in ('linear', 'log'):
                return False, f"{name}.scale must be 'linear' or 'log', got '{axis.scale}'"
            if not axis.min_m < axis.max_m:
                return False, f"{name}: min_m must be < max_m"
            if axis.count < 2:
                return False, f"{name}.count must be >= 2"
            if axis.scale == 'log' and not axis.min_m > 0:
                return False, f"{name}: log scale needs min_m > 0"
        if cfg.kind == 'mme-map' and not cfg.grid.x.min_m > 0:
            return False, "x.min_m must be > 0: the FF model only covers sources in front of the array"
        return True, "OK"

    def _check_ue(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        u = cfg.ue
        if u.n_rows < 1 or u.n_cols < 1:
            return False, "UE grid needs n_rows >= 1 and n_cols >= 1"
        if u.n_rows * u.n_cols > 1 and not u.spacing_m > 0:
            return False, "spacing_m must be > 0 for a multi-antenna UE"
        return True, "OK"

    def _check_blockage(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if not cfg.blockage.d_corr_m > 0:
            return False, f"must be > 0, got {cfg.blockage.d_corr_m}"
        return True, "OK"

    def _check_ser(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        s = cfg.ser
        if not 0 < s.target_ser < 0.75:
            return False, f"target_ser must lie in (0, 0.75), got {s.target_ser}"
        if not s.tol_db > 0:
            return False, "tol_db must be > 0"
        if s.symbols_per_draw < 1 or s.n_shards < 1:
            return False, "symbols_per_draw and n_shards must be >= 1"
        return True, "OK"

    def _check_solver(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if cfg.solver.n_tau < 2:
            return False, "n_tau must be >= 2"
        if cfg.solver.n_theta is not None and cfg.solver.n_theta < 3:
            return False, "n_theta must be >= 3"
        return True, "OK"

    def _check_chest(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        d = cfg.chest.pilot_reference_distance_m
        if d is not None and not d > 0:
            return False, f"must be > 0 when set, got {d}"
        return True, "OK"

    def _check_metrics(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        m = cfg.metrics
        if m is None:
            if cfg.kind == 'metrics-report':
                return False, "metrics-report needs a metrics section"
            return True, "OK"
        if not m.probes:
            return False, "probes must not be empty"
        for i, p in enumerate(m.probes):
            if not p.range_fraunhofer > 0:
                return False, f"probes[{i}].range_fraunhofer must be > 0"
            if not abs(p.aoa_deg) < 90:
                return False, f"probes[{i}].aoa_deg must lie in (-90, 90)"
        if m.n_mc < Config.MIN_KL_SAMPLES:
            return False, f"n_mc must be >= {Config.MIN_KL_SAMPLES} for the KL metrics"
        if m.n_symbols < 1 or not 0 < m.tau_rel < 1:
            return False, "n_symbols must be >= 1 and tau_rel must lie in (0, 1)"
        return True, "OK"

    def _check_failure_budget(self, cfg: ScenarioConfig) -> Tuple[bool, str]:
        if not 0 <= cfg.max_failed_fraction <= 1:
            return False, f"must lie in [0, 1], got {cfg.max_failed_fraction}"
        return True, "OK"
