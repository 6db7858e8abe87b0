#!/usr/bin/env python3
"""
Case-study sweeps: MME map, channel-estimation mismatch map, SER/SNR
mismatch map and the probe-point metrics report.

Cells are independent tasks on a thread pool. Each cell's RNG comes from
SeedSequence([seed, cell_index, variant]), so results depend only on the
config and seed, never on thread count or completion order. Numerical
failures inside a cell become flagged rows with value NaN.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple
import numpy as np
import pandas as pd
from config import Config, logger, cell_logger
from errors import (DegenerateGeometryError, NoSolutionError, NumericalFailureError,
                    RunLevelFailureError)
from array_geometry import build_ue_array, wideband_fraunhofer_distance
from wavefront_models import NfParams, FfParams, nf_response, ff_response, manifold_angle
from channel_models import (NfMixedChannelSampler, FfRayleighSampler, nf_covariance,
                            nf_los_channel, ff_los_channel, normalize_channel)
from bounds import InitGridSpec, evaluate_bound_report
from estimators import chest_mismatch_metric, snr_for_target_ser, ser_mismatch_at_snr
from mismatch_metrics import (MetricReport, capacity, capacity_samples, covariance_identity_deviation,
                              kl_from_samples, sinr_samples_db, spatial_dof)
from progress_reporter import ProgressReporter
from sweep_config import ScenarioConfig

FLAG_OK = 'ok'
FAILURE_FLAGS = {
    NumericalFailureError: 'numerical-failure',
    NoSolutionError: 'no-solution',
    DegenerateGeometryError: 'degenerate-geometry',
}

# Entropy word for run-level (not per-cell) substreams.
RUN_STREAM = 2 ** 32

CellFn = Callable[[int, Tuple[float, float], np.random.Generator], Tuple[float, Dict[str, float]]]


@dataclass
class SweepResult:
    kind: str
    frame: pd.DataFrame
    n_cells: int
    n_failed: int
    wall_time_s: float
    threads: int
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def failed_fraction(self) -> float:
        return self.n_failed / self.n_cells if self.n_cells else 0.0


def cell_rng(seed: int, index: int, variant: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, variant]))


def _flag_for(exc: Exception) -> Optional[str]:
    for kind, flag in FAILURE_FLAGS.items():
        if isinstance(exc, kind):
            return flag
    return None


def run_sweep(cfg: ScenarioConfig, label: str, evaluate: CellFn, extra_columns: List[str],
              variant: int, threads: Optional[int] = None,
              progress: Optional[ProgressReporter] = None) -> List[dict]:
    """Evaluate every grid cell of one variant; rows come back in row-major order."""
    cells = cfg.grid.cells()

    def task(index: int) -> dict:
        x, y = cells[index]
        row = {'x_m': x, 'y_m': y, 'value': np.nan, **{c: np.nan for c in extra_columns}}
        try:
            value, extras = evaluate(index, (x, y), cell_rng(cfg.seed, index, variant))
            row.update(extras)
            row['value'] = value
            row['flag'] = FLAG_OK
        except (NumericalFailureError, NoSolutionError, DegenerateGeometryError) as e:
            row['flag'] = _flag_for(e)
            logger.warning(f"[{label}] cell {index} ({x:.3f}, {y:.3f}) flagged {row['flag']}: {e}")
        cell_logger.info(f"{label} variant={variant} cell={index} x={x:.6g} y={y:.6g} "
                         f"value={row['value']:.6g} flag={row['flag']}")
        if progress:
            progress.notify_cell(row['flag'])
        return row

    workers = threads or Config.THREADS
    if workers <= 1:
        return [task(i) for i in range(len(cells))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(cells))))


def _finish(cfg: ScenarioConfig, kind: str, rows: List[dict], columns: List[str], started: float,
            threads: Optional[int], extras: Optional[Dict[str, float]] = None) -> SweepResult:
    frame = pd.DataFrame(rows, columns=['x_m', 'y_m', 'value'] + columns + ['flag'])
    n_failed = int((frame['flag'] != FLAG_OK).sum())
    result = SweepResult(kind=kind, frame=frame, n_cells=len(frame), n_failed=n_failed,
                         wall_time_s=time.monotonic() - started, threads=threads or Config.THREADS,
                         extras=extras or {})
    if result.failed_fraction > cfg.max_failed_fraction:
        logger.error(f"{kind}: {n_failed}/{result.n_cells} cells failed "
                     f"(budget {cfg.max_failed_fraction:.1%})")
        raise RunLevelFailureError(
            f"{n_failed} of {result.n_cells} cells failed, above the {cfg.max_failed_fraction:.1%} budget",
            result)
    return result


def _reporter(cfg: ScenarioConfig, label: str, progress: Optional[ProgressReporter]) -> ProgressReporter:
    return progress or ProgressReporter(label, cfg.grid.n_cells * len(cfg.variants), quiet=True)


# ─────────────────────────────────────────────
# CASE 1: LOCALIZATION MISMATCH
# ─────────────────────────────────────────────

MME_COLUMNS = ['spacing_wavelengths', 'peb_m', 'lb_mm_m', 'bias_m', 'theta_deg', 'tau_s', 'iterations', 'restarts']


def run_mme_map(cfg: ScenarioConfig, threads: Optional[int] = None,
                progress: Optional[ProgressReporter] = None) -> SweepResult:
    """MME (dB) of the FF-misspecified position bound against the NF PEB, per source position."""
    started = time.monotonic()
    grid = cfg.ofdm_grid()
    sigma2 = cfg.noise_power_w()
    gain = cfg.subcarrier_gain()
    reporter = _reporter(cfg, 'mme-map', progress)
    rows: List[dict] = []
    for v, spacing in enumerate(cfg.variants):
        geom = cfg.geometry(v)
        logger.info(f"mme-map variant {v}: N={geom.n_elements}, spacing={spacing}λ, "
                    f"σ²={sigma2:.3e} W, d_F={cfg.fraunhofer_m(v):.3f} m")

        def evaluate(index, cell, rng):
            params = NfParams(cell[0], cell[1], gain)
            d0 = float(np.linalg.norm(params.position - geom.centroid))
            spec = InitGridSpec.around_delay(geom, grid, d0 / Config.SPEED_OF_LIGHT,
                                             cfg.solver.n_theta, cfg.solver.n_tau)
            report = evaluate_bound_report(geom, grid, sigma2, params, spec, sns=cfg.truth_sns)
            pt = report.pseudo_true
            return report.mme_db, {
                'spacing_wavelengths': spacing, 'peb_m': report.peb, 'lb_mm_m': report.lb_mm,
                'bias_m': report.bias_m, 'theta_deg': float(np.degrees(pt.params.theta)),
                'tau_s': pt.params.tau, 'iterations': pt.iterations, 'restarts': pt.restarts,
            }

        batch = run_sweep(cfg, 'mme-map', evaluate, MME_COLUMNS, v, threads, reporter)
        for row in batch:
            row['spacing_wavelengths'] = spacing
        rows.extend(batch)
    return _finish(cfg, 'mme-map', rows, MME_COLUMNS, started, threads)


# ─────────────────────────────────────────────
# CASE 2: CHANNEL-ESTIMATION MISMATCH
# ─────────────────────────────────────────────

CHEST_COLUMNS = ['spacing_wavelengths', 'pilot_snr_db', 'frobenius_dev']


def pilot_snr_db(cfg: ScenarioConfig, range_m: float) -> float:
    """Configured pilot SNR, optionally decayed in free space from a reference distance."""
    ref = cfg.chest.pilot_reference_distance_m
    if ref is None:
        return cfg.chest.pilot_snr_db
    return cfg.chest.pilot_snr_db - 20 * np.log10(range_m / ref)


def run_chest_map(cfg: ScenarioConfig, threads: Optional[int] = None,
                  progress: Optional[ProgressReporter] = None) -> SweepResult:
    """LMMSE loss (dB) of the identity covariance against the geometric NF covariance."""
    started = time.monotonic()
    reporter = _reporter(cfg, 'chest-map', progress)
    rows: List[dict] = []
    for v, spacing in enumerate(cfg.variants):
        geom = cfg.geometry(v)

        def evaluate(index, cell, rng):
            ue = build_ue_array(cell, cfg.ue.n_rows, cfg.ue.n_cols, cfg.ue.spacing_m)
            cov = nf_covariance(geom, ue)
            snr_db = pilot_snr_db(cfg, float(np.hypot(*(np.asarray(cell) - geom.centroid))))
            sigma2 = (np.real(np.trace(cov.matrix)) / cov.n) / 10 ** (snr_db / 10)
            dev, _ = covariance_identity_deviation(cov.matrix)
            return chest_mismatch_metric(cov, sigma2), {
                'spacing_wavelengths': spacing, 'pilot_snr_db': snr_db, 'frobenius_dev': dev,
            }

        batch = run_sweep(cfg, 'chest-map', evaluate, CHEST_COLUMNS, v, threads, reporter)
        for row in batch:
            row['spacing_wavelengths'] = spacing
        rows.extend(batch)
    return _finish(cfg, 'chest-map', rows, CHEST_COLUMNS, started, threads)


# ─────────────────────────────────────────────
# CASE 3: RELIABILITY MISMATCH
# ─────────────────────────────────────────────

SER_COLUMNS = ['spacing_wavelengths', 'aperture_m', 'snr_nf_db', 'snr_ff_db', 'los_probability']


def ff_reference_snr_db(cfg: ScenarioConfig, n_bs: int, n_ue: int, variant: int) -> float:
    """Required SNR of the i.i.d. Rayleigh reference; position-independent, so computed once."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, RUN_STREAM, variant]))
    try:
        return snr_for_target_ser(FfRayleighSampler(n_bs, n_ue), cfg.ser.target_ser, rng, cfg.ser.tol_db,
                                  symbols_per_draw=cfg.ser.symbols_per_draw, n_shards=cfg.ser.n_shards)
    except (NoSolutionError, NumericalFailureError) as e:
        raise RunLevelFailureError(f"FF reference SNR failed: {e}") from e


def run_ser_map(cfg: ScenarioConfig, threads: Optional[int] = None,
                progress: Optional[ProgressReporter] = None) -> SweepResult:
    """Required received-SNR gap NF − FF (dB) at the target SER, per UE position and BS aperture."""
    started = time.monotonic()
    reporter = _reporter(cfg, 'ser-map', progress)
    n_ue = cfg.ue.n_rows * cfg.ue.n_cols
    rows: List[dict] = []
    extras: Dict[str, float] = {}
    for v, spacing in enumerate(cfg.variants):
        geom = cfg.geometry(v)
        aperture_m = spacing * geom.wavelength * (geom.n_elements - 1)
        snr_ff = ff_reference_snr_db(cfg, geom.n_elements, n_ue, v)
        extras[f'snr_ff_db[{v}]'] = snr_ff
        logger.info(f"ser-map variant {v}: aperture {aperture_m:.2f} m, FF reference {snr_ff:.2f} dB")

        def evaluate(index, cell, rng):
            ue = build_ue_array(cell, cfg.ue.n_rows, cfg.ue.n_cols, cfg.ue.spacing_m)
            sampler = NfMixedChannelSampler(geom, ue, cfg.blockage.d_corr_m)
            snr_nf = snr_for_target_ser(sampler, cfg.ser.target_ser, rng, cfg.ser.tol_db,
                                        symbols_per_draw=cfg.ser.symbols_per_draw,
                                        n_shards=cfg.ser.n_shards)
            return snr_nf - snr_ff, {
                'spacing_wavelengths': spacing, 'aperture_m': aperture_m, 'snr_nf_db': snr_nf,
                'snr_ff_db': snr_ff, 'los_probability': float(sampler.copula.probabilities.mean()),
            }

        batch = run_sweep(cfg, 'ser-map', evaluate, SER_COLUMNS, v, threads, reporter)
        for row in batch:
            row.update(spacing_wavelengths=spacing, aperture_m=aperture_m, snr_ff_db=snr_ff)
        rows.extend(batch)
    return _finish(cfg, 'ser-map', rows, SER_COLUMNS, started, threads, extras)


# ─────────────────────────────────────────────
# METRICS REPORT
# ─────────────────────────────────────────────

def _metric(name: str, value: float, units: str, fingerprint: str, clamped: bool = False) -> dict:
    value = float(value)
    return MetricReport(name, value, units, fingerprint, clamped or not np.isfinite(value)).to_dict()


def probe_metrics(cfg: ScenarioConfig, variant: int, probe_index: int) -> dict:
    """All intuition and ultimate metrics at one probe position."""
    probe = cfg.metrics.probes[probe_index]
    geom = cfg.geometry(variant)
    grid = cfg.ofdm_grid()
    fp = cfg.config_hash()[:16]
    d_f = cfg.fraunhofer_m(variant)
    theta = np.radians(probe.aoa_deg)
    r = probe.range_fraunhofer * d_f
    centre = geom.centroid + r * np.array([np.cos(theta), np.sin(theta)])
    ue = build_ue_array(centre, cfg.ue.n_rows, cfg.ue.n_cols, cfg.ue.spacing_m)
    rho = 10 ** (cfg.metrics.snr_db / 10)
    rng_sinr, rng_cap, rng_ser = cell_rng(cfg.seed, probe_index, variant).spawn(3)

    nf_mean = nf_response(geom, grid, NfParams(centre[0], centre[1]), sns=True)
    ff_mean = ff_response(geom, grid, FfParams(theta, r / Config.SPEED_OF_LIGHT))
    dev, cond = covariance_identity_deviation(nf_covariance(geom, ue).matrix)
    nf_los, ff_los = nf_los_channel(geom, ue), ff_los_channel(geom, ue)
    dof_nf = spatial_dof(nf_los.h, cfg.metrics.tau_rel)
    dof_ff = spatial_dof(ff_los.h, cfg.metrics.tau_rel)
    los_gap = capacity(normalize_channel(nf_los).h, rho) - capacity(normalize_channel(ff_los).h, rho)

    nf_sampler = NfMixedChannelSampler(geom, ue, cfg.blockage.d_corr_m)
    ff_sampler = FfRayleighSampler(geom.n_elements, len(ue))
    n_mc = cfg.metrics.n_mc
    sinr_nf, sinr_ff = (sinr_samples_db(s, rho, n_mc, g) for s, g in zip((nf_sampler, ff_sampler), rng_sinr.spawn(2)))
    cap_nf, cap_ff = (capacity_samples(s, rho, n_mc, g) for s, g in zip((nf_sampler, ff_sampler), rng_cap.spawn(2)))
    ser_nf, ser_ff, ser_gap = ser_mismatch_at_snr(nf_sampler, ff_sampler, cfg.metrics.snr_db,
                                                  cfg.metrics.n_symbols, rng_ser,
                                                  symbols_per_draw=cfg.ser.symbols_per_draw)
    metrics = [
        _metric('fraunhofer_distance', d_f, 'm', fp),
        _metric('wideband_fraunhofer_distance', wideband_fraunhofer_distance(geom, grid), 'm', fp),
        _metric('manifold_angle', manifold_angle(nf_mean, ff_mean), 'rad', fp),
        _metric('covariance_frobenius_deviation', dev, '', fp),
        _metric('covariance_condition_number', cond, '', fp, clamped=cond >= Config.CONDITION_CLAMP),
        _metric('dof_nf', dof_nf, 'streams', fp),
        _metric('dof_ff', dof_ff, 'streams', fp),
        _metric('dof_gap', dof_nf - dof_ff, 'streams', fp),
        _metric('los_capacity_gap', los_gap, 'bit/s/Hz', fp),
        _metric('ergodic_capacity_nf', cap_nf.mean(), 'bit/s/Hz', fp),
        _metric('ergodic_capacity_ff', cap_ff.mean(), 'bit/s/Hz', fp),
        _metric('ergodic_capacity_gap', cap_nf.mean() - cap_ff.mean(), 'bit/s/Hz', fp),
        _metric('kl_sinr_db', _kl_or_nan(sinr_nf, sinr_ff), 'nat', fp),
        _metric('kl_capacity', _kl_or_nan(cap_nf, cap_ff), 'nat', fp),
        _metric('ser_nf', ser_nf, '', fp),
        _metric('ser_ff', ser_ff, '', fp),
        _metric('ser_gap', ser_gap, 'dB', fp, clamped=abs(ser_gap) >= -Config.MISMATCH_FLOOR_DB),
    ]
    return {'variant': variant, 'spacing_wavelengths': cfg.variants[variant],
            'range_fraunhofer': probe.range_fraunhofer, 'aoa_deg': probe.aoa_deg,
            'x_m': float(centre[0]), 'y_m': float(centre[1]),
            'metrics': {m['name']: m for m in metrics}}


def _kl_or_nan(p: np.ndarray, q: np.ndarray) -> float:
    """KL of the moment-matched fits; deterministic sample sets (no spread) give NaN."""
    if min(np.var(p), np.var(q)) < Config.MIN_SAMPLE_VARIANCE:
        return float('nan')
    return kl_from_samples(p, q)


def run_metrics_report(cfg: ScenarioConfig, progress: Optional[ProgressReporter] = None) -> dict:
    started = time.monotonic()
    total = len(cfg.metrics.probes) * len(cfg.variants)
    reporter = progress or ProgressReporter('metrics', total, quiet=True)
    probes = []
    for v in range(len(cfg.variants)):
        for i in range(len(cfg.metrics.probes)):
            probes.append(probe_metrics(cfg, v, i))
            reporter.notify_cell(FLAG_OK)
    logger.info(f"metrics report: {total} probes in {time.monotonic() - started:.2f}s")
    return {'kind': cfg.kind, 'seed': cfg.seed, 'config_hash': cfg.config_hash(), 'probes': probes}


RUNNERS = {
    'mme-map': run_mme_map,
    'chest-map': run_chest_map,
    'ser-map': run_ser_map,
}
