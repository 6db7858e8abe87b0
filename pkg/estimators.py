#!/usr/bin/env python3
"""
LMMSE channel estimation under a mismatched covariance, and LMMSE MIMO
detection with Monte Carlo SER and SNR-for-target-SER calibration.

Received SNR convention: channels are normalized to mean column energy N_bs,
streams are unit-energy QPSK and the noise variance per receive antenna is
N_ue/ρ, so the per-antenna received SNR is ρ.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union
import numpy as np
from scipy import linalg
from config import Config, logger
from errors import InvalidArgumentError, NoSolutionError, NumericalFailureError
from channel_models import ChannelDraw, CovarianceModel, normalize_channel

ChannelSampler = Callable[[np.random.Generator], ChannelDraw]


# ─────────────────────────────────────────────
# CHANNEL ESTIMATION
# ─────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class LmmseFilter:
    """W = C̃(C̃ + σ²I)⁻¹ for the pilot model y = h + n."""

    weights: np.ndarray
    covariance: CovarianceModel
    sigma2: float


def _as_matrix(c: Union[CovarianceModel, np.ndarray]) -> np.ndarray:
    return c.matrix if isinstance(c, CovarianceModel) else np.atleast_2d(np.asarray(c, dtype=complex))


def lmmse_weights(covariance: Union[CovarianceModel, np.ndarray], sigma2: float) -> LmmseFilter:
    if not sigma2 > 0:
        raise InvalidArgumentError(f"noise power must be > 0, got {sigma2}")
    model = covariance if isinstance(covariance, CovarianceModel) else CovarianceModel(_as_matrix(covariance))
    c = model.matrix
    try:
        # (C + σ²I)⁻¹C is the Hermitian transpose of W
        wh = linalg.solve(c + sigma2 * np.eye(c.shape[0]), c, assume_a='pos')
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"LMMSE solve failed: {e}") from e
    return LmmseFilter(weights=wh.conj().T, covariance=model, sigma2=float(sigma2))


def lmmse_mse(weights: Union[LmmseFilter, np.ndarray], c_true: Union[CovarianceModel, np.ndarray],
              sigma2: float) -> float:
    """trace((I−W)C(I−W)ᴴ) + σ²·‖W‖_F²."""
    w = weights.weights if isinstance(weights, LmmseFilter) else np.atleast_2d(np.asarray(weights, dtype=complex))
    c = _as_matrix(c_true)
    if w.shape != c.shape:
        raise InvalidArgumentError(f"filter {w.shape} and covariance {c.shape} differ in size")
    e = np.eye(c.shape[0]) - w
    return float(np.real(np.sum((e @ c) * e.conj())) + sigma2 * np.sum(np.abs(w) ** 2))


def chest_mismatch_metric(c_true: Union[CovarianceModel, np.ndarray], sigma2: float) -> float:
    """10·log10((MSE(W_I) − MSE(W_C)) / MSE(W_C)) with the −60 dB floor."""
    c = _as_matrix(c_true)
    matched = lmmse_mse(lmmse_weights(c, sigma2), c, sigma2)
    identity = lmmse_mse(lmmse_weights(CovarianceModel.identity(c.shape[0]), sigma2), c, sigma2)
    if not matched > 0:
        raise NumericalFailureError("matched LMMSE error is not positive")
    loss = (identity - matched) / matched
    if loss <= 10 ** (Config.MISMATCH_FLOOR_DB / 10):
        return Config.MISMATCH_FLOOR_DB
    return float(10 * np.log10(loss))


# ─────────────────────────────────────────────
# QPSK / DETECTION
# ─────────────────────────────────────────────

# Gray mapping: bit 0 flips the real sign, bit 1 the imaginary sign.
QPSK_POINTS = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2)


def qpsk_modulate(indices: np.ndarray) -> np.ndarray:
    return QPSK_POINTS[indices]


def qpsk_decide(soft: np.ndarray) -> np.ndarray:
    """Nearest-point decision as constellation indices."""
    return (soft.real < 0).astype(np.int64) + 2 * (soft.imag < 0).astype(np.int64)


def _gram(h: np.ndarray, rho: float) -> np.ndarray:
    if not rho > 0:
        raise InvalidArgumentError(f"SNR must be > 0, got {rho}")
    n_ue = h.shape[1]
    return h.conj().T @ h + (n_ue / rho) * np.eye(n_ue)


def lmmse_equalize(h: np.ndarray, y: np.ndarray, rho: float) -> np.ndarray:
    """(HᴴH + (N_ue/ρ)I)⁻¹Hᴴy; y may hold one received vector per column."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    try:
        return linalg.solve(_gram(h, rho), h.conj().T @ y, assume_a='pos')
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"LMMSE detection solve failed: {e}") from e


def lmmse_detect(h: np.ndarray, y: np.ndarray, rho: float) -> np.ndarray:
    """Hard QPSK symbol estimates."""
    return QPSK_POINTS[qpsk_decide(lmmse_equalize(h, y, rho))]


def post_detection_sinr_db(h: np.ndarray, rho: float) -> np.ndarray:
    """Per-stream LMMSE output SINR: 1/(σ²·[(HᴴH + σ²I)⁻¹]_uu) − 1 with σ² = N_ue/ρ."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    sigma2 = h.shape[1] / rho
    try:
        inv = linalg.solve(_gram(h, rho), np.eye(h.shape[1]), assume_a='pos')
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"SINR solve failed: {e}") from e
    sinr = 1.0 / (sigma2 * np.real(np.diag(inv))) - 1.0
    return 10 * np.log10(np.maximum(sinr, np.finfo(float).tiny))


# ─────────────────────────────────────────────
# MONTE CARLO SER
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class SerCurvePoint:
    snr_db: float
    ser: float
    n_symbols: int
    std_error: float

    def __post_init__(self):
        if not 0 <= self.ser <= 1 or self.n_symbols < 1:
            raise InvalidArgumentError(f"invalid SER point (ser={self.ser}, n={self.n_symbols})")


def _count_errors(sampler: ChannelSampler, rho: float, n_symbols: int, symbols_per_draw: int,
                  rng: np.random.Generator) -> Tuple[int, int]:
    errors = sent = 0
    while sent < n_symbols:
        h = normalize_channel(sampler(rng)).h
        n_bs, n_ue = h.shape
        vectors = max(1, math.ceil(min(symbols_per_draw, n_symbols - sent) / n_ue))
        idx = rng.integers(0, 4, size=(n_ue, vectors))
        noise = rng.standard_normal((2, n_bs, vectors))
        y = h @ QPSK_POINTS[idx] + (noise[0] + 1j * noise[1]) * np.sqrt(n_ue / (2 * rho))
        errors += int(np.count_nonzero(qpsk_decide(lmmse_equalize(h, y, rho)) != idx))
        sent += idx.size
    return errors, sent


def simulate_ser(sampler: ChannelSampler, snr_db: float, n_symbols: int, rng: np.random.Generator,
                 symbols_per_draw: int = Config.SYMBOLS_PER_DRAW, n_shards: int = 1,
                 threads: Optional[int] = None) -> SerCurvePoint:
    """SER at received SNR ρ. Shards use child generators spawned from rng; counts are summed."""
    if n_symbols < 1 or n_shards < 1 or symbols_per_draw < 1:
        raise InvalidArgumentError("n_symbols, n_shards and symbols_per_draw must be >= 1")
    rho = 10 ** (snr_db / 10)
    budgets = [n_symbols // n_shards + (1 if s < n_symbols % n_shards else 0) for s in range(n_shards)]
    children = rng.spawn(n_shards)
    tasks = [(b, child) for b, child in zip(budgets, children) if b > 0]
    if len(tasks) == 1:
        results = [_count_errors(sampler, rho, tasks[0][0], symbols_per_draw, tasks[0][1])]
    else:
        with ThreadPoolExecutor(max_workers=threads or min(len(tasks), Config.THREADS)) as pool:
            results = list(pool.map(lambda t: _count_errors(sampler, rho, t[0], symbols_per_draw, t[1]), tasks))
    errors = sum(e for e, _ in results)
    sent = sum(n for _, n in results)
    ser = errors / sent
    return SerCurvePoint(snr_db=float(snr_db), ser=ser, n_symbols=sent,
                         std_error=math.sqrt(ser * (1 - ser) / sent))


def snr_for_target_ser(sampler: ChannelSampler, target_ser: float, rng: np.random.Generator,
                       tol_db: float = Config.TOL_DB, symbols_per_draw: int = Config.SYMBOLS_PER_DRAW,
                       n_shards: int = 1, threads: Optional[int] = None) -> float:
    """
    Received SNR (dB) at which SER crosses target_ser.

    Doubling search from SNR_SEARCH_START_DB finds a bracket inside
    [SNR_SEARCH_MIN_DB, SNR_SEARCH_MAX_DB], then bisection narrows it to
    tol_db. Each probe starts at 100/target symbols and doubles until the
    95% binomial interval around the target excludes the estimate, up to
    16× that budget; an undecided probe is classified by its point estimate.
    """
    if not 0 < target_ser < 0.75:
        raise InvalidArgumentError(f"target SER must lie in (0, 0.75) for QPSK, got {target_ser}")
    if not tol_db > 0:
        raise InvalidArgumentError(f"tol_db must be > 0, got {tol_db}")
    n_min = math.ceil(Config.MIN_SYMBOLS_PER_TARGET / target_ser)
    n_max = n_min * Config.MAX_SYMBOLS_MULTIPLIER

    def ser_above_target(snr_db: float) -> bool:
        probe_rng = rng.spawn(1)[0]
        n = n_min
        while True:
            point = simulate_ser(sampler, snr_db, n, probe_rng, symbols_per_draw, n_shards, threads)
            half_width = 1.96 * math.sqrt(target_ser * (1 - target_ser) / point.n_symbols)
            if abs(point.ser - target_ser) > half_width or 2 * n > n_max:
                logger.debug(f"probe {snr_db:+.3f} dB: SER={point.ser:.3e} over {point.n_symbols} symbols")
                return point.ser > target_ser
            n *= 2

    lo_db = Config.SNR_SEARCH_START_DB
    above = ser_above_target(lo_db)
    direction = 1.0 if above else -1.0
    step = Config.SNR_SEARCH_STEP_DB
    while True:
        nxt = float(np.clip(lo_db + direction * step, Config.SNR_SEARCH_MIN_DB, Config.SNR_SEARCH_MAX_DB))
        if nxt == lo_db:
            raise NoSolutionError(
                f"SER {target_ser:g} not bracketed in [{Config.SNR_SEARCH_MIN_DB:g}, {Config.SNR_SEARCH_MAX_DB:g}] dB")
        if ser_above_target(nxt) != above:
            break
        lo_db = nxt
        step *= 2
    lo_db, hi_db = (lo_db, nxt) if above else (nxt, lo_db)

    while hi_db - lo_db > tol_db:
        mid = 0.5 * (lo_db + hi_db)
        if ser_above_target(mid):
            lo_db = mid
        else:
            hi_db = mid
    return 0.5 * (lo_db + hi_db)


def snr_mismatch(nf_sampler: ChannelSampler, ff_sampler: ChannelSampler, target_ser: float,
                 rng: np.random.Generator, tol_db: float = Config.TOL_DB, **kwargs) -> float:
    """Required-SNR gap NF − FF in dB; each side runs on its own substream."""
    rng_nf, rng_ff = rng.spawn(2)
    return (snr_for_target_ser(nf_sampler, target_ser, rng_nf, tol_db, **kwargs)
            - snr_for_target_ser(ff_sampler, target_ser, rng_ff, tol_db, **kwargs))


def ser_gap_db(ser_nf: float, ser_ff: float) -> float:
    floor = Config.MISMATCH_FLOOR_DB
    if ser_nf == 0 and ser_ff == 0:
        return 0.0
    if ser_ff == 0:
        return -floor
    if ser_nf == 0:
        return floor
    return float(np.clip(10 * np.log10(ser_nf / ser_ff), floor, -floor))


def ser_mismatch_at_snr(nf_sampler: ChannelSampler, ff_sampler: ChannelSampler, snr_db: float,
                        n_symbols: int, rng: np.random.Generator, **kwargs) -> Tuple[float, float, float]:
    """(SER_NF, SER_FF, 10·log10(SER_NF/SER_FF)) at a common received SNR."""
    rng_nf, rng_ff = rng.spawn(2)
    nf = simulate_ser(nf_sampler, snr_db, n_symbols, rng_nf, **kwargs)
    ff = simulate_ser(ff_sampler, snr_db, n_symbols, rng_ff, **kwargs)
    return nf.ser, ff.ser, ser_gap_db(nf.ser, ff.ser)
