#!/usr/bin/env python3
"""
Intuition and ultimate-performance mismatch metrics: Gaussian KL, deviation
of a covariance from identity, spatial DoF and ergodic capacity.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import numpy as np
from config import Config
from errors import InvalidArgumentError
from channel_models import normalize_channel
from estimators import ChannelSampler, post_detection_sinr_db


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    units: str
    fingerprint: str = ''
    clamped: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.value) or self.clamped):
            raise InvalidArgumentError(f"metric '{self.name}' is not finite and not flagged as clamped")

    def to_dict(self) -> dict:
        return {'name': self.name, 'value': self.value, 'units': self.units,
                'fingerprint': self.fingerprint, 'clamped': self.clamped}


def kl_gaussian(mu1: float, var1: float, mu2: float, var2: float) -> float:
    """KL(N(μ1, σ1²) ‖ N(μ2, σ2²)) in nats."""
    if not (var1 > 0 and var2 > 0):
        raise InvalidArgumentError(f"variances must be > 0, got {var1}, {var2}")
    return float(0.5 * np.log(var2 / var1) + (var1 + (mu1 - mu2) ** 2) / (2 * var2) - 0.5)


def kl_from_samples(samples_p: Sequence[float], samples_q: Sequence[float]) -> float:
    """Moment-matched Gaussian KL between two sample sets."""
    p = np.asarray(samples_p, dtype=float).ravel()
    q = np.asarray(samples_q, dtype=float).ravel()
    if min(p.size, q.size) < Config.MIN_KL_SAMPLES:
        raise InvalidArgumentError(f"need at least {Config.MIN_KL_SAMPLES} samples per set, got {p.size} and {q.size}")
    var_p, var_q = p.var(ddof=1), q.var(ddof=1)
    if min(var_p, var_q) < Config.MIN_SAMPLE_VARIANCE:
        raise InvalidArgumentError("sample variance is degenerate")
    return kl_gaussian(p.mean(), var_p, q.mean(), var_q)


def covariance_identity_deviation(c: np.ndarray) -> Tuple[float, float]:
    """(‖N·C/trace(C) − I‖_F, λ_max/λ_min) with the condition number clamped at 1e18."""
    c = np.atleast_2d(np.asarray(getattr(c, 'matrix', c), dtype=complex))
    trace = float(np.real(np.trace(c)))
    if trace == 0:
        raise InvalidArgumentError("covariance has zero trace")
    n = c.shape[0]
    dev = float(np.linalg.norm(n * c / trace - np.eye(n), 'fro'))
    eig = np.linalg.eigvalsh(0.5 * (c + c.conj().T))
    if eig.min() <= eig.max() / Config.CONDITION_CLAMP:
        return dev, Config.CONDITION_CLAMP
    return dev, float(eig.max() / eig.min())


def spatial_dof(h: np.ndarray, tau_rel: float = Config.DOF_REL_THRESHOLD) -> int:
    """Number of singular values ≥ τ_rel·σ_1."""
    if not 0 < tau_rel < 1:
        raise InvalidArgumentError(f"tau_rel must lie in (0, 1), got {tau_rel}")
    s = np.linalg.svd(np.atleast_2d(np.asarray(h, dtype=complex)), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s >= tau_rel * s[0]))


def capacity(h: np.ndarray, rho: float) -> float:
    """log2 det(I + (ρ/N_ue)·HᴴH)."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    n_ue = h.shape[1]
    _, logdet = np.linalg.slogdet(np.eye(n_ue) + (rho / n_ue) * (h.conj().T @ h))
    return float(logdet / np.log(2))


def capacity_samples(sampler: ChannelSampler, rho: float, n_mc: int, rng: np.random.Generator) -> np.ndarray:
    if not rho > 0 or n_mc < 1:
        raise InvalidArgumentError(f"need rho > 0 and n_mc >= 1, got {rho}, {n_mc}")
    return np.array([capacity(normalize_channel(sampler(rng)).h, rho) for _ in range(n_mc)])


def ergodic_capacity(sampler: ChannelSampler, rho: float, n_mc: int, rng: np.random.Generator) -> float:
    return float(capacity_samples(sampler, rho, n_mc, rng).mean())


def sinr_samples_db(sampler: ChannelSampler, rho: float, n_mc: int, rng: np.random.Generator,
                    stream: Optional[int] = 0) -> np.ndarray:
    """Per-draw post-LMMSE SINR (dB) of one stream, or of all streams when stream is None."""
    draws = [post_detection_sinr_db(normalize_channel(sampler(rng)).h, rho) for _ in range(n_mc)]
    stacked = np.array(draws)
    return stacked.ravel() if stream is None else stacked[:, stream]
