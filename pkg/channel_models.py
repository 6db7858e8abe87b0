#!/usr/bin/env python3
"""
Stochastic MIMO channels: NF mixed LoS/NLoS with spatially correlated
Bernoulli blockage, FF i.i.d. Rayleigh, deterministic LoS channels and the
geometric NF covariance.

Samplers are callables `sampler(rng) -> ChannelDraw`. They hold no RNG of
their own; parallel callers hand each one an independent substream.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union
import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.stats import norm
from config import Config, logger
from errors import InvalidArgumentError, NumericalFailureError
from array_geometry import ArrayGeometry, OfdmGrid, Point
from wavefront_models import NfParams, nf_response, ff_unit_response


# ─────────────────────────────────────────────
# TYPES
# ─────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class BlockageField:
    """Per-BS-antenna LoS indicators with their marginal probabilities."""

    los: np.ndarray
    probabilities: np.ndarray
    d_corr_m: float

    def __post_init__(self):
        if self.los.shape != self.probabilities.shape:
            raise InvalidArgumentError("blockage indicators and probabilities differ in length")
        if np.any(self.probabilities < 0) or np.any(self.probabilities > 1):
            raise InvalidArgumentError("LoS probabilities must lie in [0, 1]")

    @property
    def los_fraction(self) -> float:
        return float(np.mean(self.los))


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """Channel matrix H (N_bs × N_ue), its blockage state and the applied scaling."""

    h: np.ndarray
    blockage: Optional[BlockageField] = None
    normalization: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim == 1:
            h = h[:, None]
        if h.ndim != 2:
            raise InvalidArgumentError(f"channel matrix must be 2-D, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise NumericalFailureError("channel matrix has non-finite entries")
        object.__setattr__(self, 'h', h)

    @property
    def n_bs(self) -> int:
        return self.h.shape[0]

    @property
    def n_ue(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Hermitian PSD covariance C (N×N)."""

    matrix: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        c = np.asarray(self.matrix, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidArgumentError(f"covariance must be square, got shape {c.shape}")
        scale = max(float(np.max(np.abs(c))), 1e-300)
        if np.max(np.abs(c - c.conj().T)) > 1e-12 * scale:
            raise InvalidArgumentError("covariance is not Hermitian")
        eig = np.linalg.eigvalsh(c)
        if eig.min() < -1e-10 * max(eig.max(), 0.0):
            raise InvalidArgumentError(f"covariance is not PSD (min eigenvalue {eig.min():.3e})")
        object.__setattr__(self, 'matrix', c)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n: int) -> 'CovarianceModel':
        return cls(np.eye(n, dtype=complex), normalized=True)


# ─────────────────────────────────────────────
# LoS PROBABILITY / BLOCKAGE
# ─────────────────────────────────────────────

def los_probability_umi(d2d: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """UMi street-canyon LoS probability: 1 up to 18 m, then (18/d)(1 − e^{−d/36}) + e^{−d/36}."""
    d = np.asarray(d2d, dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidArgumentError(f"2D distance must be finite and >= 0, got {d2d}")
    far = np.maximum(d, Config.UMI_BREAKPOINT_M)
    decay = np.exp(-far / Config.UMI_DECAY_M)
    p = np.where(d <= Config.UMI_BREAKPOINT_M, 1.0,
                 (Config.UMI_BREAKPOINT_M / far) * (1.0 - decay) + decay)
    return float(p) if p.ndim == 0 else p


class BlockageCopula:
    """
    Gaussian copula for correlated Bernoulli blockage.

    z ~ N(0, R) with R[n,m] = exp(−‖q_n − q_m‖/d_corr); b_n = 1{z_n ≤ Φ⁻¹(p_n)}
    so each b_n is exactly Bernoulli(p_n).
    """

    def __init__(self, geom: ArrayGeometry, probabilities: Sequence[float], d_corr_m: float):
        if not d_corr_m > 0:
            raise InvalidArgumentError(f"d_corr_m must be > 0, got {d_corr_m}")
        p = np.asarray(probabilities, dtype=float)
        if p.shape != (geom.n_elements,):
            raise InvalidArgumentError(f"expected {geom.n_elements} probabilities, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise InvalidArgumentError("LoS probabilities must lie in [0, 1]")
        self.probabilities = p
        self.d_corr_m = float(d_corr_m)
        self.thresholds = norm.ppf(p)            # ±inf at the degenerate marginals
        self.factor = self._factor(geom)

    def _factor(self, geom: ArrayGeometry) -> np.ndarray:
        if geom.n_elements == 1:
            return np.ones((1, 1))
        corr = np.exp(-squareform(pdist(geom.elements)) / self.d_corr_m)
        w, v = np.linalg.eigh(corr)
        if w.min() < -1e-8 * w.max():
            raise NumericalFailureError(
                f"blockage correlation is not PSD (min eigenvalue {w.min():.3e})")
        factor = v * np.sqrt(np.clip(w, 0.0, None))
        # unit row norms keep the marginals exact after clipping
        return factor / np.linalg.norm(factor, axis=1, keepdims=True)

    @classmethod
    def for_position(cls, geom: ArrayGeometry, ue_pos: Point, d_corr_m: float) -> 'BlockageCopula':
        d2d = cdist(geom.elements, np.asarray(ue_pos, dtype=float)[None, :])[:, 0]
        return cls(geom, los_probability_umi(d2d), d_corr_m)

    def sample(self, rng: np.random.Generator) -> BlockageField:
        z = self.factor @ rng.standard_normal(self.factor.shape[1])
        return BlockageField(los=z <= self.thresholds,
                             probabilities=self.probabilities,
                             d_corr_m=self.d_corr_m)


def sample_blockage(geom: ArrayGeometry, ue_pos: Point, d_corr_m: float,
                    rng: np.random.Generator) -> BlockageField:
    return BlockageCopula.for_position(geom, ue_pos, d_corr_m).sample(rng)


# ─────────────────────────────────────────────
# DETERMINISTIC LoS CHANNELS
# ─────────────────────────────────────────────

def _check_positions(ue_positions: Sequence[Point]) -> np.ndarray:
    pts = np.asarray(ue_positions, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 2:
        raise InvalidArgumentError("need at least one 2D UE antenna position")
    return pts


def los_columns(geom: ArrayGeometry, ue_positions: Sequence[Point]) -> np.ndarray:
    """Unit-gain SWM+SNS responses at the carrier, one column per UE antenna."""
    pts = _check_positions(ue_positions)
    grid = OfdmGrid.single_carrier(geom.carrier_hz)
    return np.column_stack([nf_response(geom, grid, NfParams(x, y), sns=True)[:, 0] for x, y in pts])


def nf_los_channel(geom: ArrayGeometry, ue_positions: Sequence[Point]) -> ChannelDraw:
    return ChannelDraw(los_columns(geom, ue_positions))


def ff_los_channel(geom: ArrayGeometry, ue_positions: Sequence[Point]) -> ChannelDraw:
    """Planar LoS channel: every UE antenna seen at the centroid AoA, own delay (rank one)."""
    pts = _check_positions(ue_positions)
    offset = pts.mean(axis=0) - geom.centroid
    theta = float(np.arctan2(offset[1], offset[0]))
    r0 = float(np.hypot(*offset))
    if r0 < Config.EXCLUSION_RADIUS_M or abs(theta) >= np.pi / 2:
        raise InvalidArgumentError(f"UE centroid ({offset[0]:.3g}, {offset[1]:.3g}) is not in front of the array")
    grid = OfdmGrid.single_carrier(geom.carrier_hz)
    amp = geom.wavelength / (4 * np.pi * r0)
    cols = [amp * ff_unit_response(geom, grid, theta,
                                   np.linalg.norm(p - geom.centroid) / Config.SPEED_OF_LIGHT)[:, 0]
            for p in pts]
    return ChannelDraw(np.column_stack(cols))


# ─────────────────────────────────────────────
# SAMPLERS
# ─────────────────────────────────────────────

class NfMixedChannelSampler:
    """h_u[n] = b_n·s_u[n] + (1 − b_n)·w_u[n]; one blockage field per draw, shared by all columns."""

    def __init__(self, geom: ArrayGeometry, ue_positions: Sequence[Point],
                 d_corr_m: float = Config.DEFAULT_D_CORR_M):
        self.geom = geom
        self.los = los_columns(geom, ue_positions)
        self.nlos_std = np.sqrt(np.mean(np.abs(self.los) ** 2, axis=0))
        centre = tuple(_check_positions(ue_positions).mean(axis=0))
        self.copula = BlockageCopula.for_position(geom, centre, d_corr_m)
        logger.debug(f"NF mixed sampler: {self.los.shape[1]} UE antennas, "
                     f"mean LoS prob {self.copula.probabilities.mean():.3f}")

    @property
    def n_bs(self) -> int:
        return self.los.shape[0]

    @property
    def n_ue(self) -> int:
        return self.los.shape[1]

    def __call__(self, rng: np.random.Generator) -> ChannelDraw:
        blockage = self.copula.sample(rng)
        w = rng.standard_normal((2,) + self.los.shape)
        nlos = (w[0] + 1j * w[1]) * (self.nlos_std / np.sqrt(2))[None, :]
        h = np.where(blockage.los[:, None], self.los, nlos)
        return ChannelDraw(h, blockage=blockage)


def nf_mixed_channel(geom: ArrayGeometry, ue_positions: Sequence[Point], d_corr_m: float,
                     rng: np.random.Generator) -> ChannelDraw:
    return NfMixedChannelSampler(geom, ue_positions, d_corr_m)(rng)


class FfRayleighSampler:
    """i.i.d. CN(0, 1) entries."""

    def __init__(self, n_bs: int, n_ue: int):
        if n_bs < 1 or n_ue < 1:
            raise InvalidArgumentError(f"channel dimensions must be >= 1, got {n_bs}×{n_ue}")
        self.n_bs = n_bs
        self.n_ue = n_ue

    def __call__(self, rng: np.random.Generator) -> ChannelDraw:
        w = rng.standard_normal((2, self.n_bs, self.n_ue))
        return ChannelDraw((w[0] + 1j * w[1]) / np.sqrt(2))


def ff_rayleigh_channel(n_bs: int, n_ue: int, rng: np.random.Generator) -> ChannelDraw:
    return FfRayleighSampler(n_bs, n_ue)(rng)


class FixedChannelSampler:
    """Returns the same channel every draw (AWGN references, toy checks)."""

    def __init__(self, h):
        self.draw = ChannelDraw(np.array(h, dtype=complex, ndmin=2))

    @property
    def n_bs(self) -> int:
        return self.draw.n_bs

    @property
    def n_ue(self) -> int:
        return self.draw.n_ue

    def __call__(self, rng: np.random.Generator) -> ChannelDraw:
        return self.draw


# ─────────────────────────────────────────────
# COVARIANCE / NORMALIZATION
# ─────────────────────────────────────────────

def nf_covariance(geom: ArrayGeometry, ue_positions: Sequence[Point]) -> CovarianceModel:
    """Sample covariance of the per-UE-antenna SWM+SNS responses, trace-normalized to N."""
    s = los_columns(geom, ue_positions)
    c = s @ s.conj().T / s.shape[1]
    c = 0.5 * (c + c.conj().T)
    trace = float(np.real(np.trace(c)))
    if not trace > 0:
        raise NumericalFailureError("NF covariance has zero trace")
    return CovarianceModel(c * (geom.n_elements / trace), normalized=True)


def normalize_channel(channel: Union[ChannelDraw, np.ndarray]) -> ChannelDraw:
    """Scale H so the mean column energy equals N_bs; the draw records the total scaling."""
    draw = channel if isinstance(channel, ChannelDraw) else ChannelDraw(channel)
    energy = float(np.mean(np.sum(np.abs(draw.h) ** 2, axis=0)))
    if energy == 0:
        raise InvalidArgumentError("cannot normalize an all-zero channel")
    factor = np.sqrt(draw.n_bs / energy)
    return ChannelDraw(draw.h * factor, blockage=draw.blockage,
                       normalization=draw.normalization * factor)
