#!/usr/bin/env python3
"""
Array responses over an OFDM grid: planar far field (FF), spherical wave
model (SWM) and SWM with spatial non-stationarity (SNS), plus analytic
parameter Jacobians and the manifold angle.

Responses are N×K complex arrays (antennas × subcarriers). Jacobians are
P×N×K, parameters ordered (x, y, g_re, g_im) for NF and
(θ, τ, g_re, g_im) for FF.
"""

from dataclasses import dataclass
from typing import Tuple
import numpy as np
from config import Config
from errors import DegenerateGeometryError, InvalidArgumentError
from array_geometry import ArrayGeometry, OfdmGrid, distances

ResponseMatrix = np.ndarray

NF_LABELS = ('x', 'y', 'g_re', 'g_im')
FF_LABELS = ('theta', 'tau', 'g_re', 'g_im')


@dataclass(frozen=True)
class NfParams:
    """Source position (m) and complex gain."""

    x: float
    y: float
    gain: complex = 1.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.gain.real, self.gain.imag])

    @classmethod
    def from_vector(cls, eta: np.ndarray) -> 'NfParams':
        return cls(float(eta[0]), float(eta[1]), complex(eta[2], eta[3]))


@dataclass(frozen=True)
class FfParams:
    """AoA from boresight (rad), delay (s) and complex gain."""

    theta: float
    tau: float
    gain: complex = 1.0

    def __post_init__(self):
        if not (-np.pi / 2 < self.theta < np.pi / 2):
            raise InvalidArgumentError(f"theta must lie in (-pi/2, pi/2), got {self.theta}")
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be > 0, got {self.tau}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.theta, self.tau, self.gain.real, self.gain.imag])

    @classmethod
    def from_vector(cls, eta: np.ndarray) -> 'FfParams':
        return cls(float(eta[0]), float(eta[1]), complex(eta[2], eta[3]))


# ─────────────────────────────────────────────
# NEAR FIELD
# ─────────────────────────────────────────────

def _nf_terms(geom: ArrayGeometry, grid: OfdmGrid, position: np.ndarray, sns: bool):
    """Unit-gain response plus the distance pieces reused by the Jacobian."""
    d = distances(geom, position)
    wavenumbers = 2 * np.pi * grid.frequencies / Config.SPEED_OF_LIGHT
    phase = np.exp(-1j * np.outer(d, wavenumbers))
    d0 = float(np.linalg.norm(position - geom.centroid))
    if sns:
        amp = geom.wavelength / (4 * np.pi * d)
    else:
        if d0 < Config.EXCLUSION_RADIUS_M:
            raise DegenerateGeometryError("source coincides with the array centroid")
        amp = np.full(geom.n_elements, geom.wavelength / (4 * np.pi * d0))
    return amp[:, None] * phase, d, d0, wavenumbers


def nf_response(geom: ArrayGeometry, grid: OfdmGrid, params: NfParams, sns: bool = True) -> ResponseMatrix:
    """μ[n,k] = g·A_n·exp(−j2πf_k d_n/c); A_n = λ_c/(4πd_n) with SNS, λ_c/(4πd_0) without."""
    unit, _, _, _ = _nf_terms(geom, grid, params.position, sns)
    return params.gain * unit


def _nf_jacobian(geom: ArrayGeometry, grid: OfdmGrid, params: NfParams, sns: bool) -> np.ndarray:
    position = params.position
    unit, d, d0, wavenumbers = _nf_terms(geom, grid, position, sns)
    mu = params.gain * unit
    grad_d = (position[None, :] - geom.elements) / d[:, None]          # ∂d_n/∂(x, y)
    jac = np.empty((4,) + mu.shape, dtype=complex)
    for i in range(2):
        phase_term = -1j * np.outer(grad_d[:, i], wavenumbers)
        if sns:
            amp_term = (-grad_d[:, i] / d)[:, None]
        else:
            amp_term = -(position[i] - geom.centroid[i]) / (d0 * d0)
        jac[i] = mu * (phase_term + amp_term)
    jac[2] = unit
    jac[3] = 1j * unit
    return jac


# ─────────────────────────────────────────────
# FAR FIELD
# ─────────────────────────────────────────────

def _projection(geom: ArrayGeometry, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Element offsets from the centroid projected on the arrival direction, and the θ-derivative."""
    offsets = geom.elements - geom.centroid
    proj = offsets @ np.array([np.cos(theta), np.sin(theta)])
    dproj = offsets @ np.array([-np.sin(theta), np.cos(theta)])
    return proj, dproj


def ff_unit_response(geom: ArrayGeometry, grid: OfdmGrid, theta: float, tau: float) -> ResponseMatrix:
    """Planar response with unit gain; no range dependence beyond the common delay."""
    f = grid.frequencies
    proj, _ = _projection(geom, theta)
    planar = np.exp(2j * np.pi * np.outer(proj, f) / Config.SPEED_OF_LIGHT)
    return planar * np.exp(-2j * np.pi * f * tau)[None, :]


def ff_response(geom: ArrayGeometry, grid: OfdmGrid, params: FfParams) -> ResponseMatrix:
    """μ̃[n,k] = g·exp(−j2πf_kτ)·exp(+j2πf_k·(q_n−q̄)·u(θ)/c); u(θ)·(q_n−q̄) = y_n·sinθ for a y-axis ULA."""
    return params.gain * ff_unit_response(geom, grid, params.theta, params.tau)


def ff_jacobian_raw(geom: ArrayGeometry, grid: OfdmGrid, eta: np.ndarray) -> np.ndarray:
    """FF Jacobian at a raw parameter vector; no range checks (used inside solvers)."""
    theta, tau = float(eta[0]), float(eta[1])
    gain = complex(eta[2], eta[3])
    f = grid.frequencies
    unit = ff_unit_response(geom, grid, theta, tau)
    mu = gain * unit
    _, dproj = _projection(geom, theta)
    jac = np.empty((4,) + mu.shape, dtype=complex)
    jac[0] = mu * (2j * np.pi * np.outer(dproj, f) / Config.SPEED_OF_LIGHT)
    jac[1] = mu * (-2j * np.pi * f)[None, :]
    jac[2] = unit
    jac[3] = 1j * unit
    return jac


def ff_position(params: FfParams) -> Tuple[np.ndarray, np.ndarray]:
    """p̃ = cτ·(cosθ, sinθ) and T = ∂p̃/∂(θ, τ)."""
    c = Config.SPEED_OF_LIGHT
    ct, st = np.cos(params.theta), np.sin(params.theta)
    r = c * params.tau
    point = np.array([r * ct, r * st])
    jac = np.array([[-r * st, c * ct],
                    [r * ct, c * st]])
    return point, jac


def response_jacobian(model: str, geom: ArrayGeometry, grid: OfdmGrid, params, sns: bool = True) -> np.ndarray:
    """Analytic ∂μ/∂η, one N×K slab per parameter."""
    if model == 'nf':
        if not isinstance(params, NfParams):
            raise InvalidArgumentError("NF Jacobian needs NfParams")
        return _nf_jacobian(geom, grid, params, sns)
    if model == 'ff':
        if not isinstance(params, FfParams):
            raise InvalidArgumentError("FF Jacobian needs FfParams")
        return ff_jacobian_raw(geom, grid, params.as_vector())
    raise InvalidArgumentError(f"unknown model '{model}' (expected 'nf' or 'ff')")


def manifold_angle(a: np.ndarray, b: np.ndarray) -> float:
    """arccos(|aᴴb| / (‖a‖‖b‖)) in [0, π/2]."""
    a = np.ravel(np.asarray(a, dtype=complex))
    b = np.ravel(np.asarray(b, dtype=complex))
    if a.shape != b.shape:
        raise InvalidArgumentError(f"vectors differ in length: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InvalidArgumentError("manifold angle is undefined for a zero vector")
    cos = abs(np.vdot(a, b)) / (na * nb)
    return float(np.arccos(np.clip(cos, 0.0, 1.0)))
