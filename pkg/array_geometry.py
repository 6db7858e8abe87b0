#!/usr/bin/env python3
"""
Array geometry: antenna positions, OFDM grid, noise power,
apertures, element distances and the Fraunhofer boundary.
All geometry is planar (x, y) in meters.
"""

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple
import numpy as np
from scipy.spatial.distance import pdist
from config import Config
from errors import DegenerateGeometryError, InvalidArgumentError

Point = Tuple[float, float]


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Ordered antenna element positions (N×2, meters) and carrier frequency."""

    elements: np.ndarray
    carrier_hz: float

    def __post_init__(self):
        elements = np.atleast_2d(np.asarray(self.elements, dtype=float))
        if elements.ndim != 2 or elements.shape[1] != 2 or elements.shape[0] < 1:
            raise InvalidArgumentError(f"elements must be an N×2 array with N >= 1, got shape {elements.shape}")
        if not np.all(np.isfinite(elements)):
            raise InvalidArgumentError("element coordinates must be finite")
        if elements.shape[0] > 1 and pdist(elements).min() <= Config.MIN_ELEMENT_SEPARATION_M:
            raise InvalidArgumentError("two antenna elements are coincident")
        if not (np.isfinite(self.carrier_hz) and self.carrier_hz > 0):
            raise InvalidArgumentError(f"carrier_hz must be > 0, got {self.carrier_hz}")
        object.__setattr__(self, 'elements', _frozen(elements))
        object.__setattr__(self, 'carrier_hz', float(self.carrier_hz))

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def wavelength(self) -> float:
        return Config.SPEED_OF_LIGHT / self.carrier_hz

    @property
    def centroid(self) -> np.ndarray:
        return self.elements.mean(axis=0)


@dataclass(frozen=True, eq=False)
class OfdmGrid:
    """K subcarriers spaced B/K around the carrier."""

    n_subcarriers: int
    carrier_hz: float
    bandwidth_hz: float = 0.0

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise InvalidArgumentError(f"n_subcarriers must be >= 1, got {self.n_subcarriers}")
        if self.bandwidth_hz < 0:
            raise InvalidArgumentError(f"bandwidth_hz must be >= 0, got {self.bandwidth_hz}")
        if self.carrier_hz <= 0:
            raise InvalidArgumentError(f"carrier_hz must be > 0, got {self.carrier_hz}")
        if self.frequencies.min() <= 0:
            raise InvalidArgumentError("bandwidth too wide: a subcarrier frequency is not positive")

    @classmethod
    def single_carrier(cls, carrier_hz: float) -> 'OfdmGrid':
        return cls(n_subcarriers=1, carrier_hz=carrier_hz, bandwidth_hz=0.0)

    @property
    def spacing_hz(self) -> float:
        return self.bandwidth_hz / self.n_subcarriers

    @property
    def frequencies(self) -> np.ndarray:
        k = np.arange(self.n_subcarriers)
        return self.carrier_hz + (k - (self.n_subcarriers - 1) / 2) * self.spacing_hz

    @property
    def wavelengths(self) -> np.ndarray:
        return Config.SPEED_OF_LIGHT / self.frequencies

    @property
    def unambiguous_delay_s(self) -> float:
        """Period of the subcarrier phase pattern in delay (inf for one subcarrier)."""
        if self.n_subcarriers < 2 or self.spacing_hz <= 0:
            return float('inf')
        return 1.0 / self.spacing_hz


@dataclass(frozen=True)
class NoiseSpec:
    """Thermal noise PSD plus receiver noise figure."""

    psd_dbm_per_hz: float
    noise_figure_db: float

    def noise_power_w(self, grid: OfdmGrid) -> float:
        """Per-subcarrier noise power σ² in watts, integrated over B/K."""
        if grid.spacing_hz <= 0:
            raise InvalidArgumentError("noise power needs a positive subcarrier spacing (bandwidth_hz > 0)")
        if not (np.isfinite(self.psd_dbm_per_hz) and np.isfinite(self.noise_figure_db)):
            raise InvalidArgumentError("noise PSD and noise figure must be finite")
        return 10 ** ((self.psd_dbm_per_hz + self.noise_figure_db) / 10) * 1e-3 * grid.spacing_hz


def build_ula(n: int, spacing: float, carrier_hz: float) -> ArrayGeometry:
    """ULA along the y-axis centred at the origin."""
    if n < 1:
        raise InvalidArgumentError(f"ULA needs at least one element, got n={n}")
    if not spacing > 0:
        raise InvalidArgumentError(f"ULA spacing must be > 0, got {spacing}")
    y = (np.arange(n) - (n - 1) / 2) * spacing
    return ArrayGeometry(elements=np.column_stack([np.zeros(n), y]), carrier_hz=carrier_hz)


def build_ue_array(center: Sequence[float], n_rows: int, n_cols: int, spacing: float) -> List[Point]:
    """Rectangular UE antenna grid centred on `center` (rows along x, columns along y)."""
    if n_rows < 1 or n_cols < 1:
        raise InvalidArgumentError(f"UE grid needs at least one row and column, got {n_rows}×{n_cols}")
    if (n_rows > 1 or n_cols > 1) and not spacing > 0:
        raise InvalidArgumentError(f"UE antenna spacing must be > 0, got {spacing}")
    dx = (np.arange(n_rows) - (n_rows - 1) / 2) * spacing
    dy = (np.arange(n_cols) - (n_cols - 1) / 2) * spacing
    cx, cy = float(center[0]), float(center[1])
    return [(cx + a, cy + b) for a in dx for b in dy]


def aperture(geom: ArrayGeometry) -> float:
    """Maximum pairwise element distance D."""
    if geom.n_elements < 2:
        return 0.0
    return float(pdist(geom.elements).max())


def fraunhofer_distance(geom: ArrayGeometry, wavelength: float) -> float:
    """2·D²/λ; zero for a point source."""
    if not wavelength > 0:
        raise InvalidArgumentError(f"wavelength must be > 0, got {wavelength}")
    d = aperture(geom)
    return 2.0 * d * d / wavelength


def wideband_fraunhofer_distance(geom: ArrayGeometry, grid: OfdmGrid) -> float:
    """Fraunhofer distance at the highest subcarrier (largest over the band)."""
    return fraunhofer_distance(geom, float(grid.wavelengths.min()))


def distances(geom: ArrayGeometry, p: Iterable[float]) -> np.ndarray:
    """Euclidean distance from p to every element, in element order."""
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise InvalidArgumentError(f"point must be a finite 2D coordinate, got {p}")
    d = np.hypot(geom.elements[:, 0] - p[0], geom.elements[:, 1] - p[1])
    if d.min() < Config.EXCLUSION_RADIUS_M:
        raise DegenerateGeometryError(
            f"point ({p[0]:.3g}, {p[1]:.3g}) is within {Config.EXCLUSION_RADIUS_M:g} m of element {int(d.argmin())}"
        )
    return d
