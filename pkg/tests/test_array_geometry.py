import numpy as np
import pytest

from config import Config
from errors import DegenerateGeometryError, InvalidArgumentError
from array_geometry import (ArrayGeometry, NoiseSpec, OfdmGrid, aperture, build_ue_array, build_ula,
                            distances, fraunhofer_distance, wideband_fraunhofer_distance)

C = Config.SPEED_OF_LIGHT
CASE3_CARRIER_HZ = C * 63 / 5.4


def test_ula_is_centred_on_y_axis():
    geom = build_ula(5, 0.01, 3e9)
    assert geom.n_elements == 5
    assert np.allclose(geom.elements[:, 0], 0.0)
    assert np.allclose(geom.centroid, 0.0, atol=1e-12)
    assert np.allclose(np.diff(geom.elements[:, 1]), 0.01)


def test_single_element_sits_at_origin():
    geom = build_ula(1, 0.01, 3e9)
    assert np.allclose(geom.elements, [[0.0, 0.0]])
    assert aperture(geom) == 0.0
    assert fraunhofer_distance(geom, geom.wavelength) == 0.0


def test_case1_aperture_and_fraunhofer_distance():
    lam = C / 140e9
    geom = build_ula(128, lam / 2, 140e9)
    assert aperture(geom) == pytest.approx(127 * lam / 2, rel=1e-12)
    assert aperture(geom) == pytest.approx(0.13598, abs=1e-5)
    assert fraunhofer_distance(geom, lam) == pytest.approx(17.27, abs=0.01)


def test_case3_fraunhofer_distance():
    lam = C / CASE3_CARRIER_HZ
    geom = build_ula(64, lam / 2, CASE3_CARRIER_HZ)
    assert aperture(geom) == pytest.approx(2.7, rel=1e-9)
    assert fraunhofer_distance(geom, lam) == pytest.approx(170.1, abs=0.1)


def test_wideband_fraunhofer_uses_shortest_wavelength():
    lam = C / 140e9
    geom = build_ula(128, lam / 2, 140e9)
    single = OfdmGrid.single_carrier(140e9)
    wide = OfdmGrid(10, 140e9, 400e6)
    assert wideband_fraunhofer_distance(geom, single) == pytest.approx(fraunhofer_distance(geom, lam))
    assert wideband_fraunhofer_distance(geom, wide) > fraunhofer_distance(geom, lam)


def test_ofdm_grid_is_centred_on_carrier():
    grid = OfdmGrid(10, 140e9, 400e6)
    assert grid.spacing_hz == pytest.approx(40e6)
    assert grid.frequencies.mean() == pytest.approx(140e9)
    assert np.allclose(np.diff(grid.frequencies), 40e6)
    assert grid.unambiguous_delay_s == pytest.approx(25e-9)
    assert np.isinf(OfdmGrid.single_carrier(140e9).unambiguous_delay_s)


@pytest.mark.parametrize('kwargs', [
    dict(n_subcarriers=0, carrier_hz=1e9),
    dict(n_subcarriers=4, carrier_hz=1e9, bandwidth_hz=-1.0),
    dict(n_subcarriers=4, carrier_hz=1e9, bandwidth_hz=4e9),
])
def test_invalid_ofdm_grid(kwargs):
    with pytest.raises(InvalidArgumentError):
        OfdmGrid(**kwargs)


def test_noise_power_integrates_over_subcarrier_spacing():
    grid = OfdmGrid(10, 140e9, 400e6)
    sigma2 = NoiseSpec(-173.8, 10.0).noise_power_w(grid)
    assert sigma2 == pytest.approx(10 ** (-16.38) * 1e-3 * 40e6, rel=1e-12)


def test_noise_power_needs_bandwidth():
    with pytest.raises(InvalidArgumentError):
        NoiseSpec(-173.8, 10.0).noise_power_w(OfdmGrid.single_carrier(3e9))


def test_distances_and_exclusion_ball():
    geom = build_ula(3, 1.0, 3e9)
    assert np.allclose(distances(geom, (3.0, 0.0)), [np.hypot(3, 1), 3.0, np.hypot(3, 1)])
    with pytest.raises(DegenerateGeometryError):
        distances(geom, (0.0, 1.0))


def test_coincident_elements_are_rejected():
    with pytest.raises(InvalidArgumentError):
        ArrayGeometry(elements=np.array([[0.0, 0.0], [0.0, 0.0]]), carrier_hz=3e9)


def test_ue_array_is_centred_on_its_point():
    pts = np.array(build_ue_array((5.0, -2.0), 4, 4, 1 / 3))
    assert pts.shape == (16, 2)
    assert np.allclose(pts.mean(axis=0), [5.0, -2.0])
    assert np.unique(pts[:, 0]).size == 4
    assert build_ue_array((1.0, 2.0), 1, 1, 0.0) == [(1.0, 2.0)]
