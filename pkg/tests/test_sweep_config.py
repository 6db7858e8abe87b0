import copy
import json
from pathlib import Path

import numpy as np
import pytest

from errors import ConfigError
from sweep_config import AxisSpec, ScenarioConfig, SweepGrid, load_config, parse_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / 'configs'


def _raw(name):
    with open(CONFIG_DIR / name) as f:
        return json.load(f)


@pytest.mark.parametrize('name,kind', [
    ('case1_mme_map.json', 'mme-map'),
    ('case2_chest_map.json', 'chest-map'),
    ('case3_ser_map.json', 'ser-map'),
    ('metrics_report.json', 'metrics-report'),
])
def test_bundled_configs_are_valid(name, kind):
    cfg = load_config(str(CONFIG_DIR / name))
    assert isinstance(cfg, ScenarioConfig)
    assert cfg.kind == kind


def test_case1_physics():
    cfg = load_config(str(CONFIG_DIR / 'case1_mme_map.json'))
    assert cfg.subcarrier_gain() == pytest.approx(0.1)
    assert cfg.noise_power_w() == pytest.approx(10 ** (-16.38) * 1e-3 * 40e6)
    assert cfg.fraunhofer_m() == pytest.approx(17.27, abs=0.01)
    assert cfg.grid.n_cells == 61 * 61


def test_case3_variants():
    cfg = load_config(str(CONFIG_DIR / 'case3_ser_map.json'))
    assert cfg.variants == (0.5, 2.0)
    assert cfg.geometry(0).n_elements == 64
    apertures = [s * cfg.geometry(v).wavelength * 63 for v, s in enumerate(cfg.variants)]
    assert apertures == pytest.approx([2.7, 10.8], rel=1e-6)


def test_unknown_key_is_named():
    data = _raw('case1_mme_map.json')
    data['array']['carrier'] = data['array'].pop('carrier_hz')
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.key == 'array.carrier'
    assert 'carrier' in str(exc.value)


def test_missing_seed():
    data = _raw('case2_chest_map.json')
    del data['seed']
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.key == 'seed'


@pytest.mark.parametrize('mutate,key', [
    (lambda d: d.update(kind='heatmap'), 'kind'),
    (lambda d: d.update(seed=-1), 'seed'),
    (lambda d: d.update(seed=1.5), 'seed'),
    (lambda d: d['array'].update(n_antennas='128'), 'array.n_antennas'),
    (lambda d: d['grid']['x'].update(min_m=0.0), 'grid'),
    (lambda d: d['grid']['y'].update(count=1), 'grid'),
    (lambda d: d.update(ser={'target_ser': 0.8}), 'ser'),
    (lambda d: d.update(blockage={'d_corr_m': 0.0}), 'blockage.d_corr_m'),
    (lambda d: d.update(power=None), 'power'),
    (lambda d: d.update(max_failed_fraction=1.5), 'max_failed_fraction'),
])
def test_invalid_values_name_their_key(mutate, key):
    data = copy.deepcopy(_raw('case1_mme_map.json'))
    mutate(data)
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.key == key


def test_mme_map_needs_sources_in_front_of_the_array():
    data = _raw('case1_mme_map.json')
    data['grid']['x'] = {'min_m': -5.0, 'max_m': 5.0, 'count': 3, 'scale': 'linear'}
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert 'x.min_m' in str(exc.value)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"kind": ')
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_grid_cells_are_row_major():
    grid = SweepGrid(x=AxisSpec(0.0, 2.0, 3), y=AxisSpec(10.0, 20.0, 2))
    assert grid.cells() == [(0.0, 10.0), (1.0, 10.0), (2.0, 10.0),
                            (0.0, 20.0), (1.0, 20.0), (2.0, 20.0)]


def test_log_axis():
    values = AxisSpec(1.0, 100.0, 3, 'log').values()
    assert np.allclose(values, [1.0, 10.0, 100.0])


def test_config_hash_tracks_content():
    cfg = load_config(str(CONFIG_DIR / 'case2_chest_map.json'))
    again = load_config(str(CONFIG_DIR / 'case2_chest_map.json'))
    assert cfg.config_hash() == again.config_hash()
    reseeded = cfg.with_seed(cfg.seed + 1)
    assert reseeded.seed == cfg.seed + 1
    assert reseeded.config_hash() != cfg.config_hash()
