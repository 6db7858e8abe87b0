import numpy as np
import pytest

from config import Config
from errors import InvalidArgumentError, NumericalFailureError
from array_geometry import ArrayGeometry, build_ue_array, build_ula
from channel_models import (BlockageCopula, ChannelDraw, CovarianceModel, FfRayleighSampler,
                            NfMixedChannelSampler, ff_los_channel, ff_rayleigh_channel,
                            los_probability_umi, nf_covariance, nf_mixed_channel, normalize_channel,
                            sample_blockage)

CARRIER_HZ = Config.SPEED_OF_LIGHT * 63 / 5.4


@pytest.fixture
def bs():
    return build_ula(64, Config.SPEED_OF_LIGHT / CARRIER_HZ / 2, CARRIER_HZ)


def test_umi_los_probability():
    assert los_probability_umi(10.0) == 1.0
    assert los_probability_umi(18.0) == 1.0
    assert los_probability_umi(36.0) == pytest.approx(0.5 * (1 - np.exp(-1)) + np.exp(-1))
    p = los_probability_umi(np.array([20.0, 50.0, 200.0, 1000.0]))
    assert np.all(np.diff(p) < 0)
    with pytest.raises(InvalidArgumentError):
        los_probability_umi(-1.0)


def test_blockage_near_bs_is_all_los(bs):
    for seed in range(5):
        field = sample_blockage(bs, (10.0, 0.0), 10.0, np.random.default_rng(seed))
        assert field.los.all()
        assert field.los_fraction == 1.0


def test_blockage_marginals_match_probabilities(bs):
    copula = BlockageCopula.for_position(bs, (60.0, 0.0), 10.0)
    rng = np.random.default_rng(1)
    draws = np.array([copula.sample(rng).los for _ in range(4000)])
    p = copula.probabilities[0]
    tol = 4 * np.sqrt(p * (1 - p) / draws.shape[0])
    assert draws[:, 0].mean() == pytest.approx(p, abs=tol)
    assert draws[:, -1].mean() == pytest.approx(copula.probabilities[-1], abs=tol)


def test_blockage_correlation_decays_with_distance():
    geom = ArrayGeometry(elements=np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 5.0]]), carrier_hz=3e9)
    copula = BlockageCopula(geom, [0.5, 0.5, 0.5], d_corr_m=10.0)
    rng = np.random.default_rng(7)
    b = np.array([copula.sample(rng).los for _ in range(20000)], dtype=float)
    corr = np.corrcoef(b.T)
    assert corr[0, 1] > corr[0, 2] + 0.1


def test_nlos_entries_match_target_variance(bs):
    ue = build_ue_array((80.0, 10.0), 1, 2, 0.33)
    sampler = NfMixedChannelSampler(bs, ue, 10.0)
    sampler.copula = BlockageCopula(bs, np.zeros(bs.n_elements), 10.0)
    rng = np.random.default_rng(3)
    h = np.array([sampler(rng).h for _ in range(5000)])
    empirical = np.mean(np.abs(h) ** 2, axis=(0, 1))
    assert np.allclose(empirical, sampler.nlos_std ** 2, rtol=0.02)


def test_mixed_channel_is_reproducible(bs):
    ue = build_ue_array((40.0, -5.0), 1, 4, 1 / 3)
    a = nf_mixed_channel(bs, ue, 10.0, np.random.default_rng(11))
    b = nf_mixed_channel(bs, ue, 10.0, np.random.default_rng(11))
    assert a.h.shape == (64, 4)
    assert np.array_equal(a.h, b.h)
    assert np.array_equal(a.blockage.los, b.blockage.los)


def test_rayleigh_draws():
    a = ff_rayleigh_channel(64, 64, np.random.default_rng(5))
    b = ff_rayleigh_channel(64, 64, np.random.default_rng(5))
    assert np.array_equal(a.h, b.h)
    assert np.mean(np.abs(a.h) ** 2) == pytest.approx(1.0, rel=0.05)
    assert normalize_channel(a).normalization == pytest.approx(1.0, abs=0.05)
    with pytest.raises(InvalidArgumentError):
        FfRayleighSampler(0, 2)


def test_normalize_channel():
    h = 3 * np.array([[1.0, 1j]])
    draw = normalize_channel(h)
    assert draw.normalization == pytest.approx(1 / 3)
    assert np.mean(np.sum(np.abs(draw.h) ** 2, axis=0)) == pytest.approx(1.0)
    again = normalize_channel(draw)
    assert np.allclose(again.h, draw.h)
    with pytest.raises(InvalidArgumentError):
        normalize_channel(np.zeros((2, 2)))


def test_channel_draw_rejects_non_finite():
    with pytest.raises(NumericalFailureError):
        ChannelDraw(np.array([[np.nan]]))


def test_covariance_model_checks():
    with pytest.raises(InvalidArgumentError):
        CovarianceModel(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        CovarianceModel(np.diag([1.0, -1.0]))
    assert np.allclose(CovarianceModel.identity(3).matrix, np.eye(3))


def test_nf_covariance_rank_and_trace(bs):
    one = nf_covariance(bs, [(5.0, 1.0)])
    assert np.real(np.trace(one.matrix)) == pytest.approx(64, rel=1e-9)
    assert np.linalg.matrix_rank(one.matrix, tol=1e-8 * np.abs(one.matrix).max()) == 1
    many = nf_covariance(bs, build_ue_array((5.0, 1.0), 4, 4, 1 / 3))
    assert np.linalg.matrix_rank(many.matrix) <= 16
    assert many.normalized


def test_nf_covariance_mirror_symmetry_on_boresight(bs):
    c = nf_covariance(bs, build_ue_array((6.0, 0.0), 4, 4, 1 / 3)).matrix
    flipped = c[::-1, ::-1]
    assert np.max(np.abs(c - flipped)) <= 1e-10 * np.max(np.abs(c))


def test_ff_los_channel_is_rank_one(bs):
    draw = ff_los_channel(bs, build_ue_array((5.0, 0.0), 1, 2, 0.33))
    s = np.linalg.svd(draw.h, compute_uv=False)
    assert s[1] <= 1e-10 * s[0]
    with pytest.raises(InvalidArgumentError):
        ff_los_channel(bs, [(-3.0, 0.0)])
