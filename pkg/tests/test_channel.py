import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from v2vlc.channel import (
    CHANNELWISE_LOSSY,
    GLOBAL_LOSSY,
    IDEAL,
    RESAMPLE_UNIFORM,
    ChannelConfig,
    ChannelConfigError,
    FeatureMap,
    apply_channel,
    corrupted_channel_count,
    rng_stream,
    sample_transmission_p,
)


def fmap(c=4, h=5, w=5, seed=0):
    return FeatureMap(np.random.default_rng(seed).uniform(0, 3, (c, h, w)), (0.0, 3.0))


@pytest.mark.parametrize("mode", [GLOBAL_LOSSY, CHANNELWISE_LOSSY])
def test_p_zero_is_identity(mode):
    f = fmap()
    out, mask = apply_channel(f, ChannelConfig(mode, 0.0), rng_stream(0))
    assert np.array_equal(out.data, f.data) and mask.empty


def test_ideal_ignores_p():
    f = fmap()
    out, mask = apply_channel(f, ChannelConfig(IDEAL, 0.9, (5.0, 6.0)), rng_stream(0))
    assert np.array_equal(out.data, f.data) and mask.empty


def test_p_one_replaces_everything_within_range():
    f = fmap()
    out, mask = apply_channel(f, ChannelConfig(GLOBAL_LOSSY, 1.0, (10.0, 11.0)), rng_stream(1))
    assert mask.replaced.all()
    assert out.data.min() >= 10.0 and out.data.max() <= 11.0


def test_channelwise_example_nine_channels():
    f = FeatureMap(np.zeros((9, 10, 10)), (0.0, 1.0))
    _, mask = apply_channel(f, ChannelConfig(CHANNELWISE_LOSSY, 0.5), rng_stream(2))
    assert len(mask.channels) == 4


def test_global_binomial_example():
    f = FeatureMap(np.zeros((1, 100, 100)), (0.0, 1.0))
    _, mask = apply_channel(f, ChannelConfig(GLOBAL_LOSSY, 0.3), rng_stream(3))
    assert abs(mask.count - 3000) <= 3 * math.sqrt(10_000 * 0.3 * 0.7)


def test_noise_range_defaults_to_value_range():
    f = FeatureMap(np.full((2, 8, 8), 100.0), (-1.0, 1.0))
    out, mask = apply_channel(f, ChannelConfig(GLOBAL_LOSSY, 0.5), rng_stream(4))
    assert np.all(np.abs(out.data[mask.replaced]) <= 1.0)


def test_invalid_p_rejected():
    with pytest.raises(ChannelConfigError):
        ChannelConfig(GLOBAL_LOSSY, 1.5)
    with pytest.raises(ChannelConfigError):
        ChannelConfig("bursty", 0.1)


def test_resample_moments_and_ks():
    cfg = ChannelConfig(GLOBAL_LOSSY, RESAMPLE_UNIFORM)
    rng = rng_stream(5)
    draws = np.array([sample_transmission_p(cfg, rng) for _ in range(10_000)])
    assert 0.49 <= draws.mean() <= 0.51
    assert stats.kstest(draws, "uniform").statistic < 0.02


def test_resample_deterministic_and_requires_flag():
    cfg = ChannelConfig(GLOBAL_LOSSY, RESAMPLE_UNIFORM)
    a = [sample_transmission_p(cfg, rng_stream(9)) for _ in range(3)]
    b = [sample_transmission_p(cfg, rng_stream(9)) for _ in range(3)]
    assert a == b
    with pytest.raises(ChannelConfigError):
        sample_transmission_p(ChannelConfig(GLOBAL_LOSSY, 0.2), rng_stream(0))


def test_streams_are_independent_by_key():
    a = rng_stream(0, 1, 2).random(4)
    b = rng_stream(0, 1, 3).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, rng_stream(0, 1, 2).random(4))


def test_floor_epsilon():
    assert corrupted_channel_count(0.57, 100) == 57
    assert corrupted_channel_count(0.3, 10) == 3


def test_stats_record():
    f = fmap(c=3)
    _, mask = apply_channel(f, ChannelConfig(CHANNELWISE_LOSSY, 0.7), rng_stream(6))
    s = mask.stats()
    assert s["corrupted_channels"] == list(mask.channels)
    assert sum(s["per_channel"]) == s["replaced"] == 2 * 25


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from([GLOBAL_LOSSY, CHANNELWISE_LOSSY]),
    st.floats(0, 1),
    st.integers(1, 16),
    st.integers(0, 2**32),
)
def test_channel_invariants(mode, p, c, seed):
    f = fmap(c=c, h=4, w=3, seed=seed % 97)
    cfg = ChannelConfig(mode, p, (-2.0, 2.0), seed)
    out, mask = apply_channel(f, cfg, rng_stream(seed))
    keep = ~mask.replaced
    assert np.array_equal(out.data[keep], f.data[keep])
    vals = out.data[mask.replaced]
    assert np.all((vals >= -2.0) & (vals <= 2.0))
    if mode == CHANNELWISE_LOSSY:
        per = mask.replaced.reshape(c, -1)
        assert np.all(per.all(axis=1) | ~per.any(axis=1))
        assert int(per.all(axis=1).sum()) == math.floor(p * c + 1e-9)
    again, _ = apply_channel(f, cfg, rng_stream(seed))
    assert np.array_equal(again.data, out.data)
