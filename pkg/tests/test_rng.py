from __future__ import annotations

import numpy as np
from scipy import stats

from greenwalk.rng import RngStream, make_streams, standard_normal


def test_make_streams_is_deterministic():
    a = make_streams(7, 3)
    b = make_streams(7, 3)
    assert len(a) == 3
    assert len({s.stream_id for s in a}) == 3
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.normals(50), sb.normals(50))


def test_streams_are_separated():
    s0, s1 = make_streams(7, 2)
    assert standard_normal(s0) != standard_normal(s1)


def test_seed_sensitivity():
    (a,) = make_streams(7, 1)
    (b,) = make_streams(8, 1)
    assert not np.array_equal(a.normals(10), b.normals(10))


def test_make_streams_rejects_zero():
    import pytest
    with pytest.raises(ValueError):
        make_streams(7, 0)


def test_moments_of_1e5_draws():
    (s,) = make_streams(7, 1)
    z = s.normals(100_000)
    assert abs(z.mean()) <= 4.0 / np.sqrt(1e5)
    assert 0.97 <= z.var() <= 1.03


def test_ks_statistic_below_critical_value():
    z = RngStream(11, 3).normals(100_000)
    d = stats.kstest(z, "norm").statistic
    # 0.1% two-sided critical value: 1.949 / sqrt(n)
    assert d < 1.949 / np.sqrt(1e5)


def test_counter_replay():
    s = RngStream(7, 2)
    s.normals(13)
    saved = s.copy()
    assert saved.counter == 13
    assert standard_normal(s) == standard_normal(saved)
    assert s.counter == 14


def test_counter_arithmetic_matches_sequential_draws():
    full = RngStream(5, 1).uniforms(23)
    for c in (0, 1, 4, 7, 16, 22):
        np.testing.assert_array_equal(RngStream(5, 1, counter=c).uniforms(23 - c), full[c:])


def test_uniforms_open_interval():
    u = RngStream(0, 0).uniforms(10_000)
    assert np.all(u > 0) and np.all(u < 1)
