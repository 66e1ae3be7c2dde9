"""Deterministic generator: reference values, array/sequential agreement."""

import numpy as np

from fetchground.rng import SplitMix64


def test_known_first_outputs():
    # reference sequence for seed 1234567 computed from the published
    # mixing constants by an independent integer-only walkthrough
    r = SplitMix64(1234567)
    vals = [r.next_u64() for _ in range(3)]
    r2 = SplitMix64(1234567)
    state = 1234567
    want = []
    for _ in range(3):
        state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        want.append(z ^ (z >> 31))
    assert vals == want
    assert [r2.next_u64() for _ in range(3)] == want


def test_uniform_in_range_and_deterministic():
    r = SplitMix64(42)
    xs = [r.uniform(0.0, 1.0) for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    r2 = SplitMix64(42)
    assert xs == [r2.uniform(0.0, 1.0) for _ in range(1000)]


def test_uniform_array_matches_sequential():
    r1 = SplitMix64(77)
    r2 = SplitMix64(77)
    arr = r1.uniform_array(257, -2.0, 3.0)
    seq = np.array([r2.uniform(-2.0, 3.0) for _ in range(257)])
    assert np.array_equal(arr, seq)
    assert r1.state == r2.state


def test_randint_bounds_and_rough_uniformity():
    r = SplitMix64(5)
    counts = np.zeros(4, dtype=int)
    for _ in range(40000):
        k = r.randint(4)
        counts[k] += 1
    assert counts.sum() == 40000
    assert np.all(np.abs(counts / 40000 - 0.25) < 0.02)


def test_shuffle_is_permutation():
    r = SplitMix64(9)
    xs = list(range(20))
    ys = list(xs)
    r.shuffle(ys)
    assert sorted(ys) == xs and ys != xs


def test_state_roundtrip():
    r = SplitMix64(31337)
    r.uniform_array(10)
    s = r.getstate()
    a = [r.next_u64() for _ in range(5)]
    r.setstate(s)
    b = [r.next_u64() for _ in range(5)]
    assert a == b


def test_spawn_streams_differ():
    r = SplitMix64(8)
    c1, c2 = r.spawn(), r.spawn()
    assert c1.next_u64() != c2.next_u64()
