import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tinysplat.reduction import (exp_aligned_error_bound, exp_aligned_reduce,
                                 lane_group_reduce)


def test_lane_reduce_all_ones():
    assert lane_group_reduce(np.ones(32)) == 32.0


def test_lane_reduce_one_hot():
    v = np.zeros(32)
    v[13] = 7.25
    assert lane_group_reduce(v) == 7.25


def test_lane_reduce_against_fp64(rng):
    for _ in range(200):
        v = rng.normal(size=32).astype(np.float32)
        got = lane_group_reduce(v)
        ref = v.astype(np.float64).sum()
        # depth-5 tree: error under 4 ulp at the accumulation scale sum|v|
        ulp = np.spacing(np.float32(np.abs(v).sum()))
        assert abs(float(got) - ref) <= 4 * float(ulp)


def test_lane_reduce_batched_matches_single(rng):
    v = rng.normal(size=(5, 7, 32))
    got = lane_group_reduce(v)
    for i in range(5):
        for j in range(7):
            assert got[i, j] == lane_group_reduce(v[i, j])


def test_lane_reduce_is_fixed_tree():
    # the tree must pair lanes at strides 16, 8, 4, 2, 1
    v = np.arange(32, dtype=np.float64)
    expect = v.copy()
    for step in (16, 8, 4, 2, 1):
        expect = expect[:step] + expect[step:2 * step]
    assert lane_group_reduce(v) == expect[0]


def test_exp_aligned_all_ones_exact():
    assert exp_aligned_reduce(np.full(32, 1.0)) == 32.0


def test_exp_aligned_one_hot_exact_float32(rng):
    for _ in range(100):
        v = np.zeros(32)
        x = np.float32(rng.normal() * 2.0 ** rng.integers(-10, 10))
        v[int(rng.integers(32))] = x
        assert exp_aligned_reduce(v) == np.float64(x)


def test_exp_aligned_all_zero():
    assert exp_aligned_reduce(np.zeros(32)) == 0.0


def test_exp_aligned_truncates_tiny_values():
    v = np.full(32, 2.0**-30)
    v[0] = 1.0
    got = exp_aligned_reduce(v)
    exact = 1.0 + 31 * 2.0**-30
    assert got == 1.0  # the tiny mantissas align to zero
    assert abs(got - exact) <= 32 * 2.0**-23


def test_exp_aligned_bound_over_random_magnitudes(rng):
    # magnitudes spread over [2^-10, 2^10], signs mixed
    for _ in range(2000):
        mags = 2.0 ** rng.uniform(-10, 10, 32)
        v = (mags * rng.choice([-1.0, 1.0], 32)).astype(np.float32).astype(np.float64)
        got = exp_aligned_reduce(v)
        exact = v.sum()
        e_max = int(np.floor(np.log2(np.abs(v).max())))
        assert abs(got - exact) <= 32 * 2.0 ** (e_max - 23)
        assert abs(got - exact) <= exp_aligned_error_bound(v)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_exp_aligned_bound_property(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=32) * 10.0 ** rng.integers(-6, 6)
    got = exp_aligned_reduce(v)
    assert abs(got - v.sum()) <= exp_aligned_error_bound(v)


def test_exp_aligned_batched(rng):
    v = rng.normal(size=(4, 32))
    got = exp_aligned_reduce(v)
    for i in range(4):
        assert got[i] == exp_aligned_reduce(v[i])


def test_lane_reduce_rejects_wrong_width():
    import pytest
    with pytest.raises(ValueError):
        lane_group_reduce(np.ones(16))
    with pytest.raises(ValueError):
        exp_aligned_reduce(np.ones(33))
