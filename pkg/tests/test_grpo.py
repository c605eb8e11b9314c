import math

import pytest
from hypothesis import given, strategies as st

from oncv.grpo import (
    SurrogateInput,
    clipped_surrogate,
    group_advantages,
    group_stats,
    grpo_objective,
    ratio_from_logprobs,
)

from oracles import oracle_group_advantages

EPS = 1e-6


def test_zero_variance_group():
    assert group_advantages([2.0, 2.0, 2.0], EPS) == [0.0, 0.0, 0.0]


def test_two_point_group():
    # mean 2, population std 2
    adv = group_advantages([4.0, 0.0], EPS)
    assert adv == [2 / (2 + EPS), -2 / (2 + EPS)]
    assert adv[0] == pytest.approx(0.9999995, abs=1e-12)


def test_singleton_group():
    assert group_advantages([3.0], EPS) == [0.0]


def test_empty_group_rejected():
    with pytest.raises(ValueError):
        group_advantages([], EPS)
    with pytest.raises(ValueError):
        group_advantages([1.0], 0.0)


def test_population_std():
    st_ = group_stats([1.0, 2.0, 3.0, 4.0])
    assert st_.mean == 2.5
    assert st_.std == math.sqrt(1.25)


# rewards on a dyadic grid so that adding an integer shift is exact in floating point
dyadic = st.integers(0, 4 * 64).map(lambda k: k / 64)


@given(st.lists(dyadic, min_size=1, max_size=8))
def test_matches_oracle(rewards):
    assert group_advantages(rewards, EPS) == oracle_group_advantages(rewards, EPS)


@given(st.lists(dyadic, min_size=1, max_size=8), st.integers(-100, 100))
def test_shift_invariance_exact(rewards, c):
    shifted = [r + c for r in rewards]
    assert all(s - c == r for s, r in zip(shifted, rewards))
    assert group_advantages(shifted, EPS) == group_advantages(rewards, EPS)


@given(st.lists(st.floats(0, 4), min_size=1, max_size=8))
def test_zero_mean(rewards):
    adv = group_advantages(rewards, EPS)
    scale = max(1.0, math.fsum(abs(a) for a in adv))
    assert abs(math.fsum(adv)) <= 1e-9 * scale


def test_clipped_surrogate_examples():
    assert clipped_surrogate([SurrogateInput(1.0, 0.7, 0.2)]) == 0.7
    assert clipped_surrogate([SurrogateInput(1.5, 1.0, 0.2)]) == 1.2
    assert clipped_surrogate([SurrogateInput(0.5, -1.0, 0.2)]) == -0.8


def test_clipped_surrogate_is_batch_mean():
    xs = [SurrogateInput(1.0, 0.7), SurrogateInput(1.5, 1.0), SurrogateInput(0.5, -1.0)]
    assert clipped_surrogate(xs) == pytest.approx((0.7 + 1.2 - 0.8) / 3)


@pytest.mark.parametrize(
    "inputs",
    [
        [SurrogateInput(0.0, 1.0)],
        [SurrogateInput(-1.0, 1.0)],
        [SurrogateInput(float("inf"), 1.0)],
        [SurrogateInput(1.0, 1.0, 0.2), SurrogateInput(1.0, 1.0, 0.3)],
        [SurrogateInput(1.0, 1.0, 1.5)],
        [],
    ],
)
def test_clipped_surrogate_rejects(inputs):
    with pytest.raises(ValueError):
        clipped_surrogate(inputs)


ratios = st.floats(0.01, 10.0)
advs = st.floats(-5.0, 5.0)


@given(st.floats(0.8, 1.2), advs)
def test_clip_inactive_inside_band(r, a):
    assert clipped_surrogate([SurrogateInput(r, a, 0.2)]) == r * a


@given(ratios, advs, st.floats(0.05, 0.5))
def test_clip_bound(r, a, eps):
    v = clipped_surrogate([SurrogateInput(r, a, eps)])
    assert abs(v) <= max(r, 1 + eps) * abs(a) + 1e-12


def test_objective_with_kl():
    xs = [SurrogateInput(1.0, 0.5)]
    assert grpo_objective(xs) == 0.5
    assert grpo_objective(xs, [0.2, 0.4]) == pytest.approx(0.5 - 0.001 * 0.3)
    assert grpo_objective(xs, [1.0], kl_coef=0.1) == pytest.approx(0.4)


def test_ratio_from_logprobs():
    assert ratio_from_logprobs(-1.0, -1.0) == 1.0
    assert ratio_from_logprobs(math.log(0.6), math.log(0.4)) == pytest.approx(1.5)
