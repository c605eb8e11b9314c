"""Group-relative advantages and the clipped surrogate objective value.

Group statistics are computed over exact rationals so that the centred
rewards (and hence the advantages) do not depend on the group's offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

DEFAULT_EPSILON_NORM = 1e-6
DEFAULT_CLIP_EPSILON = 0.2
DEFAULT_KL_COEF = 0.001


@dataclass(frozen=True)
class GroupStats:
    mean: float
    std: float
    advantages: tuple[float, ...]


def group_stats(rewards: Sequence[float], epsilon_norm: float = DEFAULT_EPSILON_NORM) -> GroupStats:
    if len(rewards) == 0:
        raise ValueError("group must contain at least one reward")
    if not epsilon_norm > 0:
        raise ValueError("epsilon_norm must be positive")
    exact = [Fraction(r) for r in rewards]
    n = len(exact)
    mu = sum(exact, Fraction(0)) / n
    centred = [r - mu for r in exact]
    var = sum((c * c for c in centred), Fraction(0)) / n
    sigma = math.sqrt(var)
    denom = Fraction(sigma + epsilon_norm)
    return GroupStats(float(mu), sigma, tuple(float(c / denom) for c in centred))


def group_advantages(rewards: Sequence[float], epsilon_norm: float = DEFAULT_EPSILON_NORM) -> list[float]:
    """(R_i - mean) / (population std + epsilon_norm), in input order."""
    return list(group_stats(rewards, epsilon_norm).advantages)


@dataclass(frozen=True)
class SurrogateInput:
    ratio: float
    advantage: float
    clip_epsilon: float = DEFAULT_CLIP_EPSILON


def ratio_from_logprobs(new_logprob: float, old_logprob: float) -> float:
    return math.exp(new_logprob - old_logprob)


def _clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def surrogate_terms(inputs: Sequence[SurrogateInput]) -> list[float]:
    if not inputs:
        raise ValueError("empty surrogate batch")
    eps = inputs[0].clip_epsilon
    if not 0 < eps < 1:
        raise ValueError("clip_epsilon must lie in (0, 1)")
    terms = []
    for x in inputs:
        if x.clip_epsilon != eps:
            raise ValueError("clip_epsilon must be identical across the batch")
        if not (math.isfinite(x.ratio) and x.ratio > 0):
            raise ValueError(f"ratio must be finite and positive, got {x.ratio}")
        terms.append(min(x.ratio * x.advantage, _clip(x.ratio, 1 - eps, 1 + eps) * x.advantage))
    return terms


def clipped_surrogate(inputs: Sequence[SurrogateInput]) -> float:
    terms = surrogate_terms(inputs)
    return math.fsum(terms) / len(terms)


def grpo_objective(
    inputs: Sequence[SurrogateInput],
    kl_estimates: Optional[Sequence[float]] = None,
    kl_coef: float = DEFAULT_KL_COEF,
) -> float:
    """Clipped surrogate minus ``kl_coef`` times the mean supplied KL estimate."""
    value = clipped_surrogate(inputs)
    if kl_estimates:
        value -= kl_coef * (math.fsum(kl_estimates) / len(kl_estimates))
    return value
