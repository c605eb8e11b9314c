"""Claim-verification environment: trajectory protocol, rewards, GRPO advantages, evaluation."""

__version__ = "0.1.0"

from .protocol import Label, Mode, ParsedAnswer, Trajectory, parse_answer_block, parse_transcript, validate_format
from .reward import GoldAnnotation, RewardBreakdown, final_reward
from .grpo import clipped_surrogate, group_advantages

__all__ = [
    "Label",
    "Mode",
    "ParsedAnswer",
    "Trajectory",
    "parse_answer_block",
    "parse_transcript",
    "validate_format",
    "GoldAnnotation",
    "RewardBreakdown",
    "final_reward",
    "clipped_surrogate",
    "group_advantages",
]
