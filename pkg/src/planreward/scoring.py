"""End-to-end scoring of one raw candidate: parse, format reward, accuracy reward."""

from __future__ import annotations

from dataclasses import dataclass, field

from .accuracy import (
    AccuracyVariant,
    accuracy_for,
    lcs_length,
    lcs_reward,
    overall_reward,
    prefix_reward,
    step_accuracy,
)
from .format_rules import FormatConfig, format_reward
from .model import ActionDictionary, ReferencePlan, RewardBreakdown
from .parsing import extract_steps, parse_model_output

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class ScoringConfig:
    format: FormatConfig = field(default_factory=FormatConfig)
    variant: AccuracyVariant = AccuracyVariant.LCS
    w_format: float = 0.2
    w_accuracy: float = 0.8

    def __post_init__(self) -> None:
        if abs(self.w_format + self.w_accuracy - 1.0) > _WEIGHT_TOL:
            raise ValueError(
                f"overall weights must sum to 1, got {self.w_format + self.w_accuracy}")
        if min(self.w_format, self.w_accuracy) < 0:
            raise ValueError("overall weights must be non-negative")


def score_candidate(raw: str, dictionary: ActionDictionary,
                    reference: ReferencePlan,
                    cfg: ScoringConfig | None = None) -> RewardBreakdown:
    """Score one raw model output against a reference plan.

    All three accuracy variants are recorded; the configured one feeds
    ``r_overall`` together with the format reward.
    """
    cfg = cfg or ScoringConfig()
    resp = parse_model_output(raw)
    r_format, components = format_reward(resp, dictionary, cfg.format)
    predicted = extract_steps(resp, dictionary)

    r_lcs = lcs_reward(predicted, reference.steps)
    r_step = step_accuracy(predicted, reference.steps)
    r_prefix = prefix_reward(predicted, reference.steps)
    selected = accuracy_for(cfg.variant, predicted, reference.steps)

    return RewardBreakdown(
        r_section=components.section,
        r_type=components.step_type,
        r_validity=components.validity,
        r_format=r_format,
        r_lcs=r_lcs,
        r_step=r_step,
        r_prefix=r_prefix,
        r_overall=overall_reward(r_format, selected, cfg.w_format, cfg.w_accuracy),
        lcs_length=lcs_length(predicted, reference.steps),
        reference_length=len(reference.steps),
    )
