"""Structural (format) reward: section presence, step well-formedness, validity.

Three per-step/per-field averages combined with configurable weights
(defaults 0.3 / 0.3 / 0.4). Under the strict tag policy an output that is not
wrapped in closed think/answer tag pairs earns zero format reward outright.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    REQUIRED_FIELDS,
    ActionDictionary,
    PlanResponse,
    RawStep,
    is_plain_int,
    normalize_name,
)

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class FormatConfig:
    w_section: float = 0.3
    w_type: float = 0.3
    w_validity: float = 0.4
    strict_tags: bool = True
    order_sensitive: bool = False

    def __post_init__(self) -> None:
        total = self.w_section + self.w_type + self.w_validity
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"format weights must sum to 1, got {total}")
        if min(self.w_section, self.w_type, self.w_validity) < 0:
            raise ValueError("format weights must be non-negative")


@dataclass(frozen=True)
class FormatComponents:
    section: float
    step_type: float
    validity: float


def is_wellformed(step: RawStep) -> bool:
    """A step is well-formed when its id is an integer and its name a non-empty string."""
    return (
        is_plain_int(step.action_id_value)
        and isinstance(step.name_value, str)
        and len(step.name_value) > 0
    )


def section_reward(resp: PlanResponse, order_sensitive: bool = False) -> float:
    """Fraction of the four required fields present with the correct kind.

    The three text fields must be strings and the executable plan an array;
    the parser already enforced kinds, so presence is what gets counted here.
    With ``order_sensitive`` set, fields additionally only score when they
    appear in canonical relative order (fields outside the longest
    canonically-ordered subsequence are treated as absent).
    """
    present = [
        resp.visual_state_description is not None,
        resp.reasoning_and_reflection is not None,
        resp.language_plan is not None,
        resp.executable_plan is not None,
    ]
    if not order_sensitive:
        return sum(present) / len(REQUIRED_FIELDS)

    present_names = {name for name, ok in zip(REQUIRED_FIELDS, present) if ok}
    observed = [name for name in resp.field_order if name in present_names]
    kept = _longest_ordered_subset(observed)
    return len(kept) / len(REQUIRED_FIELDS)


def type_reward(resp: PlanResponse) -> float:
    """Fraction of plan steps that are well-formed.

    An absent or empty plan scores 0, not 1: a degenerate policy must not be
    able to collect format reward by emitting no actions at all.
    """
    steps = resp.executable_plan
    if not steps:
        return 0.0
    return sum(1 for s in steps if is_wellformed(s)) / len(steps)


def validity_reward(resp: PlanResponse, dictionary: ActionDictionary) -> float:
    """Fraction of well-formed steps whose name matches the dictionary entry for their id.

    Ids absent from the dictionary score 0 for their step (hallucinated
    actions are exactly what this penalizes); with no well-formed steps the
    reward is 0.
    """
    candidates = [s for s in (resp.executable_plan or ()) if is_wellformed(s)]
    if not candidates:
        return 0.0
    matched = 0
    for step in candidates:
        expected = dictionary.normalized_name_for(step.action_id_value)
        if expected is not None and normalize_name(step.name_value) == expected:
            matched += 1
    return matched / len(candidates)


def weighted_format(section: float, step_type: float, validity: float,
                    cfg: FormatConfig) -> float:
    return cfg.w_section * section + cfg.w_type * step_type + cfg.w_validity * validity


def format_reward(resp: PlanResponse, dictionary: ActionDictionary,
                  cfg: FormatConfig | None = None) -> tuple[float, FormatComponents]:
    """Composite format reward and its three components.

    With ``strict_tags`` on, an output missing either closed tag pair is
    assigned zero outright, components included, so the composite always
    equals the weighted sum of the reported components. Parse diagnostics on
    the response still describe what the fallback parse found.
    """
    cfg = cfg or FormatConfig()
    if cfg.strict_tags and (resp.raw_think is None or resp.raw_answer is None):
        return 0.0, FormatComponents(0.0, 0.0, 0.0)
    components = FormatComponents(
        section=section_reward(resp, cfg.order_sensitive),
        step_type=type_reward(resp),
        validity=validity_reward(resp, dictionary),
    )
    score = weighted_format(components.section, components.step_type,
                            components.validity, cfg)
    return score, components


def _longest_ordered_subset(observed: list[str]) -> list[str]:
    """Longest subsequence of ``observed`` that respects canonical field order."""
    ranks = [REQUIRED_FIELDS.index(name) for name in observed]
    # Classic quadratic longest-increasing-subsequence; at most 4 elements.
    best_at: list[list[int]] = []
    for i, rank in enumerate(ranks):
        chain = [i]
        for prior in best_at:
            if ranks[prior[-1]] < rank and len(prior) + 1 > len(chain):
                chain = prior + [i]
        best_at.append(chain)
    best = max(best_at, key=len, default=[])
    return [observed[i] for i in best]
