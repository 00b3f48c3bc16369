"""Sequence-level accuracy rewards for predicted action plans.

Three variants are computed against the reference sequence: the longest
common subsequence ratio (order-aware but robust to local deviations),
strict position-by-position step accuracy, and the longest-common-prefix
ratio (a progress-style signal that is blind to recovery after an early
mistake). All three divide by the reference length so padding a prediction
with extra steps can never raise the score.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

from .model import ActionStep, normalize_name

_OVERALL_WEIGHT_TOL = 1e-9


class AccuracyVariant(str, Enum):
    LCS = "lcs"
    STEP = "step"
    PREFIX = "prefix"


def _names(seq: Sequence[ActionStep | str]) -> list[str]:
    # Step equality is on normalized names only; ids vary per task by design.
    return [normalize_name(s.name if isinstance(s, ActionStep) else s) for s in seq]


def lcs_length(predicted: Sequence[ActionStep | str],
               reference: Sequence[ActionStep | str]) -> int:
    """Length of the longest common subsequence of the two name sequences."""
    a, b = _names(predicted), _names(reference)
    if not a or not b:
        return 0
    # Rolling single-row DP: current[j] is LCS(a[:i+1], b[:j+1]).
    current = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = current[j]
            if x == y:
                current[j] = prev_diag + 1
            elif current[j - 1] > current[j]:
                current[j] = current[j - 1]
            prev_diag = prev_row
    return current[len(b)]


def lcs_reward(predicted: Sequence[ActionStep | str],
               reference: Sequence[ActionStep | str]) -> float:
    """LCS length divided by the reference length.

    Degenerate conventions: an empty reference is satisfied only by an empty
    prediction (1.0 when both empty, 0.0 otherwise).
    """
    n = len(reference)
    if n == 0:
        return 1.0 if len(predicted) == 0 else 0.0
    return lcs_length(predicted, reference) / n


def step_accuracy(predicted: Sequence[ActionStep | str],
                  reference: Sequence[ActionStep | str]) -> float:
    """Fraction of reference positions matched exactly, position by position."""
    a, b = _names(predicted), _names(reference)
    if not b:
        return 1.0 if not a else 0.0
    matched = sum(1 for x, y in zip(a, b) if x == y)
    return matched / len(b)


def prefix_reward(predicted: Sequence[ActionStep | str],
                  reference: Sequence[ActionStep | str]) -> float:
    """Longest common prefix length divided by the reference length."""
    a, b = _names(predicted), _names(reference)
    if not b:
        return 1.0 if not a else 0.0
    k = 0
    for x, y in zip(a, b):
        if x != y:
            break
        k += 1
    return k / len(b)


def accuracy_for(variant: AccuracyVariant,
                 predicted: Sequence[ActionStep | str],
                 reference: Sequence[ActionStep | str]) -> float:
    if variant == AccuracyVariant.LCS:
        return lcs_reward(predicted, reference)
    if variant == AccuracyVariant.STEP:
        return step_accuracy(predicted, reference)
    return prefix_reward(predicted, reference)


def overall_reward(format_score: float, accuracy: float,
                   w_format: float = 0.2, w_accuracy: float = 0.8) -> float:
    """Weighted combination of the format and accuracy rewards."""
    if abs(w_format + w_accuracy - 1.0) > _OVERALL_WEIGHT_TOL:
        raise ValueError(f"overall weights must sum to 1, got {w_format + w_accuracy}")
    return w_format * format_score + w_accuracy * accuracy
