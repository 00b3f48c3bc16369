"""Group-relative policy optimization: advantages, clipped objective, gradient.

Rewards are standardized within each group of N candidate responses to the
same prompt (no learned critic). The objective per candidate is the PPO-style
clipped surrogate minus a KL penalty against a reference policy, estimated
per token with the low-variance estimator exp(d) - d - 1 where
d = logp_ref - logp_new.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import RolloutCandidate, RolloutGroup

#: Log-ratios are clamped here before exponentiation; unreachable in sane
#: training, it only guards the objective against overflow on garbage inputs.
LOG_RATIO_CLAMP = 30.0


class KlEstimator(str, Enum):
    LOW_VAR_K3 = "low_var_k3"


class TokenAggregation(str, Enum):
    """How per-token log-ratios combine into a candidate's objective term.

    ``token_mean`` averages per-token terms within each candidate (the
    practical default: sequence-level exponentiation of summed log-ratios
    overflows for long plans). ``sequence`` uses one ratio per candidate
    computed from summed log-probs.
    """

    TOKEN_MEAN = "token_mean"
    SEQUENCE = "sequence"


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 5
    clip_epsilon: float = 0.2
    kl_coef: float = 0.01
    std_floor: float = 1e-8
    kl_estimator: KlEstimator = KlEstimator.LOW_VAR_K3
    aggregation: TokenAggregation = TokenAggregation.TOKEN_MEAN

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_coef < 0.0:
            raise ValueError("kl_coef must be non-negative")
        if self.std_floor <= 0.0:
            raise ValueError("std_floor must be positive")


@dataclass(frozen=True)
class GroupAdvantages:
    rewards: tuple[float, ...]
    mean: float
    std: float
    advantages: tuple[float, ...]


def group_advantages(rewards: list[float] | tuple[float, ...],
                     cfg: GrpoConfig | None = None) -> GroupAdvantages:
    """Standardize rewards against their group mean and standard deviation.

    Uses the population standard deviation (divide by N); the configured
    floor keeps the denominator positive, so a group with identical rewards
    gets advantages of exactly zero.
    """
    cfg = cfg or GrpoConfig()
    values = [float(r) for r in rewards]
    if len(values) < 2:
        raise ValueError("advantage normalization needs at least 2 rewards")
    if not all(math.isfinite(v) for v in values):
        raise ValueError("rewards must be finite")

    n = len(values)
    mean = math.fsum(values) / n
    if max(values) == min(values):
        # Exactly-uniform groups carry no ranking signal at all.
        return GroupAdvantages(tuple(values), values[0], 0.0, (0.0,) * n)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)
    denom = max(std, cfg.std_floor)
    return GroupAdvantages(tuple(values), mean, std,
                           tuple((v - mean) / denom for v in values))


def _clamped(log_ratio: float) -> float:
    return min(max(log_ratio, -LOG_RATIO_CLAMP), LOG_RATIO_CLAMP)


def clipped_term(logp_new: float, logp_old: float, advantage: float,
                 epsilon: float) -> float:
    """min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) with ratio = exp(new - old)."""
    ratio = math.exp(_clamped(logp_new - logp_old))
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


def kl_penalty(logp_new: float, logp_ref: float) -> float:
    """Low-variance KL estimate exp(d) - d - 1, d = logp_ref - logp_new.

    Non-negative for any d, and zero exactly when the log-probs agree. The
    outer max only strips the ~1e-16 float dust the formula leaves near zero.
    """
    d = _clamped(logp_ref - logp_new)
    return max(0.0, math.exp(d) - d - 1.0)


def _clipped_term_grad(logp_new: float, logp_old: float, advantage: float,
                       epsilon: float) -> float:
    """d/d(logp_new) of the clipped term; zero on the clipped branch."""
    log_ratio = logp_new - logp_old
    if abs(log_ratio) >= LOG_RATIO_CLAMP:
        return 0.0
    ratio = math.exp(log_ratio)
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    if ratio * advantage <= clipped * advantage:
        return ratio * advantage
    return 0.0


def _kl_penalty_grad(logp_new: float, logp_ref: float) -> float:
    """d/d(logp_new) of the KL estimate."""
    d = logp_ref - logp_new
    if abs(d) >= LOG_RATIO_CLAMP:
        return 0.0
    return 1.0 - math.exp(d)


def _check_aligned(candidate: RolloutCandidate) -> int:
    t = len(candidate.logp_new)
    if len(candidate.logp_old) != t or len(candidate.logp_ref) != t:
        raise ValueError("log-prob sequences within a candidate must have equal lengths")
    return t


def _candidate_term(logp_new: tuple[float, ...], candidate: RolloutCandidate,
                    cfg: GrpoConfig) -> float:
    t = len(logp_new)
    if t == 0:
        return 0.0
    if cfg.aggregation == TokenAggregation.SEQUENCE:
        new, old, ref = sum(logp_new), sum(candidate.logp_old), sum(candidate.logp_ref)
        return (clipped_term(new, old, candidate.advantage, cfg.clip_epsilon)
                - cfg.kl_coef * kl_penalty(new, ref))
    total = 0.0
    for i in range(t):
        total += clipped_term(logp_new[i], candidate.logp_old[i],
                              candidate.advantage, cfg.clip_epsilon)
        total -= cfg.kl_coef * kl_penalty(logp_new[i], candidate.logp_ref[i])
    return total / t


def grpo_objective(group: RolloutGroup, cfg: GrpoConfig | None = None) -> float:
    """Group objective from the stored log-probs: mean over candidates of
    the per-candidate aggregated clipped-minus-KL term."""
    cfg = cfg or GrpoConfig()
    total = 0.0
    for candidate in group.candidates:
        _check_aligned(candidate)
        total += _candidate_term(candidate.logp_new, candidate, cfg)
    return total / len(group.candidates)


def objective_for_policy(group: RolloutGroup, policy,
                         cfg: GrpoConfig | None = None) -> float:
    """Group objective with logp_new recomputed under ``policy``.

    This is the function of the policy parameters that ``grpo_gradient``
    differentiates; the stored old/ref log-probs stay fixed.
    """
    cfg = cfg or GrpoConfig()
    total = 0.0
    for candidate in group.candidates:
        _check_aligned(candidate)
        fresh = tuple(policy.logp(group.prompt_id, pos, sym)
                      for pos, sym in candidate.tokens)
        if len(fresh) != len(candidate.logp_old):
            raise ValueError("token and log-prob sequences must have equal lengths")
        total += _candidate_term(fresh, candidate, cfg)
    return total / len(group.candidates)


def grpo_gradient(group: RolloutGroup, policy,
                  cfg: GrpoConfig | None = None) -> np.ndarray:
    """Analytic gradient of the group objective w.r.t. the group task's logits.

    The chain rule runs through logp_new only: per token, the surrogate
    contributes ratio * advantage on the unclipped branch (zero when the
    clip is active) and the KL penalty contributes kl_coef * (exp(d) - 1).
    Advantages are treated as constants. The returned array matches the
    shape of ``policy.logits_for(group.prompt_id)``.
    """
    cfg = cfg or GrpoConfig()
    task_id = group.prompt_id
    grad = np.zeros_like(policy.logits_for(task_id))
    n = len(group.candidates)
    for candidate in group.candidates:
        _check_aligned(candidate)
        t = len(candidate.tokens)
        if t == 0:
            continue
        if len(candidate.logp_old) != t:
            raise ValueError("token and log-prob sequences must have equal lengths")
        fresh = [policy.logp(task_id, pos, sym) for pos, sym in candidate.tokens]
        if cfg.aggregation == TokenAggregation.SEQUENCE:
            new, old = sum(fresh), sum(candidate.logp_old)
            ref = sum(candidate.logp_ref)
            shared = (_clipped_term_grad(new, old, candidate.advantage, cfg.clip_epsilon)
                      - cfg.kl_coef * _kl_penalty_grad(new, ref)) / n
            for pos, sym in candidate.tokens:
                grad[pos] += shared * policy.logp_grad(task_id, pos, sym)
        else:
            for index, (pos, sym) in enumerate(candidate.tokens):
                w = (_clipped_term_grad(fresh[index], candidate.logp_old[index],
                                        candidate.advantage, cfg.clip_epsilon)
                     - cfg.kl_coef * _kl_penalty_grad(fresh[index], candidate.logp_ref[index]))
                grad[pos] += (w / (n * t)) * policy.logp_grad(task_id, pos, sym)
    return grad
