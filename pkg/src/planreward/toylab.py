"""Synthetic planning microworld with a toy autoregressive policy.

Closes the optimization loop end to end at desk scale: sample candidate
plans from a tabular softmax policy, render them through the structured
response template, score them with the reward engine, normalize rewards
within each group, and ascend the clipped objective. Also provides labeled
plan corruptions and a head-to-head comparison of the accuracy rewards.

Everything is a pure function of (inputs, seed): per-task RNG streams are
split from the master seed, so results never depend on execution order.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .accuracy import AccuracyVariant, accuracy_for
from .grpo import GrpoConfig, group_advantages, grpo_gradient, grpo_objective, kl_penalty
from .model import (
    ActionDictionary,
    ActionStep,
    ReferencePlan,
    RolloutCandidate,
    RolloutGroup,
    normalize_name,
)
from .parsing import render_response
from .scoring import ScoringConfig, score_candidate

_VERBS = ("pick up", "put down", "go to", "open", "close",
          "turn on", "turn off", "slice", "wash", "place")
_OBJECTS = ("the apple", "the table", "the drawer", "the lamp", "the knife",
            "the mug", "the sink", "the sofa", "the box", "the shelf")
_NAME_POOL = tuple(f"{v} {o}" for v in _VERBS for o in _OBJECTS)

PERTURBATION_LABELS = ("identity", "first_step_error", "adjacent_swap", "deletion",
                       "insertion", "padding", "reversal", "truncation")
_ORDER_PERTURBATIONS = {"adjacent_swap", "reversal"}


@dataclass(frozen=True)
class LabConfig:
    """Microworld and trainer settings; defaults are the easy-task regime."""

    num_tasks: int = 8
    vocab_size: int = 6
    length_range: tuple[int, int] = (3, 5)
    long_horizon_range: tuple[int, int] = (10, 20)
    long_horizon_fraction: float = 0.0
    max_len_factor: float = 2.0
    min_steps: int = 1
    slip_rate: float = 0.0
    temperature: float = 1.0
    steps: int = 300
    learning_rate: float = 2.0
    warm_start: bool = False
    warm_start_strength: float = 2.0


@dataclass(frozen=True)
class ToyTask:
    task_id: str
    action_dictionary: ActionDictionary
    reference_plan: ReferencePlan
    instruction_seed: int
    long_horizon: bool = False


@dataclass(frozen=True)
class StepStats:
    """Aggregate measurements for one optimization step."""

    step: int
    mean_accuracy: float
    mean_format: float
    mean_overall: float
    objective: float
    grad_norm: float
    kl_mean: float
    mean_lcs: float
    mean_step_acc: float
    mean_prefix: float
    zero_variance_fraction: float
    mean_lcs_long: float | None = None
    zero_variance_fraction_long: float | None = None


@dataclass(frozen=True)
class TrainReport:
    records: tuple[StepStats, ...] = field(default_factory=tuple)


def generate_tasks(count: int, cfg: LabConfig | None = None,
                   seed: int = 0) -> list[ToyTask]:
    """Deterministically build ``count`` tasks with per-task randomized ids.

    The trailing ``long_horizon_fraction`` of tasks draw their reference
    length from ``long_horizon_range`` instead of ``length_range``.
    References never repeat the same action twice in a row (real plans
    revisit actions, but not as immediate duplicates), which keeps order
    perturbations meaningful.
    """
    cfg = cfg or LabConfig()
    if count < 1:
        raise ValueError("count must be at least 1")
    if cfg.vocab_size < 2:
        raise ValueError("vocabulary size must be at least 2")
    if cfg.vocab_size > len(_NAME_POOL):
        raise ValueError(f"vocabulary size capped at {len(_NAME_POOL)}")
    for lo, hi in (cfg.length_range, cfg.long_horizon_range):
        if lo < 1 or hi < lo:
            raise ValueError(f"empty length range ({lo}, {hi})")

    n_long = min(count, int(round(count * cfg.long_horizon_fraction)))
    tasks = []
    for index in range(count):
        rng = np.random.default_rng((seed, index))
        long_horizon = index >= count - n_long
        names = [str(_NAME_POOL[i])
                 for i in rng.choice(len(_NAME_POOL), size=cfg.vocab_size, replace=False)]
        ids = [int(i) for i in rng.permutation(cfg.vocab_size * 10 + 17)[:cfg.vocab_size]]
        dictionary = ActionDictionary(dict(zip(ids, names)), task_id=f"task-{index:03d}")

        lo, hi = cfg.long_horizon_range if long_horizon else cfg.length_range
        length = int(rng.integers(lo, hi + 1))
        steps = []
        previous = -1
        for _ in range(length):
            choice = int(rng.integers(cfg.vocab_size - (1 if previous >= 0 else 0)))
            if previous >= 0 and choice >= previous:
                choice += 1
            steps.append(ActionStep(ids[choice], names[choice]))
            previous = choice
        tasks.append(ToyTask(
            task_id=f"task-{index:03d}",
            action_dictionary=dictionary,
            reference_plan=ReferencePlan(tuple(steps)),
            instruction_seed=int(rng.integers(2 ** 31)),
            long_horizon=long_horizon,
        ))
    return tasks


class ToyPolicy:
    """Tabular softmax policy over (task, position, action-or-stop).

    Conditions on task and position only; this is the smallest policy class
    for which sequence order is learnable while gradients stay hand-checkable.
    The stop symbol is masked for the first ``min_steps`` positions so every
    sampled plan has at least that many actions.
    """

    def __init__(self, tasks: list[ToyTask], *, temperature: float = 1.0,
                 max_len_factor: float = 2.0, min_steps: int = 1,
                 max_len_cap: int | None = None):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if min_steps < 0:
            raise ValueError("min_steps must be non-negative")
        self.temperature = float(temperature)
        self.min_steps = int(min_steps)
        self._vocab: dict[str, list[str]] = {}
        self._ids: dict[str, list[int]] = {}
        self.logits: dict[str, np.ndarray] = {}
        self._versions: dict[str, int] = {}
        self._log_row_cache: dict[str, tuple[int, np.ndarray]] = {}
        for task in tasks:
            names = task.action_dictionary.names()
            ids = sorted(task.action_dictionary.entries)
            cap = max_len_cap if max_len_cap is not None else int(
                round(max_len_factor * len(task.reference_plan)))
            cap = max(cap, max(1, self.min_steps))
            self._vocab[task.task_id] = names
            self._ids[task.task_id] = ids
            self.logits[task.task_id] = np.zeros((cap, len(names) + 1))
            self._versions[task.task_id] = 0

    # -- structure ---------------------------------------------------------

    def task_ids(self) -> list[str]:
        return list(self.logits)

    def vocab(self, task_id: str) -> list[str]:
        return self._vocab[task_id]

    def stop_index(self, task_id: str) -> int:
        return len(self._vocab[task_id])

    def max_len(self, task_id: str) -> int:
        return self.logits[task_id].shape[0]

    def logits_for(self, task_id: str) -> np.ndarray:
        return self.logits[task_id]

    def snapshot(self) -> "ToyPolicy":
        clone = ToyPolicy.__new__(ToyPolicy)
        clone.temperature = self.temperature
        clone.min_steps = self.min_steps
        clone._vocab = {k: list(v) for k, v in self._vocab.items()}
        clone._ids = {k: list(v) for k, v in self._ids.items()}
        clone.logits = {k: v.copy() for k, v in self.logits.items()}
        clone._versions = dict(self._versions)
        clone._log_row_cache = {}
        return clone

    # -- distributions -----------------------------------------------------

    def log_rows(self, task_id: str) -> np.ndarray:
        """Stable log-softmax rows for every position, stop masked where required."""
        cached = self._log_row_cache.get(task_id)
        if cached is not None and cached[0] == self._versions[task_id]:
            return cached[1]
        z = self.logits[task_id] / self.temperature
        z = z.copy()
        if self.min_steps > 0:
            z[:min(self.min_steps, z.shape[0]), self.stop_index(task_id)] = -np.inf
        peak = np.max(z, axis=1, keepdims=True)
        rows = z - (peak + np.log(np.sum(np.exp(z - peak), axis=1, keepdims=True)))
        self._log_row_cache[task_id] = (self._versions[task_id], rows)
        return rows

    def logp(self, task_id: str, position: int, symbol: int) -> float:
        return float(self.log_rows(task_id)[position, symbol])

    def logp_grad(self, task_id: str, position: int, symbol: int) -> np.ndarray:
        """d logp(symbol) / d logits[position, :]; masked entries stay zero."""
        row = self.log_rows(task_id)[position]
        probs = np.exp(row)
        grad = -probs
        grad[symbol] += 1.0
        grad[probs == 0.0] = 0.0
        return grad / self.temperature

    def apply_gradient(self, task_id: str, grad: np.ndarray, lr: float) -> None:
        self.logits[task_id] += lr * grad
        self._versions[task_id] += 1

    def warm_start_to_reference(self, task: ToyTask, strength: float = 2.0) -> None:
        """Bias logits toward emitting the reference then stopping."""
        names = self._vocab[task.task_id]
        index = {normalize_name(n): i for i, n in enumerate(names)}
        table = self.logits[task.task_id]
        for pos, step in enumerate(task.reference_plan.steps):
            if pos >= table.shape[0]:
                break
            table[pos, index[normalize_name(step.name)]] += strength
        stop_pos = len(task.reference_plan)
        if stop_pos < table.shape[0]:
            table[stop_pos, self.stop_index(task.task_id)] += strength
        self._versions[task.task_id] += 1

    # -- sampling ----------------------------------------------------------

    def sample_rollout(self, task_id: str, rng: np.random.Generator,
                       slip_rate: float = 0.0) -> list[tuple[int, int]]:
        """One autoregressive rollout: (position, symbol) pairs until stop or cap.

        With a positive ``slip_rate``, each position after the first is
        consumed outright with that probability: the environment skips it and
        nothing is emitted there. Slips are the desk-scale stand-in for the
        alignment slips long plans suffer from in practice; the policy cannot
        optimize them away, so position-exact rewards stay noisy on long
        horizons while subsequence-based ones do not.
        """
        rows = np.exp(self.log_rows(task_id))
        stop = self.stop_index(task_id)
        tokens: list[tuple[int, int]] = []
        for position in range(rows.shape[0]):
            if slip_rate > 0.0 and position > 0 and rng.random() < slip_rate:
                continue
            cdf = np.cumsum(rows[position])
            symbol = min(int(np.searchsorted(cdf, rng.random(), side="right")), stop)
            tokens.append((position, symbol))
            if symbol == stop:
                break
        return tokens

    def names_for(self, task_id: str, tokens: list[tuple[int, int]]) -> list[str]:
        names = self._vocab[task_id]
        return [names[s] for _, s in tokens if s < len(names)]


def sample_group(policy: ToyPolicy, task: ToyTask, n_candidates: int,
                 seed, ref_policy: ToyPolicy | None = None,
                 slip_rate: float = 0.0) -> RolloutGroup:
    """Sample N candidates for one task and render them through the template.

    Per-token log-probs under the sampling policy are recorded as both the
    current and old values (a single optimization epoch per batch keeps them
    equal at gradient time); reference log-probs come from ``ref_policy``
    when given, else from the sampling policy itself.
    """
    if n_candidates < 2:
        raise ValueError("need at least 2 candidates per group")
    rng = np.random.default_rng(seed)
    ref = ref_policy if ref_policy is not None else policy
    name_to_id = {normalize_name(name): task.action_dictionary.ids_for_name(name)[0]
                  for name in task.action_dictionary.entries.values()}
    candidates = []
    for _ in range(n_candidates):
        tokens = policy.sample_rollout(task.task_id, rng, slip_rate)
        logps = tuple(policy.logp(task.task_id, pos, sym) for pos, sym in tokens)
        ref_logps = tuple(ref.logp(task.task_id, pos, sym) for pos, sym in tokens)
        steps = [ActionStep(name_to_id[normalize_name(name)], name)
                 for name in policy.names_for(task.task_id, tokens)]
        candidates.append(RolloutCandidate(
            text=render_response(steps),
            tokens=tuple(tokens),
            logp_new=logps,
            logp_old=logps,
            logp_ref=ref_logps,
        ))
    return RolloutGroup(prompt_id=task.task_id, candidates=tuple(candidates))


def score_group(group: RolloutGroup, task: ToyTask, scoring_cfg: ScoringConfig,
                grpo_cfg: GrpoConfig) -> RolloutGroup:
    """Attach reward breakdowns and group-normalized advantages to a group."""
    breakdowns = [score_candidate(c.text, task.action_dictionary,
                                  task.reference_plan, scoring_cfg)
                  for c in group.candidates]
    advantages = group_advantages([b.r_overall for b in breakdowns], grpo_cfg)
    scored = tuple(
        dataclasses.replace(c, breakdown=b, reward=b.r_overall, advantage=a)
        for c, b, a in zip(group.candidates, breakdowns, advantages.advantages))
    return RolloutGroup(prompt_id=group.prompt_id, candidates=scored)


def _selected_accuracy(breakdown, variant: AccuracyVariant) -> float:
    if variant == AccuracyVariant.LCS:
        return breakdown.r_lcs
    if variant == AccuracyVariant.STEP:
        return breakdown.r_step
    return breakdown.r_prefix


def train(tasks: list[ToyTask], policy: ToyPolicy, grpo_cfg: GrpoConfig,
          reward_variant: AccuracyVariant, steps: int, lr: float,
          seed: int = 0, scoring_cfg: ScoringConfig | None = None,
          slip_rate: float = 0.0) -> TrainReport:
    """Run the sample -> score -> normalize -> ascend loop.

    Fully deterministic for a fixed seed: candidate sampling uses per-(step,
    task) RNG streams and gradients accumulate in task order. Aborts on any
    non-finite objective or gradient.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    scoring_cfg = scoring_cfg or ScoringConfig(variant=reward_variant)
    if scoring_cfg.variant != reward_variant:
        scoring_cfg = dataclasses.replace(scoring_cfg, variant=reward_variant)
    ref_policy = policy.snapshot()
    long_tasks = [t.task_id for t in tasks if t.long_horizon]
    records = []

    for step in range(steps):
        grads: list[tuple[str, np.ndarray]] = []
        objective_sum = 0.0
        kl_sum, kl_tokens = 0.0, 0
        zero_variance = zero_variance_long = 0
        acc_sum = fmt_sum = overall_sum = 0.0
        lcs_sum = step_sum = prefix_sum = 0.0
        lcs_long_sum, long_count, total = 0.0, 0, 0

        for task_index, task in enumerate(tasks):
            group = sample_group(policy, task, grpo_cfg.group_size,
                                 (seed, step, task_index), ref_policy, slip_rate)
            scored = score_group(group, task, scoring_cfg, grpo_cfg)
            grads.append((task.task_id, grpo_gradient(scored, policy, grpo_cfg)))
            objective_sum += grpo_objective(scored, grpo_cfg)

            rewards = scored.rewards()
            if max(rewards) == min(rewards):
                zero_variance += 1
                if task.long_horizon:
                    zero_variance_long += 1
            for candidate in scored.candidates:
                b = candidate.breakdown
                acc_sum += _selected_accuracy(b, reward_variant)
                fmt_sum += b.r_format
                overall_sum += b.r_overall
                lcs_sum += b.r_lcs
                step_sum += b.r_step
                prefix_sum += b.r_prefix
                if task.task_id in long_tasks:
                    lcs_long_sum += b.r_lcs
                    long_count += 1
                total += 1
                for lp_new, lp_ref in zip(candidate.logp_new, candidate.logp_ref):
                    kl_sum += kl_penalty(lp_new, lp_ref)
                    kl_tokens += 1

        objective = objective_sum / len(tasks)
        grad_norm = math.sqrt(sum(float(np.sum(g * g)) for _, g in grads))
        if not (math.isfinite(objective) and math.isfinite(grad_norm)):
            raise ValueError(f"non-finite training values at step {step}")
        for task_id, grad in grads:
            policy.apply_gradient(task_id, grad, lr)

        records.append(StepStats(
            step=step,
            mean_accuracy=acc_sum / total,
            mean_format=fmt_sum / total,
            mean_overall=overall_sum / total,
            objective=objective,
            grad_norm=grad_norm,
            kl_mean=kl_sum / kl_tokens if kl_tokens else 0.0,
            mean_lcs=lcs_sum / total,
            mean_step_acc=step_sum / total,
            mean_prefix=prefix_sum / total,
            zero_variance_fraction=zero_variance / len(tasks),
            mean_lcs_long=(lcs_long_sum / long_count) if long_count else None,
            zero_variance_fraction_long=(
                zero_variance_long / len(long_tasks) if long_tasks else None),
        ))
    return TrainReport(tuple(records))


def perturbation_suite(reference: ReferencePlan, dictionary: ActionDictionary,
                       kinds: set[str] | None = None,
                       seed: int = 0) -> list[tuple[str, list[ActionStep]]]:
    """Labeled corruptions of a reference plan.

    Covers the classic failure modes: wrong first step (the error-recovery
    probe), swapped neighbors, dropped and inserted actions, padding with
    extra valid actions, full reversal, and truncation at half length.
    """
    labels = PERTURBATION_LABELS if kinds is None else tuple(
        l for l in PERTURBATION_LABELS if l in kinds)
    unknown = set() if kinds is None else set(kinds) - set(PERTURBATION_LABELS)
    if unknown:
        raise ValueError(f"unknown perturbation kinds: {sorted(unknown)}")
    steps = list(reference.steps)
    n = len(steps)
    if n < 2 and _ORDER_PERTURBATIONS & set(labels):
        raise ValueError("order perturbations need a reference of length >= 2")
    rng = np.random.default_rng(seed)
    sorted_ids = sorted(dictionary.entries)

    def random_action() -> ActionStep:
        action_id = sorted_ids[int(rng.integers(len(sorted_ids)))]
        return ActionStep(action_id, normalize_name(dictionary.entries[action_id]))

    out = []
    for label in labels:
        if label == "identity":
            out.append((label, list(steps)))
        elif label == "first_step_error":
            out.append((label, [_foreign_step(dictionary)] + steps[1:]))
        elif label == "adjacent_swap":
            distinct = [i for i in range(n - 1)
                        if normalize_name(steps[i].name) != normalize_name(steps[i + 1].name)]
            i = distinct[int(rng.integers(len(distinct)))] if distinct else 0
            swapped = list(steps)
            swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
            out.append((label, swapped))
        elif label == "deletion":
            i = int(rng.integers(n))
            out.append((label, steps[:i] + steps[i + 1:]))
        elif label == "insertion":
            i = int(rng.integers(n + 1))
            out.append((label, steps[:i] + [random_action()] + steps[i:]))
        elif label == "padding":
            extra = [random_action() for _ in range(int(rng.integers(1, 6)))]
            out.append((label, list(steps) + extra))
        elif label == "reversal":
            out.append((label, list(reversed(steps))))
        elif label == "truncation":
            out.append((label, steps[:n // 2]))
    return out


def _foreign_step(dictionary: ActionDictionary) -> ActionStep:
    taken = {normalize_name(n) for n in dictionary.entries.values()}
    name = "perform an unknown maneuver"
    while normalize_name(name) in taken:
        name += " indeed"
    return ActionStep(max(dictionary.entries) + 1, name)


def compare_rewards(tasks: list[ToyTask], kinds: set[str] | None = None,
                    seed: int = 0) -> list[dict[str, object]]:
    """Mean accuracy reward per perturbation label for each reward variant.

    Each task contributes one mixed group holding all its perturbations;
    advantages are normalized within that group per variant, and the mean
    absolute advantage per label measures how much ranking signal the
    variant extracts from that corruption.
    """
    if not tasks:
        raise ValueError("need at least one task")
    variants = (AccuracyVariant.LCS, AccuracyVariant.STEP, AccuracyVariant.PREFIX)
    sums: dict[tuple[str, str], float] = {}
    adv_sums: dict[tuple[str, str], float] = {}
    labels: list[str] = []
    for task_index, task in enumerate(tasks):
        suite = perturbation_suite(task.reference_plan, task.action_dictionary,
                                   kinds, seed=(seed, task_index))
        labels = [label for label, _ in suite]
        for variant in variants:
            rewards = [accuracy_for(variant, predicted, task.reference_plan.steps)
                       for _, predicted in suite]
            advantages = group_advantages(rewards, GrpoConfig(group_size=max(
                2, len(rewards)))).advantages if len(rewards) >= 2 else [0.0] * len(rewards)
            for (label, _), reward, adv in zip(suite, rewards, advantages):
                sums[label, variant.value] = sums.get((label, variant.value), 0.0) + reward
                adv_sums[label, variant.value] = (
                    adv_sums.get((label, variant.value), 0.0) + abs(adv))
    rows = []
    for label in labels:
        row: dict[str, object] = {"label": label}
        for variant in variants:
            row[f"{variant.value}_mean"] = sums[label, variant.value] / len(tasks)
            row[f"{variant.value}_mean_abs_adv"] = adv_sums[label, variant.value] / len(tasks)
        rows.append(row)
    return rows
