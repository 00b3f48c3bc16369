import math
import statistics

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from planreward.grpo import (
    GrpoConfig,
    TokenAggregation,
    clipped_term,
    group_advantages,
    grpo_gradient,
    grpo_objective,
    kl_penalty,
    objective_for_policy,
)
from planreward.model import RolloutCandidate, RolloutGroup

from oracles import build_random_instance, finite_difference_gradient

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


class TestGroupAdvantages:
    def test_hand_arithmetic(self):
        # Population std of [1, .5, 0] is sqrt(1/6); cross-checked with the
        # statistics module as an independent routine.
        result = group_advantages([1.0, 0.5, 0.0])
        assert result.mean == pytest.approx(0.5)
        assert result.std == pytest.approx(statistics.pstdev([1.0, 0.5, 0.0]), abs=1e-15)
        assert result.std == pytest.approx(math.sqrt(1 / 6), abs=1e-15)
        expected = [(r - 0.5) / math.sqrt(1 / 6) for r in (1.0, 0.5, 0.0)]
        for got, want in zip(result.advantages, expected):
            assert got == pytest.approx(want, abs=1e-9)
        assert result.advantages[0] == pytest.approx(1.224745, abs=1e-6)
        assert result.advantages[2] == pytest.approx(-1.224745, abs=1e-6)

    def test_uniform_rewards_exact_zero(self):
        result = group_advantages([0.7] * 5)
        assert result.advantages == (0.0,) * 5
        assert result.std == 0.0

    def test_two_point(self):
        assert group_advantages([1.0, 0.0]).advantages == pytest.approx((1.0, -1.0))

    def test_rejects_singleton(self):
        with pytest.raises(ValueError):
            group_advantages([1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            group_advantages([1.0, float("nan")])

    @given(st.lists(finite, min_size=2, max_size=9), finite)
    def test_shift_invariant(self, rewards, shift):
        base = group_advantages(rewards).advantages
        shifted = group_advantages([r + shift for r in rewards]).advantages
        for a, b in zip(base, shifted):
            assert a == pytest.approx(b, abs=1e-9)

    @given(st.lists(finite, min_size=2, max_size=9),
           st.floats(0.1, 50, allow_nan=False))
    def test_positive_scale_invariant(self, rewards, scale):
        # Scale invariance is a property of the normal regime; once the std
        # floor engages (near-uniform groups) the denominator stops scaling.
        assume(statistics.pstdev(rewards) > 1e-6)
        base = group_advantages(rewards).advantages
        scaled = group_advantages([r * scale for r in rewards]).advantages
        for a, b in zip(base, scaled):
            assert a == pytest.approx(b, abs=1e-9)

    @given(st.lists(finite, min_size=2, max_size=9))
    def test_standardized_moments(self, rewards):
        result = group_advantages(rewards)
        if result.std > 1e-8:
            assert abs(statistics.fmean(result.advantages)) < 1e-9
            assert abs(statistics.pstdev(result.advantages) - 1.0) < 1e-6


def two_branch_oracle(ratio, advantage, eps):
    return min(ratio * advantage, min(max(ratio, 1 - eps), 1 + eps) * advantage)


class TestClippedTerm:
    def test_upper_clip_positive_advantage(self):
        assert clipped_term(math.log(1.5), 0.0, 1.0, 0.2) == pytest.approx(1.2)

    def test_on_policy_identity(self):
        for a in (-2.0, 0.0, 3.5):
            assert clipped_term(0.0, 0.0, a, 0.2) == pytest.approx(a)

    def test_low_ratio_negative_advantage(self):
        # The oracle, not intuition, fixes the expected value:
        # min(0.5 * -2, 0.8 * -2) = min(-1.0, -1.6) = -1.6.
        expected = two_branch_oracle(0.5, -2.0, 0.2)
        assert expected == -1.6
        assert clipped_term(math.log(0.5), 0.0, -2.0, 0.2) == pytest.approx(expected)

    @given(finite, finite, finite, st.floats(0.05, 0.9))
    def test_matches_two_branch_oracle(self, lpn, lpo, adv, eps):
        ratio = math.exp(lpn - lpo)
        assert clipped_term(lpn, lpo, adv, eps) == pytest.approx(
            two_branch_oracle(ratio, adv, eps), rel=1e-12, abs=1e-12)

    @given(finite, finite, st.floats(0, 3), st.floats(0.05, 0.9))
    def test_pessimism_upper_bound(self, lpn, lpo, adv, eps):
        # With a positive advantage the clipped term never exceeds ratio * A.
        ratio = math.exp(lpn - lpo)
        assert clipped_term(lpn, lpo, adv, eps) <= ratio * adv + 1e-12


class TestKlPenalty:
    def test_identical_policies(self):
        assert kl_penalty(-1.3, -1.3) == 0.0

    def test_positive_unit_gap(self):
        assert kl_penalty(-1.0, 0.0) == pytest.approx(math.e - 2, abs=1e-9)
        assert kl_penalty(-1.0, 0.0) == pytest.approx(0.718282, abs=1e-6)

    def test_negative_unit_gap(self):
        assert kl_penalty(0.0, -1.0) == pytest.approx(math.exp(-1), abs=1e-9)
        assert kl_penalty(0.0, -1.0) == pytest.approx(0.367879, abs=1e-6)

    @given(finite, finite)
    def test_nonnegative_and_zero_iff_equal(self, lpn, lpr):
        value = kl_penalty(lpn, lpr)
        assert value >= 0.0
        if abs(lpn - lpr) < 1e-12:
            assert value < 1e-12
        elif abs(lpn - lpr) > 1e-6:
            assert value > 0.0


def make_group(prompt_id, cand_specs):
    return RolloutGroup(prompt_id, tuple(
        RolloutCandidate(text="", tokens=tuple((i, 0) for i in range(len(new))),
                         reward=0.0, advantage=adv,
                         logp_new=tuple(new), logp_old=tuple(old), logp_ref=tuple(ref))
        for adv, new, old, ref in cand_specs))


def objective_straightline(group, eps, beta):
    """Independent flat re-implementation of the objective."""
    total = 0.0
    for c in group.candidates:
        terms = []
        for lpn, lpo, lpr in zip(c.logp_new, c.logp_old, c.logp_ref):
            ratio = math.exp(lpn - lpo)
            l2 = min(max(ratio, 1 - eps), 1 + eps)
            surrogate = min(ratio * c.advantage, l2 * c.advantage)
            d = lpr - lpn
            terms.append(surrogate - beta * (math.exp(d) - d - 1))
        total += sum(terms) / len(terms)
    return total / len(group.candidates)


class TestObjective:
    def test_all_terms_vanish(self):
        group = make_group("p", [
            (0.0, [-1.0, -2.0], [-1.0, -2.0], [-1.0, -2.0]),
            (0.0, [-0.5], [-0.5], [-0.5]),
        ])
        assert grpo_objective(group, GrpoConfig()) == 0.0

    def test_on_policy_single_token_reduces_to_minus_beta_kl(self):
        advantages = group_advantages([1.0, 0.4, 0.1]).advantages
        news = [-1.0, -2.0, -0.3]
        refs = [-1.5, -1.0, -0.3]
        group = make_group("p", [
            (a, [n], [n], [r]) for a, n, r in zip(advantages, news, refs)])
        cfg = GrpoConfig(kl_coef=0.05)
        kls = [math.exp(r - n) - (r - n) - 1 for n, r in zip(news, refs)]
        expected = statistics.fmean(advantages) - 0.05 * statistics.fmean(kls)
        assert grpo_objective(group, cfg) == pytest.approx(expected, abs=1e-12)
        assert grpo_objective(group, cfg) == pytest.approx(
            -0.05 * statistics.fmean(kls), abs=1e-9)

    @given(st.integers(0, 10_000))
    def test_matches_straightline_reimplementation(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        specs = []
        advantages = group_advantages(list(rng.uniform(0, 1, n))).advantages
        for i in range(n):
            t = int(rng.integers(1, 5))
            specs.append((advantages[i], list(rng.normal(-1, 0.7, t)),
                          list(rng.normal(-1, 0.7, t)), list(rng.normal(-1, 0.7, t))))
        group = make_group("p", specs)
        cfg = GrpoConfig(kl_coef=float(rng.uniform(0, 0.1)))
        assert grpo_objective(group, cfg) == pytest.approx(
            objective_straightline(group, cfg.clip_epsilon, cfg.kl_coef), abs=1e-12)

    def test_rejects_mismatched_logp_lengths(self):
        group = make_group("p", [(0.0, [-1.0, -1.0], [-1.0, -1.0], [-1.0, -1.0]),
                                 (0.0, [-1.0], [-1.0], [-1.0])])
        bad = RolloutGroup("p", (group.candidates[0], RolloutCandidate(
            text="", tokens=((0, 0),), logp_new=(-1.0,), logp_old=(-1.0, -2.0),
            logp_ref=(-1.0,))))
        with pytest.raises(ValueError):
            grpo_objective(bad, GrpoConfig())

    def test_candidate_order_invariant(self):
        specs = [(0.5, [-1.0, -0.2], [-0.9, -0.4], [-1.2, -0.1]),
                 (-0.5, [-0.7], [-0.8], [-0.6]),
                 (0.1, [-0.2, -0.4, -1.1], [-0.3, -0.2, -1.0], [-0.2, -0.5, -1.2])]
        cfg = GrpoConfig()
        forward = grpo_objective(make_group("p", specs), cfg)
        backward = grpo_objective(make_group("p", specs[::-1]), cfg)
        assert forward == pytest.approx(backward, abs=1e-12)


class TestGradient:
    def test_zero_advantage_new_equals_ref_is_zero(self):
        scored, current, task, cfg = build_random_instance(3)
        zeroed = RolloutGroup(scored.prompt_id, tuple(
            RolloutCandidate(text=c.text, tokens=c.tokens, reward=c.reward,
                             advantage=0.0,
                             logp_new=tuple(current.logp(task.task_id, p, s)
                                            for p, s in c.tokens),
                             logp_old=c.logp_old,
                             logp_ref=tuple(current.logp(task.task_id, p, s)
                                            for p, s in c.tokens))
            for c in scored.candidates))
        grad = grpo_gradient(zeroed, current, cfg)
        assert np.allclose(grad, 0.0, atol=1e-15)

    @pytest.mark.parametrize("aggregation", list(TokenAggregation))
    def test_matches_finite_differences(self, aggregation):
        worst = 0.0
        for seed in range(100):
            scored, current, task, cfg = build_random_instance(seed, aggregation)
            analytic = grpo_gradient(scored, current, cfg)
            numeric = finite_difference_gradient(scored, current, task.task_id, cfg)
            scale = max(float(np.linalg.norm(numeric)), 1e-12)
            worst = max(worst, float(np.linalg.norm(analytic - numeric)) / scale)
        assert worst < 1e-5

    def test_reinforce_identity_within_clip_band(self):
        # beta = 0, on-policy tokens: the gradient of each candidate's term is
        # advantage * grad(logp) averaged over tokens and candidates.
        scored, current, task, cfg0 = build_random_instance(11)
        cfg = GrpoConfig(kl_coef=0.0)
        on_policy = RolloutGroup(scored.prompt_id, tuple(
            RolloutCandidate(text=c.text, tokens=c.tokens, reward=c.reward,
                             advantage=c.advantage,
                             logp_new=tuple(current.logp(task.task_id, p, s)
                                            for p, s in c.tokens),
                             logp_old=tuple(current.logp(task.task_id, p, s)
                                            for p, s in c.tokens),
                             logp_ref=c.logp_ref)
            for c in scored.candidates))
        expected = np.zeros_like(current.logits_for(task.task_id))
        n = len(on_policy.candidates)
        for c in on_policy.candidates:
            for p, s in c.tokens:
                expected[p] += (c.advantage / (n * len(c.tokens))) * \
                    current.logp_grad(task.task_id, p, s)
        got = grpo_gradient(on_policy, current, cfg)
        assert np.allclose(got, expected, atol=1e-12)
