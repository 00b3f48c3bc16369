"""Rule-based verifiable rewards for multi-step plan outputs, plus the
group-relative policy optimization machinery to train against them."""

from .accuracy import (
    AccuracyVariant,
    accuracy_for,
    lcs_length,
    lcs_reward,
    overall_reward,
    prefix_reward,
    step_accuracy,
)
from .format_rules import (
    FormatComponents,
    FormatConfig,
    format_reward,
    section_reward,
    type_reward,
    validity_reward,
)
from .grpo import (
    GroupAdvantages,
    GrpoConfig,
    KlEstimator,
    TokenAggregation,
    clipped_term,
    group_advantages,
    grpo_gradient,
    grpo_objective,
    kl_penalty,
    objective_for_policy,
)
from .model import (
    ActionDictionary,
    ActionStep,
    ParseIssue,
    PlanResponse,
    RawStep,
    ReferencePlan,
    RewardBreakdown,
    RolloutCandidate,
    RolloutGroup,
    normalize_name,
)
from .parsing import (
    extract_steps,
    parse_model_output,
    parse_response,
    render_response,
    split_tags,
)
from .scoring import ScoringConfig, score_candidate
from .toylab import (
    LabConfig,
    ToyPolicy,
    ToyTask,
    TrainReport,
    compare_rewards,
    generate_tasks,
    perturbation_suite,
    sample_group,
    score_group,
    train,
)

__version__ = "0.1.0"
