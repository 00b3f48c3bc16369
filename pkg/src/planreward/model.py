"""Domain types shared across the toolkit.

Everything here is an immutable value object: actions, dictionaries, parsed
plan responses, reward breakdowns, and rollout groups. Instances are safe to
share across threads without synchronization.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def normalize_name(raw: str) -> str:
    """Canonicalize an action name: lowercase, trim, collapse whitespace runs.

    Collapsing internal whitespace (tabs, newlines, repeated spaces) to single
    spaces is deliberately stricter than plain lowercase+trim so that model
    tokenization artifacts like "pick  up" still match "pick up".
    """
    return " ".join(raw.split()).lower()


def is_plain_int(value: object) -> bool:
    """True for genuine integers; bool is excluded even though it subclasses int."""
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class ActionStep:
    """One executable action: a dictionary id plus a canonical name."""

    action_id: int
    name: str

    def __post_init__(self) -> None:
        if not is_plain_int(self.action_id) or self.action_id < 0:
            raise ValueError(f"action_id must be a non-negative integer, got {self.action_id!r}")
        if normalize_name(self.name) == "":
            raise ValueError("action name must be non-empty after normalization")


@dataclass(frozen=True)
class ActionDictionary:
    """Per-task mapping from action id to canonical name.

    Ids need not be contiguous and deliberately vary from task to task; the
    same name may appear under different ids in different dictionaries.
    """

    entries: dict[int, str]
    task_id: str = ""

    def __post_init__(self) -> None:
        for action_id, name in self.entries.items():
            if not is_plain_int(action_id) or action_id < 0:
                raise ValueError(f"dictionary id must be a non-negative integer, got {action_id!r}")
            if not isinstance(name, str) or normalize_name(name) == "":
                raise ValueError(f"dictionary name for id {action_id} must be a non-empty string")

    def __len__(self) -> int:
        return len(self.entries)

    def normalized_name_for(self, action_id: int) -> str | None:
        name = self.entries.get(action_id)
        return None if name is None else normalize_name(name)

    def ids_for_name(self, name: str) -> list[int]:
        """All ids mapping to a name (duplicates allowed), in ascending order."""
        wanted = normalize_name(name)
        return sorted(i for i, n in self.entries.items() if normalize_name(n) == wanted)

    def names(self) -> list[str]:
        """Canonical names in ascending-id order."""
        return [self.entries[i] for i in sorted(self.entries)]


@dataclass(frozen=True)
class RawStep:
    """A plan step exactly as parsed, before any type checking.

    Values keep whatever kind the payload carried (string id, numeric name,
    missing key -> None) so that well-formedness can be scored instead of
    crashing on malformed input.
    """

    action_id_value: object
    name_value: object


@dataclass(frozen=True)
class ParseIssue:
    """One structural deviation found while parsing a response."""

    code: str
    detail: str


#: The four payload fields a response must carry, in canonical order.
REQUIRED_FIELDS: tuple[str, ...] = (
    "visual_state_description",
    "reasoning_and_reflection",
    "language_plan",
    "executable_plan",
)


@dataclass(frozen=True)
class PlanResponse:
    """A parsed structured response plus parse diagnostics.

    A field is set only when it parsed as the expected kind (string for the
    three text fields, array for the executable plan); anything else leaves
    the field absent and records a diagnostic. ``field_order`` preserves the
    order in which the required keys appeared in the payload.
    """

    visual_state_description: str | None = None
    reasoning_and_reflection: str | None = None
    language_plan: str | None = None
    executable_plan: tuple[RawStep, ...] | None = None
    raw_think: str | None = None
    raw_answer: str | None = None
    field_order: tuple[str, ...] = ()
    diagnostics: tuple[ParseIssue, ...] = ()


@dataclass(frozen=True)
class ReferencePlan:
    """The ground-truth action sequence; ordered, duplicates allowed."""

    steps: tuple[ActionStep, ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class RewardBreakdown:
    """Every reward component computed for one candidate response.

    All three accuracy variants are always present even though only one feeds
    ``r_overall``, so ablation runs never need re-scoring.
    """

    r_section: float
    r_type: float
    r_validity: float
    r_format: float
    r_lcs: float
    r_step: float
    r_prefix: float
    r_overall: float
    lcs_length: int
    reference_length: int

    def __post_init__(self) -> None:
        for name in ("r_section", "r_type", "r_validity", "r_format",
                     "r_lcs", "r_step", "r_prefix", "r_overall"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.lcs_length < 0 or self.reference_length < 0:
            raise ValueError("sequence lengths must be non-negative")


@dataclass(frozen=True)
class RolloutCandidate:
    """One sampled response with its rewards and per-token log-probabilities.

    ``tokens`` holds (position, symbol-index) pairs for every symbol the
    policy actually sampled, the stop symbol included when it was emitted;
    the three log-prob sequences are aligned with it.
    """

    text: str
    tokens: tuple[tuple[int, int], ...] = ()
    breakdown: RewardBreakdown | None = None
    reward: float = 0.0
    advantage: float = 0.0
    logp_new: tuple[float, ...] = ()
    logp_old: tuple[float, ...] = ()
    logp_ref: tuple[float, ...] = ()


@dataclass(frozen=True)
class RolloutGroup:
    """N candidate responses for a single prompt.

    Group-relative optimization only ever compares within a group, so all
    candidates share the prompt and N must be at least 2 (the reward standard
    deviation is undefined for a single sample).
    """

    prompt_id: str
    candidates: tuple[RolloutCandidate, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if len(self.candidates) < 2:
            raise ValueError("a rollout group needs at least 2 candidates")

    def rewards(self) -> list[float]:
        return [c.reward for c in self.candidates]
