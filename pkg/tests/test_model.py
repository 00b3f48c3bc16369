import pytest
from hypothesis import given
from hypothesis import strategies as st

from planreward.model import (
    ActionDictionary,
    ActionStep,
    RewardBreakdown,
    RolloutCandidate,
    RolloutGroup,
    normalize_name,
)


def normalize_reference(raw: str) -> str:
    """Character-level reimplementation of the normalization rule."""
    out = []
    in_space = True  # leading whitespace is dropped
    for ch in raw.lower():
        if ch.isspace():
            if not in_space:
                out.append(" ")
            in_space = True
        else:
            out.append(ch)
            in_space = False
    while out and out[-1] == " ":
        out.pop()
    return "".join(out)


class TestNormalizeName:
    def test_lowercase_and_trim(self):
        assert normalize_name("  Pick Up Apple ") == "pick up apple"

    def test_empty_is_fixed_point(self):
        assert normalize_name("") == ""

    def test_internal_whitespace_collapses(self):
        # Cross-checked against the character-level reference implementation.
        assert normalize_reference("GoTo\tTable") == "goto table"
        assert normalize_name("GoTo\tTable") == "goto table"

    @given(st.text(max_size=60))
    def test_matches_reference_implementation(self, raw):
        assert normalize_name(raw) == normalize_reference(raw)

    @given(st.text(max_size=60))
    def test_idempotent(self, raw):
        once = normalize_name(raw)
        assert normalize_name(once) == once


class TestActionStep:
    def test_rejects_negative_id(self):
        with pytest.raises(ValueError):
            ActionStep(-1, "go")

    def test_rejects_bool_id(self):
        with pytest.raises(ValueError):
            ActionStep(True, "go")

    def test_rejects_whitespace_name(self):
        with pytest.raises(ValueError):
            ActionStep(1, "   ")


class TestActionDictionary:
    def test_duplicate_names_under_different_ids_allowed(self):
        d = ActionDictionary({1: "go to the table", 9: "go to the table"})
        assert d.ids_for_name("Go To The Table") == [1, 9]

    def test_rejects_empty_name(self):
        with pytest.raises(ValueError):
            ActionDictionary({1: ""})

    def test_normalized_lookup(self):
        d = ActionDictionary({4: " Pick  Up "})
        assert d.normalized_name_for(4) == "pick up"
        assert d.normalized_name_for(5) is None


class TestRewardBreakdown:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RewardBreakdown(1.5, 0, 0, 0, 0, 0, 0, 0, 0, 0)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_weight_identities_hold_for_scored_records(self, s, t, v, acc):
        # Compose a breakdown the way the scorer does and check both identities.
        fmt = 0.3 * s + 0.3 * t + 0.4 * v
        overall = 0.2 * fmt + 0.8 * acc
        b = RewardBreakdown(s, t, v, fmt, acc, acc, acc, overall, 0, 0)
        assert abs(b.r_format - (0.3 * b.r_section + 0.3 * b.r_type + 0.4 * b.r_validity)) < 1e-12
        assert abs(b.r_overall - (0.2 * b.r_format + 0.8 * b.r_lcs)) < 1e-12


class TestRolloutGroup:
    def test_needs_two_candidates(self):
        with pytest.raises(ValueError):
            RolloutGroup("p", (RolloutCandidate("x"),))
