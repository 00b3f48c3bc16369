"""Extract structured plan responses from raw model output.

The parser is deliberately forgiving: malformed output never raises, it just
produces an emptier :class:`PlanResponse` with diagnostics attached, so the
reward side can penalize instead of crashing.
"""

from __future__ import annotations

import json
import re

from .model import (
    REQUIRED_FIELDS,
    ActionDictionary,
    ActionStep,
    ParseIssue,
    PlanResponse,
    RawStep,
    is_plain_int,
    normalize_name,
)

_STRING_FIELDS = REQUIRED_FIELDS[:3]
_TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")
_CANONICAL_INT_RE = re.compile(r"-?(0|[1-9][0-9]*)")


def split_tags(raw: str) -> tuple[str | None, str | None]:
    """Return the inner text of the first think and answer tag pairs.

    A slot is None when its opening tag is missing or never closed. Matching
    is case-sensitive on the literal tag names; absence is data, not an
    error, because the format reward scores it.
    """
    return _first_tag_text(raw, "think"), _first_tag_text(raw, "answer")


def _first_tag_text(text: str, tag: str) -> str | None:
    opening, closing = f"<{tag}>", f"</{tag}>"
    start = text.find(opening)
    if start < 0:
        return None
    end = text.find(closing, start + len(opening))
    if end < 0:
        return None
    return text[start + len(opening):end]


def parse_response(answer_text: str, *, raw_think: str | None = None,
                   raw_answer: str | None = None) -> PlanResponse:
    """Parse the answer-region text into a :class:`PlanResponse`.

    The first complete JSON object found in the text wins; later objects are
    ignored with a diagnostic. Each of the four required fields is captured
    only when it has the expected kind (string for the three text fields, an
    array for the executable plan). Plan steps keep their original value
    kinds in :class:`RawStep` records so the type reward can score
    well-formedness. Never raises on malformed content.
    """
    issues: list[ParseIssue] = []
    obj, obj_end = _first_json_object(answer_text, issues)
    if obj is None:
        issues.append(ParseIssue("no_object", "no parseable object in answer text"))
        return PlanResponse(raw_think=raw_think, raw_answer=raw_answer,
                            diagnostics=tuple(issues))
    if _has_another_object(answer_text, obj_end):
        issues.append(ParseIssue("multiple_objects", "extra object ignored; first wins"))

    fields: dict[str, object] = {}
    order = tuple(key for key in obj if key in REQUIRED_FIELDS)
    for key in obj:
        if key not in REQUIRED_FIELDS:
            issues.append(ParseIssue("unexpected_field", key))
    for key in _STRING_FIELDS:
        if key not in obj:
            issues.append(ParseIssue("missing_field", key))
        elif isinstance(obj[key], str):
            fields[key] = obj[key]
        else:
            issues.append(ParseIssue("wrong_kind", f"{key} is not a string"))

    plan_value = obj.get("executable_plan")
    steps: tuple[RawStep, ...] | None = None
    if "executable_plan" not in obj:
        issues.append(ParseIssue("missing_field", "executable_plan"))
    elif isinstance(plan_value, list):
        steps = tuple(_raw_step(item, i, issues) for i, item in enumerate(plan_value))
    else:
        issues.append(ParseIssue("wrong_kind", "executable_plan is not an array"))

    return PlanResponse(
        visual_state_description=fields.get("visual_state_description"),
        reasoning_and_reflection=fields.get("reasoning_and_reflection"),
        language_plan=fields.get("language_plan"),
        executable_plan=steps,
        raw_think=raw_think,
        raw_answer=raw_answer,
        field_order=order,
        diagnostics=tuple(issues),
    )


def parse_model_output(raw: str) -> PlanResponse:
    """Split tags and parse the answer region of a full model output.

    When the answer tags are absent the whole output is searched for a
    structured object as a fallback; the missing tags are still recorded so
    a strict-tag policy can zero the format reward.
    """
    think, answer = split_tags(raw)
    response = parse_response(answer if answer is not None else raw,
                              raw_think=think, raw_answer=answer)
    extra: list[ParseIssue] = []
    if think is None:
        extra.append(ParseIssue("missing_tags", "no closed think tag pair"))
    if answer is None:
        extra.append(ParseIssue("missing_tags", "no closed answer tag pair; parsed whole output"))
    if extra:
        response = PlanResponse(
            visual_state_description=response.visual_state_description,
            reasoning_and_reflection=response.reasoning_and_reflection,
            language_plan=response.language_plan,
            executable_plan=response.executable_plan,
            raw_think=think,
            raw_answer=answer,
            field_order=response.field_order,
            diagnostics=tuple(extra) + response.diagnostics,
        )
    return response


def extract_steps(resp: PlanResponse,
                  dictionary: ActionDictionary | None = None) -> list[ActionStep]:
    """Typed action sequence from the parsed plan, in original order.

    Keeps only steps with a genuine non-negative integer id and a name that
    is non-empty after normalization; everything else is dropped here (it
    already counted against the type reward). Dictionary membership is
    deliberately not checked: hallucinated actions must reach the accuracy
    reward so it can score them, and the validity reward handles matching.
    """
    del dictionary
    steps: list[ActionStep] = []
    for raw in resp.executable_plan or ():
        if not is_plain_int(raw.action_id_value) or raw.action_id_value < 0:
            continue
        if not isinstance(raw.name_value, str):
            continue
        name = normalize_name(raw.name_value)
        if not name:
            continue
        steps.append(ActionStep(raw.action_id_value, name))
    return steps


def render_answer_payload(steps: list[ActionStep], *, visual: str = "",
                          reasoning: str = "", language_plan: str = "") -> dict:
    """Well-formed answer object with the four keys in canonical order."""
    return {
        "visual_state_description": visual,
        "reasoning_and_reflection": reasoning,
        "language_plan": language_plan,
        "executable_plan": [
            {"action_id": s.action_id, "action_name": s.name} for s in steps
        ],
    }


def render_response(steps: list[ActionStep], *, think: str = "", visual: str = "",
                    reasoning: str = "", language_plan: str = "") -> str:
    """Render a plan through the full structured-response template.

    The output is well-formed by construction: closed think/answer tag pairs
    around a JSON object with the four required keys in canonical order.
    """
    if not language_plan:
        language_plan = "; ".join(f"{i + 1}. {s.name}" for i, s in enumerate(steps))
    payload = render_answer_payload(steps, visual=visual or "scene observed",
                                    reasoning=reasoning or "plan derived from the instruction",
                                    language_plan=language_plan)
    body = json.dumps(payload, ensure_ascii=False)
    return f"<think>{think or 'work out the action sequence'}</think>\n<answer>{body}</answer>"


def _raw_step(item: object, index: int, issues: list[ParseIssue]) -> RawStep:
    if not isinstance(item, dict):
        issues.append(ParseIssue("malformed_step", f"step {index} is not an object"))
        return RawStep(None, None)
    action_id = item.get("action_id")
    if isinstance(action_id, str):
        coerced = _lossless_int(action_id)
        if coerced is not None:
            issues.append(ParseIssue("string_id", f"step {index} id given as string"))
            action_id = coerced
    return RawStep(action_id, item.get("action_name"))


def _lossless_int(text: str) -> int | None:
    """Integer value of a string only when the round trip is exact ("04" is not)."""
    if _CANONICAL_INT_RE.fullmatch(text) and str(int(text)) == text:
        return int(text)
    return None


def _first_json_object(text: str, issues: list[ParseIssue]) -> tuple[dict | None, int]:
    """First parseable JSON object and the index just past it, or (None, -1).

    Trailing commas are tolerated with a diagnostic; anything else that fails
    to parse is skipped and the scan continues at the next opening brace.
    """
    pos = text.find("{")
    while pos >= 0:
        end = _balanced_end(text, pos)
        if end > pos:
            span = text[pos:end]
            try:
                obj = json.loads(span)
            except (json.JSONDecodeError, ValueError):
                obj = _loads_lenient(span, issues)
            if isinstance(obj, dict):
                return obj, end
        pos = text.find("{", pos + 1)
    return None, -1


def _loads_lenient(span: str, issues: list[ParseIssue]) -> dict | None:
    relaxed = _TRAILING_COMMA_RE.sub(r"\1", span)
    if relaxed == span:
        return None
    try:
        obj = json.loads(relaxed)
    except (json.JSONDecodeError, ValueError):
        return None
    if isinstance(obj, dict):
        issues.append(ParseIssue("trailing_commas", "trailing commas stripped"))
        return obj
    return None


def _has_another_object(text: str, start: int) -> bool:
    pos = text.find("{", start)
    while pos >= 0:
        if _balanced_end(text, pos) > pos:
            return True
        pos = text.find("{", pos + 1)
    return False


def _balanced_end(text: str, start: int) -> int:
    """Index just past the brace-balanced span opening at ``start``, else -1.

    Tracks JSON string literals and escapes so braces inside strings do not
    count toward nesting.
    """
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return -1
