"""Dataset ingestion and artifact persistence.

Scoring datasets are JSONL (one record per line) so large files can stream;
malformed lines are never silently dropped, they land in a rejects report
with their line numbers. Reward, advantage, training, and comparison
artifacts are CSV with fixed headers and fixed float formatting so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ActionDictionary, ActionStep, ReferencePlan, RewardBreakdown, normalize_name
from .toylab import TrainReport

REWARD_COLUMNS = ("record_id", "candidate_index", "r_section", "r_type", "r_validity",
                  "r_format", "r_lcs", "r_step", "r_prefix", "r_overall", "lcs_k", "ref_n")

_FLOAT_FMT = "{:.6f}"


class DatasetError(ValueError):
    """The input dataset is unusable (for example, not a single record parses)."""


@dataclass(frozen=True)
class ScoringRecord:
    record_id: str
    instruction: str
    action_dictionary: ActionDictionary
    reference_plan: ReferencePlan
    candidates: tuple[str, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RejectedLine:
    line: int
    error: str


@dataclass(frozen=True)
class LoadResult:
    records: tuple[ScoringRecord, ...]
    rejects: tuple[RejectedLine, ...] = field(default_factory=tuple)


def load_records(path: str | Path) -> LoadResult:
    """Parse a JSONL scoring dataset.

    Every non-blank line is either a record or a reject with its line number
    (the two counts always add up to the non-blank line count). Raises
    OSError when the file cannot be read and ValueError when not a single
    record parses.
    """
    records: list[ScoringRecord] = []
    rejects: list[RejectedLine] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = _parse_record(line)
            except ValueError as exc:
                rejects.append(RejectedLine(line_no, str(exc)))
                continue
            if record.record_id in seen_ids:
                rejects.append(RejectedLine(line_no,
                                            f"duplicate record_id {record.record_id!r}"))
                continue
            seen_ids.add(record.record_id)
            records.append(record)
    if not records:
        raise DatasetError(f"no parseable records in {path}")
    return LoadResult(tuple(records), tuple(rejects))


def _parse_record(line: str) -> ScoringRecord:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ValueError("line is not a JSON object")

    record_id = payload.get("record_id")
    if not isinstance(record_id, str) or not record_id:
        raise ValueError("record_id must be a non-empty string")
    instruction = payload.get("instruction")
    if not isinstance(instruction, str):
        raise ValueError("instruction must be a string")

    raw_dict = payload.get("action_dictionary")
    if not isinstance(raw_dict, dict) or not raw_dict:
        raise ValueError("action_dictionary must be a non-empty object")
    entries: dict[int, str] = {}
    for key, name in raw_dict.items():
        try:
            action_id = int(key)
        except (TypeError, ValueError):
            raise ValueError(f"action_dictionary key {key!r} is not an integer") from None
        if not isinstance(name, str) or not normalize_name(name):
            raise ValueError(f"action_dictionary name for id {key} must be a non-empty string")
        entries[action_id] = name
    try:
        dictionary = ActionDictionary(entries)
    except ValueError as exc:
        raise ValueError(str(exc)) from None

    raw_plan = payload.get("reference_plan")
    if not isinstance(raw_plan, list):
        raise ValueError("reference_plan must be an array")
    steps = []
    for i, item in enumerate(raw_plan):
        if not isinstance(item, dict):
            raise ValueError(f"reference_plan[{i}] is not an object")
        try:
            steps.append(ActionStep(item.get("action_id"),
                                    normalize_name(str(item.get("action_name", "")))))
        except ValueError as exc:
            raise ValueError(f"reference_plan[{i}]: {exc}") from None

    candidates = payload.get("candidates")
    if (not isinstance(candidates, list) or not candidates
            or not all(isinstance(c, str) for c in candidates)):
        raise ValueError("candidates must be a non-empty array of strings")

    # Noisy distilled data may reference actions missing from the dictionary;
    # that is a warning, not a reject.
    known = {normalize_name(n) for n in entries.values()}
    warnings = tuple(
        f"reference step {i} name {step.name!r} not in dictionary"
        for i, step in enumerate(steps) if step.name not in known)
    return ScoringRecord(record_id, instruction, dictionary,
                         ReferencePlan(tuple(steps)), tuple(candidates), warnings)


def save_records(records: list[ScoringRecord] | tuple[ScoringRecord, ...],
                 path: str | Path) -> None:
    """Write records as JSONL with keys in the canonical order."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            payload = {
                "record_id": record.record_id,
                "instruction": record.instruction,
                "action_dictionary": {str(i): record.action_dictionary.entries[i]
                                      for i in sorted(record.action_dictionary.entries)},
                "reference_plan": [{"action_id": s.action_id, "action_name": s.name}
                                   for s in record.reference_plan.steps],
                "candidates": list(record.candidates),
            }
            handle.write(json.dumps(payload, ensure_ascii=False) + "\n")


def write_rejects(rejects: tuple[RejectedLine, ...], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for reject in rejects:
            handle.write(json.dumps({"line": reject.line, "error": reject.error}) + "\n")


def write_rewards(records: list[ScoringRecord] | tuple[ScoringRecord, ...],
                  breakdowns: list[list[RewardBreakdown]],
                  path: str | Path) -> dict[str, float]:
    """Write the per-candidate reward CSV; returns mean of each component.

    One row per (record, candidate) in input order, floats at 6 decimal
    places, header always present.
    """
    if len(records) != len(breakdowns):
        raise ValueError("one breakdown list per record required")
    sums = {c: 0.0 for c in REWARD_COLUMNS[2:10]}
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(REWARD_COLUMNS)
        for record, row_breakdowns in zip(records, breakdowns):
            if len(row_breakdowns) != len(record.candidates):
                raise ValueError(f"record {record.record_id}: one breakdown per candidate required")
            for index, b in enumerate(row_breakdowns):
                values = (b.r_section, b.r_type, b.r_validity, b.r_format,
                          b.r_lcs, b.r_step, b.r_prefix, b.r_overall)
                writer.writerow([record.record_id, index,
                                 *(_FLOAT_FMT.format(v) for v in values),
                                 b.lcs_length, b.reference_length])
                for column, value in zip(REWARD_COLUMNS[2:10], values):
                    sums[column] += value
                count += 1
    return {column: (total / count if count else 0.0) for column, total in sums.items()} | {
        "rows": float(count)}


def read_rewards(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a reward CSV back as (header, rows-of-strings)."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path} is empty")
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows


def write_advantages(header: list[str], rows: list[dict[str, str]],
                     advantages: list[float], path: str | Path) -> None:
    """Append an advantage column to reward rows and write the result."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([*header, "advantage"])
        for row, advantage in zip(rows, advantages):
            writer.writerow([*(row[c] for c in header), _FLOAT_FMT.format(advantage)])


TRAIN_COLUMNS = ("step", "mean_accuracy", "mean_format", "mean_overall", "objective",
                 "grad_norm", "kl_mean", "mean_lcs", "mean_step_acc", "mean_prefix",
                 "zero_variance_fraction", "mean_lcs_long", "zero_variance_fraction_long")


def write_train_report(report: TrainReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAIN_COLUMNS)
        for r in report.records:
            writer.writerow([
                r.step,
                _FLOAT_FMT.format(r.mean_accuracy),
                _FLOAT_FMT.format(r.mean_format),
                _FLOAT_FMT.format(r.mean_overall),
                "{:.10g}".format(r.objective),
                "{:.10g}".format(r.grad_norm),
                "{:.10g}".format(r.kl_mean),
                _FLOAT_FMT.format(r.mean_lcs),
                _FLOAT_FMT.format(r.mean_step_acc),
                _FLOAT_FMT.format(r.mean_prefix),
                _FLOAT_FMT.format(r.zero_variance_fraction),
                "" if r.mean_lcs_long is None else _FLOAT_FMT.format(r.mean_lcs_long),
                "" if r.zero_variance_fraction_long is None
                else _FLOAT_FMT.format(r.zero_variance_fraction_long),
            ])


def read_train_report(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return list(reader)


def write_comparison(rows: list[dict[str, object]], path: str | Path) -> None:
    if not rows:
        raise ValueError("comparison table is empty")
    columns = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row["label"],
                             *(_FLOAT_FMT.format(row[c]) for c in columns[1:])])
