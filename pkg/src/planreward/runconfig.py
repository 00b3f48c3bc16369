"""Single JSON run-config with format / accuracy / grpo / lab sections.

Command-line flags override file values; the effective configuration is
echoed next to every artifact a command writes, for provenance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .accuracy import AccuracyVariant
from .format_rules import FormatConfig
from .grpo import GrpoConfig, KlEstimator, TokenAggregation
from .scoring import ScoringConfig
from .toylab import LabConfig


class ConfigError(ValueError):
    """Invalid run-config contents (bad weights, unknown keys, wrong types)."""


@dataclass(frozen=True)
class RunConfig:
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    lab: LabConfig = field(default_factory=LabConfig)

    def to_dict(self) -> dict:
        fmt = self.scoring.format
        return {
            "format": {
                "w_section": fmt.w_section,
                "w_type": fmt.w_type,
                "w_validity": fmt.w_validity,
                "strict_tags": fmt.strict_tags,
                "order_sensitive": fmt.order_sensitive,
            },
            "accuracy": {
                "variant": self.scoring.variant.value,
                "w_format": self.scoring.w_format,
                "w_accuracy": self.scoring.w_accuracy,
            },
            "grpo": {
                "group_size": self.grpo.group_size,
                "clip_epsilon": self.grpo.clip_epsilon,
                "kl_coef": self.grpo.kl_coef,
                "std_floor": self.grpo.std_floor,
                "kl_estimator": self.grpo.kl_estimator.value,
                "aggregation": self.grpo.aggregation.value,
            },
            "lab": {
                "num_tasks": self.lab.num_tasks,
                "vocab_size": self.lab.vocab_size,
                "length_range": list(self.lab.length_range),
                "long_horizon_range": list(self.lab.long_horizon_range),
                "long_horizon_fraction": self.lab.long_horizon_fraction,
                "max_len_factor": self.lab.max_len_factor,
                "min_steps": self.lab.min_steps,
                "slip_rate": self.lab.slip_rate,
                "temperature": self.lab.temperature,
                "steps": self.lab.steps,
                "learning_rate": self.lab.learning_rate,
                "warm_start": self.lab.warm_start,
                "warm_start_strength": self.lab.warm_start_strength,
            },
        }

    def echo(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def load_config(path: str | Path | None, *, lab_base: LabConfig | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file over the given lab baseline."""
    base = RunConfig(lab=lab_base or LabConfig())
    if path is None:
        return base
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be an object")
    unknown = set(payload) - {"format", "accuracy", "grpo", "lab"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        fmt = _merge_section(base.scoring.format, payload.get("format", {}), "format")
        accuracy = payload.get("accuracy", {})
        _check_keys(accuracy, {"variant", "w_format", "w_accuracy"}, "accuracy")
        scoring = ScoringConfig(
            format=fmt,
            variant=AccuracyVariant(accuracy.get("variant", base.scoring.variant.value)),
            w_format=float(accuracy.get("w_format", base.scoring.w_format)),
            w_accuracy=float(accuracy.get("w_accuracy", base.scoring.w_accuracy)),
        )
        grpo_raw = dict(payload.get("grpo", {}))
        _check_keys(grpo_raw, {f.name for f in dataclasses.fields(GrpoConfig)}, "grpo")
        if "kl_estimator" in grpo_raw:
            grpo_raw["kl_estimator"] = KlEstimator(grpo_raw["kl_estimator"])
        if "aggregation" in grpo_raw:
            grpo_raw["aggregation"] = TokenAggregation(grpo_raw["aggregation"])
        grpo = dataclasses.replace(base.grpo, **grpo_raw)
        lab_raw = dict(payload.get("lab", {}))
        _check_keys(lab_raw, {f.name for f in dataclasses.fields(LabConfig)}, "lab")
        for key in ("length_range", "long_horizon_range"):
            if key in lab_raw:
                lab_raw[key] = tuple(int(v) for v in lab_raw[key])
        lab = dataclasses.replace(base.lab, **lab_raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(scoring=scoring, grpo=grpo, lab=lab)


def apply_overrides(cfg: RunConfig, *, variant: str | None = None,
                    steps: int | None = None, lr: float | None = None,
                    group_size: int | None = None, clip_eps: float | None = None,
                    kl_coef: float | None = None) -> RunConfig:
    """Apply command-line flag overrides on top of a loaded config."""
    try:
        scoring = cfg.scoring if variant is None else dataclasses.replace(
            cfg.scoring, variant=AccuracyVariant(variant))
        grpo_updates = {k: v for k, v in (
            ("group_size", group_size), ("clip_epsilon", clip_eps), ("kl_coef", kl_coef),
        ) if v is not None}
        grpo = dataclasses.replace(cfg.grpo, **grpo_updates) if grpo_updates else cfg.grpo
        lab_updates = {k: v for k, v in (("steps", steps), ("learning_rate", lr))
                       if v is not None}
        lab = dataclasses.replace(cfg.lab, **lab_updates) if lab_updates else cfg.lab
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(scoring=scoring, grpo=grpo, lab=lab)


def _merge_section(base: FormatConfig, raw: dict, name: str) -> FormatConfig:
    _check_keys(raw, {f.name for f in dataclasses.fields(FormatConfig)}, name)
    return dataclasses.replace(base, **raw)


def _check_keys(raw: dict, allowed: set[str], section: str) -> None:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
