"""Declarative sweep plans and their expansion into run descriptors.

A plan file is YAML::

    model:
      id: schelling
      config: {agents_per_color: 1000}
      movement_rules: [random_everywhere, edmonds_hales]   # schelling only
    regimes: [uniform, random]
    modes: [by_agent]
    sweep:
      name: tolerance
      values: [0, 1, 2, 3, 4, 5, 6, 7, 8]
    seeds: 100
    master_seed: 2010
    horizon: 1000
    sample_at: [1000]

Unknown keys are rejected. Runs expand sweep-major, then movement rule,
regime, mode and replicate; run ``k`` draws from ``RngStream(master_seed, k)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..engine import ConfigurationError, ModeSpec, RegimeSpec
from ..models import MODELS, make_config
from ..models.schelling import MOVEMENT_RULES


class PlanError(ConfigurationError):
    """Malformed or invalid plan file."""


TOP_KEYS = ("model", "regimes", "modes", "sweep", "seeds", "master_seed", "horizon", "sample_at")
MODEL_KEYS = ("id", "config", "movement_rules")
SWEEP_KEYS = ("name", "values")


@dataclass(frozen=True)
class ExperimentPlan:
    model: str
    regimes: tuple[RegimeSpec, ...]
    modes: tuple[ModeSpec, ...]
    sweep_name: str
    sweep_values: tuple
    seeds: int
    master_seed: int
    horizon: int
    sample_at: tuple[int, ...]
    config: dict = field(default_factory=dict)
    movement_rules: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(RegimeSpec.parse(r) for r in self.regimes))
        object.__setattr__(self, "modes", tuple(ModeSpec.parse(m) for m in self.modes))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "sample_at", tuple(int(t) for t in self.sample_at))
        object.__setattr__(self, "movement_rules", tuple(self.movement_rules))
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise PlanError(f"model.id: unknown model {self.model!r}; valid: {', '.join(MODELS)}")
        for name, seq in (("regimes", self.regimes), ("modes", self.modes),
                          ("sweep.values", self.sweep_values), ("sample_at", self.sample_at)):
            if not seq:
                raise PlanError(f"{name}: must not be empty")
        if not isinstance(self.seeds, int) or self.seeds < 1:
            raise PlanError(f"seeds: must be an integer >= 1, got {self.seeds!r}")
        if not isinstance(self.horizon, int) or self.horizon < 0:
            raise PlanError(f"horizon: must be a non-negative integer, got {self.horizon!r}")
        if not isinstance(self.master_seed, int):
            raise PlanError(f"master_seed: must be an integer, got {self.master_seed!r}")
        bad = [t for t in self.sample_at if not 0 <= t <= self.horizon]
        if bad:
            raise PlanError(f"sample_at: times {bad} outside 0..horizon={self.horizon}")
        if self.movement_rules:
            if self.model != "schelling":
                raise PlanError("model.movement_rules: only the schelling model has movement rules")
            unknown = [r for r in self.movement_rules if r not in MOVEMENT_RULES]
            if unknown:
                raise PlanError(f"model.movement_rules: unknown {unknown}; valid: {MOVEMENT_RULES}")
            if "movement_rule" in self.config or self.sweep_name == "movement_rule":
                raise PlanError("movement rule given both in movement_rules and config/sweep")
        for v in self.sweep_values:
            for rule in self.movement_rules or (None,):
                try:
                    make_config(self.model, self.cell_config(v, rule))
                except ConfigurationError as exc:
                    raise PlanError(f"sweep {self.sweep_name}={v!r}: {exc}") from None
                except TypeError as exc:
                    raise PlanError(f"model.config: {exc}") from None

    def cell_config(self, sweep_value, movement_rule=None) -> dict:
        cfg = dict(self.config)
        cfg[self.sweep_name] = sweep_value
        if movement_rule is not None:
            cfg["movement_rule"] = movement_rule
        return cfg

    def to_dict(self) -> dict[str, Any]:
        model: dict[str, Any] = {"id": self.model, "config": dict(self.config)}
        if self.movement_rules:
            model["movement_rules"] = list(self.movement_rules)
        return {
            "model": model,
            "regimes": [str(r) for r in self.regimes],
            "modes": [str(m) for m in self.modes],
            "sweep": {"name": self.sweep_name, "values": list(self.sweep_values)},
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "horizon": self.horizon,
            "sample_at": list(self.sample_at),
        }

    def digest(self) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def run_count(self) -> int:
        return (len(self.sweep_values) * max(1, len(self.movement_rules)) * len(self.regimes)
                * len(self.modes) * self.seeds)


@dataclass(frozen=True)
class RunDescriptor:
    run_index: int
    model: str
    config: dict
    sweep_name: str
    sweep_value: Any
    movement_rule: str | None
    setting: int | None
    regime: RegimeSpec
    mode: ModeSpec
    seed: int
    master_seed: int
    horizon: int
    sample_at: tuple[int, ...]


def expand_plan(plan: ExperimentPlan) -> list[RunDescriptor]:
    out = []
    k = 0
    for value in plan.sweep_values:
        for rule in plan.movement_rules or (None,):
            cfg = plan.cell_config(value, rule)
            setting = cfg.get("setting") if plan.model == "dpd" else None
            if plan.model == "schelling":
                rule = cfg.get("movement_rule", "random_everywhere")
            for regime in plan.regimes:
                for mode in plan.modes:
                    for seed in range(plan.seeds):
                        out.append(RunDescriptor(k, plan.model, cfg, plan.sweep_name, value, rule,
                                                 setting, regime, mode, seed, plan.master_seed,
                                                 plan.horizon, plan.sample_at))
                        k += 1
    return out


# ------------------------------------------------------------------ file io


def _node_lines(node, path=()):
    """Map key paths to 1-based line numbers of a composed YAML node tree."""
    lines = {path: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            lines.update(_node_lines(value, path + (key.value,)))
            lines[path + (key.value,)] = key.start_mark.line + 1
    return lines


def _check_keys(data, allowed, where, lines, path):
    if not isinstance(data, dict):
        raise PlanError(f"line {lines.get(path, '?')}: {where or 'plan'} must be a mapping")
    for key in data:
        if key not in allowed:
            line = lines.get(path + (key,), "?")
            raise PlanError(
                f"line {line}: unknown field {'.'.join(path + (key,))!r}; "
                f"allowed here: {', '.join(allowed)}"
            )


def plan_from_dict(data: dict, lines: dict | None = None) -> ExperimentPlan:
    lines = lines or {}
    _check_keys(data, TOP_KEYS, "", lines, ())
    for key in TOP_KEYS:
        if key not in data:
            raise PlanError(f"missing required field {key!r}")
    model = data["model"]
    _check_keys(model, MODEL_KEYS, "model", lines, ("model",))
    if "id" not in model:
        raise PlanError("missing required field 'model.id'")
    sweep = data["sweep"]
    _check_keys(sweep, SWEEP_KEYS, "sweep", lines, ("sweep",))
    for key in SWEEP_KEYS:
        if key not in sweep:
            raise PlanError(f"missing required field 'sweep.{key}'")

    def as_list(value, name):
        if not isinstance(value, list):
            raise PlanError(f"line {lines.get(tuple(name.split('.')), '?')}: {name} must be a list")
        return value

    try:
        return ExperimentPlan(
            model=model["id"],
            config=dict(model.get("config") or {}),
            movement_rules=tuple(as_list(model.get("movement_rules", []), "model.movement_rules")),
            regimes=tuple(as_list(data["regimes"], "regimes")),
            modes=tuple(as_list(data["modes"], "modes")),
            sweep_name=str(sweep["name"]),
            sweep_values=tuple(as_list(sweep["values"], "sweep.values")),
            seeds=data["seeds"],
            master_seed=data["master_seed"],
            horizon=data["horizon"],
            sample_at=tuple(as_list(data["sample_at"], "sample_at")),
        )
    except PlanError:
        raise
    except ConfigurationError as exc:
        raise PlanError(str(exc)) from None


def parse_plan(text: str) -> ExperimentPlan:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise PlanError(f"malformed plan file: {exc}") from None
    if node is None:
        raise PlanError("empty plan file")
    return plan_from_dict(data, _node_lines(node))


def read_plan(path: str | Path) -> ExperimentPlan:
    return parse_plan(Path(path).read_text(encoding="utf-8"))


def dump_plan(plan: ExperimentPlan) -> str:
    return yaml.safe_dump(plan.to_dict(), sort_keys=False, default_flow_style=None)


def write_plan(plan: ExperimentPlan, path: str | Path) -> None:
    Path(path).write_text(dump_plan(plan), encoding="utf-8", newline="\n")
