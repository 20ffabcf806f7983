"""Scenario configuration: flat key = value files, validated at parse time.

The format is a flat TOML-like text file: one ``key = value`` assignment per
line, ``#`` starts a full-line comment, strings may be quoted, and lists are
comma-separated.  Unknown keys are rejected so typos fail loudly.  Capacity
accepts either a slot count or a byte-budget string like ``"2GB"``, which is
translated into slots using the configured model profile's pruned file size.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from pathlib import Path

from .engine import VARIANT_PRESETS
from .profiles import profile_names, pruned_size
from .workload import WorkloadConfig

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "parse_config_text", "emit_config"]

_PRUNE_MODES = ("iterative", "oneshot", "none")


class ConfigError(ValueError):
    """Invalid scenario configuration (missing file, bad range, unknown key)."""


@dataclass(frozen=True)
class ScenarioConfig:
    n_users: int = 100
    n_rounds: int = 10
    unlearn_probability: float = 0.1
    rng_seed: int = 42
    label_space: int = 10
    chunk_min: int = 50
    chunk_max: int = 500
    labels_min: int = 2
    labels_max: int = 5
    activity_probability: float = 1.0
    shards: int = 4
    sc_gamma: float = 0.5
    sc_p: float = 0.5
    capacity: int | str = "2GB"
    model_profile: str = "resnet34"
    prune_rate: float = 0.7
    prune_mode: str = "iterative"
    prune_steps: int = 2
    energy_a: float = 1.0
    energy_b: float = 0.0
    feature_dim: int = 8
    test_samples_per_label: int = 20
    variants: tuple[str, ...] = ("cause", "sisa", "arcane", "omp70", "omp95")
    out_dir: str = "out"

    def __post_init__(self) -> None:
        try:
            self.workload_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.shards < 1:
            raise ConfigError("shards must be >= 1")
        if not 0.0 <= self.sc_gamma <= 1.0:
            raise ConfigError("sc_gamma must be in [0, 1]")
        if self.sc_p < 0:
            raise ConfigError("sc_p must be non-negative")
        if self.model_profile not in profile_names():
            raise ConfigError(f"unknown model_profile {self.model_profile!r}; known: {profile_names()}")
        if not 0.0 <= self.prune_rate < 1.0:
            raise ConfigError("prune_rate must be in [0, 1)")
        if self.prune_mode not in _PRUNE_MODES:
            raise ConfigError(f"prune_mode must be one of {_PRUNE_MODES}")
        if self.prune_steps < 1:
            raise ConfigError("prune_steps must be >= 1")
        if self.energy_a < 0 or self.energy_b < 0:
            raise ConfigError("energy coefficients must be non-negative")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.test_samples_per_label < 0:
            raise ConfigError("test_samples_per_label must be >= 0")
        unknown = [v for v in self.variants if v not in VARIANT_PRESETS]
        if unknown:
            raise ConfigError(f"unknown variants {unknown}; known: {sorted(VARIANT_PRESETS)}")
        if not self.variants:
            raise ConfigError("variants must be non-empty")
        self.capacity_slots()  # validate capacity eagerly

    def workload_config(self) -> WorkloadConfig:
        return WorkloadConfig(
            n_users=self.n_users,
            n_rounds=self.n_rounds,
            unlearn_probability=self.unlearn_probability,
            rng_seed=self.rng_seed,
            label_space=self.label_space,
            chunk_min=self.chunk_min,
            chunk_max=self.chunk_max,
            labels_min=self.labels_min,
            labels_max=self.labels_max,
            activity_probability=self.activity_probability,
        )

    def capacity_slots(self) -> int:
        """The slot count: direct, or a byte budget over pruned model files."""
        if isinstance(self.capacity, int):
            if self.capacity < 1:
                raise ConfigError("capacity must be a positive slot count")
            return self.capacity
        match = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*(GB|MB)\s*", self.capacity, re.IGNORECASE)
        if not match:
            raise ConfigError(f"capacity {self.capacity!r} is neither a slot count nor a size like '2GB'")
        budget_mb = float(match.group(1)) * (1024.0 if match.group(2).upper() == "GB" else 1.0)
        rate = self.prune_rate if self.prune_mode != "none" else 0.0
        _, file_mb = pruned_size(self.model_profile, rate)
        slots = int(budget_mb // file_mb)
        if slots < 1:
            raise ConfigError(f"capacity {self.capacity!r} cannot hold even one {self.model_profile} checkpoint")
        return slots

    def engine_kwargs(self) -> dict:
        from .learner import EnergyModel

        return {
            "shards": self.shards,
            "capacity_slots": self.capacity_slots(),
            "label_space": self.label_space,
            "rng_seed": self.rng_seed,
            "sc_gamma": self.sc_gamma,
            "sc_p": self.sc_p,
            "feature_dim": self.feature_dim,
            "energy": EnergyModel(self.energy_a, self.energy_b),
            "profile": self.model_profile,
            "test_samples_per_label": self.test_samples_per_label,
        }


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "variants":
        raw = raw.strip("[]")
        return tuple(part.strip().strip("\"'") for part in raw.split(",") if part.strip())
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> ScenarioConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    for key in ("n_users", "n_rounds", "rng_seed", "shards", "prune_steps", "label_space"):
        if key in values and not isinstance(values[key], int):
            raise ConfigError(f"key {key!r} must be an integer, got {values[key]!r}")
    try:
        return ScenarioConfig(**values)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def emit_config(config: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config_text(emit_config(c))`` equals ``c``."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if f.name == "variants":
            rendered = ", ".join(value)
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = repr(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
