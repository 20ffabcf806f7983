"""Shard-count schedule: exponential decay from S toward a floor of gamma*S.

The real-valued schedule is ``gamma*S + (1 - gamma)*S*exp(-p*t)``.  It starts
at S, decays at rate p, and flattens out at gamma*S, so the number of
sub-models trained per round shrinks over time without ever collapsing below
the configured floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["ShardControllerConfig", "shard_value", "shards_at"]


@dataclass(frozen=True)
class ShardControllerConfig:
    base_shards: int
    floor_fraction: float
    decay_rate: float

    def __post_init__(self) -> None:
        if self.base_shards < 1:
            raise ValueError("base_shards must be >= 1")
        if not 0.0 <= self.floor_fraction <= 1.0:
            raise ValueError("floor_fraction must be in [0, 1]")
        if self.decay_rate < 0.0:
            raise ValueError("decay_rate must be non-negative")


def shard_value(config: ShardControllerConfig, t: int) -> float:
    """Real-valued shard count at round ``t`` (t >= 0), before rounding."""
    if t < 0:
        raise ValueError("round index must be non-negative")
    s = float(config.base_shards)
    g = config.floor_fraction
    return g * s + (1.0 - g) * s * math.exp(-config.decay_rate * t)


def shards_at(config: ShardControllerConfig, t: int) -> int:
    """Integer shard count for round ``t``: nearest integer, clamped to >= 1.

    Rounding is half-away-from-zero so the integer schedule tracks the
    continuous curve as closely as possible.
    """
    real = shard_value(config, t)
    return max(1, int(math.floor(real + 0.5)))
