"""Deterministic synthetic learning/unlearning request streams.

A workload is a sequence of rounds.  In each round a set of users contributes
data chunks (non-iid label mixes and sizes), and each user may additionally
raise a request to forget some of the chunks they contributed in earlier
rounds.  Everything is derived from per-(user, round) seeded RNG streams, so
regenerating with the same config is byte-identical, adding users never
perturbs existing users' streams, and raising the unlearn probability only
adds delete events on top of the ones a lower probability produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "UserProfile",
    "DataChunk",
    "UpdateRequest",
    "WorkloadConfig",
    "RoundEvents",
    "generate_workload",
    "enqueue_fcfs",
    "dump_jsonl",
    "load_jsonl",
]

# Stream tags keep the per-purpose RNG substreams disjoint.
_STREAM_PROFILE = 1
_STREAM_CHUNK = 2
_STREAM_TRIGGER = 3
_STREAM_SUBSET = 4


@dataclass(frozen=True)
class UserProfile:
    """Static per-user generation parameters."""

    user_id: int
    label_subset: tuple[int, ...]
    chunk_size_bounds: tuple[int, int]
    activity_probability: float = 1.0

    def __post_init__(self) -> None:
        if not self.label_subset:
            raise ValueError("label_subset must be non-empty")
        lo, hi = self.chunk_size_bounds
        if not (0 < lo <= hi):
            raise ValueError("chunk size bounds must satisfy 0 < min <= max")
        if not 0.0 <= self.activity_probability <= 1.0:
            raise ValueError("activity_probability must be in [0, 1]")


@dataclass
class DataChunk:
    """One atomic unit of user-contributed training data."""

    chunk_id: int
    owner: int
    round: int
    sample_count: int
    label_histogram: dict[int, int]

    def __post_init__(self) -> None:
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")
        if sum(self.label_histogram.values()) != self.sample_count:
            raise ValueError("label_histogram must sum to sample_count")


@dataclass(frozen=True)
class UpdateRequest:
    """An add or delete event targeting previously known chunks.

    ``sample_fraction`` applies per referenced chunk: 1.0 removes the whole
    chunk, a fraction in (0, 1) removes that share of its samples.
    """

    request_id: int
    kind: str
    chunk_ids: tuple[int, ...]
    arrival_round: int
    sample_fraction: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("add", "delete"):
            raise ValueError(f"unknown request kind {self.kind!r}")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")


@dataclass(frozen=True)
class WorkloadConfig:
    n_users: int
    n_rounds: int
    unlearn_probability: float
    rng_seed: int
    label_space: int = 10
    chunk_min: int = 50
    chunk_max: int = 500
    labels_min: int = 2
    labels_max: int = 5
    activity_probability: float = 1.0

    def __post_init__(self) -> None:
        if self.n_users < 1 or self.n_rounds < 1:
            raise ValueError("n_users and n_rounds must be positive")
        if not 0.0 <= self.unlearn_probability <= 1.0:
            raise ValueError("unlearn_probability must be in [0, 1]")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must fit in 64 unsigned bits")
        if self.label_space < 1:
            raise ValueError("label_space must be positive")
        if not (0 < self.chunk_min <= self.chunk_max):
            raise ValueError("chunk size bounds must satisfy 0 < min <= max")
        if not (0 < self.labels_min <= self.labels_max <= self.label_space):
            raise ValueError("label subset bounds must fit the label space")
        if not 0.0 <= self.activity_probability <= 1.0:
            raise ValueError("activity_probability must be in [0, 1]")


@dataclass
class RoundEvents:
    """Everything arriving in one round: new chunks, then delete requests."""

    round: int
    added: list[DataChunk] = field(default_factory=list)
    deletes: list[UpdateRequest] = field(default_factory=list)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def build_profiles(config: WorkloadConfig) -> list[UserProfile]:
    """Draw the static per-user profiles (label subsets, size bounds)."""
    profiles = []
    for user in range(config.n_users):
        rng = _rng(config.rng_seed, _STREAM_PROFILE, user)
        n_labels = int(rng.integers(config.labels_min, config.labels_max + 1))
        subset = tuple(sorted(rng.choice(config.label_space, size=n_labels, replace=False).tolist()))
        profiles.append(
            UserProfile(
                user_id=user,
                label_subset=subset,
                chunk_size_bounds=(config.chunk_min, config.chunk_max),
                activity_probability=config.activity_probability,
            )
        )
    return profiles


def _draw_chunk(
    profile: UserProfile, rng: np.random.Generator, chunk_id: int, round_: int
) -> DataChunk | None:
    """One round's contribution from this user's dedicated chunk stream.

    The stream consumes the same number of draws every round, so a user's
    later chunks do not depend on other users or on the delete history.
    """
    if profile.activity_probability < 1.0 and rng.random() >= profile.activity_probability:
        return None
    lo, hi = profile.chunk_size_bounds
    n = int(rng.integers(lo, hi + 1))
    counts = rng.multinomial(n, [1.0 / len(profile.label_subset)] * len(profile.label_subset))
    histogram = {label: int(c) for label, c in zip(profile.label_subset, counts) if c > 0}
    return DataChunk(chunk_id=chunk_id, owner=profile.user_id, round=round_, sample_count=n, label_histogram=histogram)


def _draw_delete_subset(config: WorkloadConfig, user: int, round_: int, live: Sequence[int]) -> tuple[int, ...]:
    """Uniformly chosen non-empty subset of the user's live chunk ids."""
    rng = _rng(config.rng_seed, _STREAM_SUBSET, user, round_)
    m = len(live)
    if m == 1:
        return (live[0],)
    if m <= 62:
        bits = int(rng.integers(1, 1 << m))
    else:
        while True:
            mask = rng.integers(0, 2, size=m)
            if mask.any():
                break
        bits = int(sum(1 << i for i, b in enumerate(mask) if b))
    return tuple(live[i] for i in range(m) if bits >> i & 1)


def generate_workload(config: WorkloadConfig) -> list[RoundEvents]:
    """Generate the full event stream for ``config``.

    Delete requests only ever reference chunks added in strictly earlier
    rounds and not yet deleted; each user raises at most one delete per
    round, with probability ``unlearn_probability``.  Trigger draws are one
    fixed uniform per (user, round), so raising the probability only adds
    delete events on top of those a lower probability already produced.
    """
    profiles = build_profiles(config)
    stream: list[RoundEvents] = []
    live_by_user: dict[int, list[int]] = {u: [] for u in range(config.n_users)}
    chunk_streams = {u: _rng(config.rng_seed, _STREAM_CHUNK, u) for u in range(config.n_users)}
    triggers = {
        u: _rng(config.rng_seed, _STREAM_TRIGGER, u).random(config.n_rounds)
        for u in range(config.n_users)
    }
    next_chunk = 0
    next_request = 0
    for t in range(1, config.n_rounds + 1):
        events = RoundEvents(round=t)
        for profile in profiles:
            user = profile.user_id
            # Deletes are decided against the chunks live *before* this
            # round's contribution, so they target strictly earlier rounds.
            if live_by_user[user] and triggers[user][t - 1] < config.unlearn_probability:
                target = _draw_delete_subset(config, user, t, live_by_user[user])
                events.deletes.append(
                    UpdateRequest(
                        request_id=next_request,
                        kind="delete",
                        chunk_ids=target,
                        arrival_round=t,
                    )
                )
                next_request += 1
                gone = set(target)
                live_by_user[user] = [c for c in live_by_user[user] if c not in gone]
            chunk = _draw_chunk(profile, chunk_streams[user], next_chunk, t)
            if chunk is not None:
                events.added.append(chunk)
                next_chunk += 1
        for chunk in events.added:
            live_by_user[chunk.owner].append(chunk.chunk_id)
        events.deletes = enqueue_fcfs(events.deletes)
        stream.append(events)
    return stream


def enqueue_fcfs(requests: Iterable[UpdateRequest]) -> list[UpdateRequest]:
    """Order simultaneous requests first-come-first-served (by request id)."""
    ordered = sorted(requests, key=lambda r: r.request_id)
    rounds = {r.arrival_round for r in ordered}
    if len(rounds) > 1:
        raise ValueError("FCFS queue expects requests from a single round")
    return ordered


def dump_jsonl(stream: Sequence[RoundEvents]) -> str:
    """Serialize a workload stream as JSON-lines, one event per line."""
    lines = []
    for events in stream:
        for chunk in events.added:
            lines.append(
                json.dumps(
                    {
                        "round": events.round,
                        "type": "add",
                        "chunk_id": chunk.chunk_id,
                        "owner": chunk.owner,
                        "sample_count": chunk.sample_count,
                        "labels": {str(k): v for k, v in sorted(chunk.label_histogram.items())},
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
        for req in events.deletes:
            lines.append(
                json.dumps(
                    {
                        "round": events.round,
                        "type": "delete",
                        "request_id": req.request_id,
                        "chunks": list(req.chunk_ids),
                        "fraction": req.sample_fraction,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
    return "\n".join(lines) + ("\n" if lines else "")


def load_jsonl(text: str) -> list[RoundEvents]:
    """Parse a stream dumped by :func:`dump_jsonl`."""
    by_round: dict[int, RoundEvents] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        events = by_round.setdefault(record["round"], RoundEvents(round=record["round"]))
        if record["type"] == "add":
            events.added.append(
                DataChunk(
                    chunk_id=record["chunk_id"],
                    owner=record["owner"],
                    round=record["round"],
                    sample_count=record["sample_count"],
                    label_histogram={int(k): v for k, v in record["labels"].items()},
                )
            )
        elif record["type"] == "delete":
            events.deletes.append(
                UpdateRequest(
                    request_id=record["request_id"],
                    kind="delete",
                    chunk_ids=tuple(record["chunks"]),
                    arrival_round=record["round"],
                    sample_fraction=record["fraction"],
                )
            )
        else:
            raise ValueError(f"unknown event type {record['type']!r}")
    return [by_round[t] for t in sorted(by_round)]
