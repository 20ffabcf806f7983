"""Round-level data partitioning strategies.

Three ways to split one round's incoming chunks into shards:

* ``ucdp_partition`` groups by contributing user and greedily balances whole
  users across shards, so one user's round data always lands in one shard.
* ``uniform_partition`` shuffles chunks and deals them round-robin, ignoring
  ownership.
* ``class_partition`` routes samples by label into contiguous label-range
  shards; a chunk spanning several ranges appears in several shards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .workload import DataChunk

__all__ = [
    "ShardAssignment",
    "ucdp_partition",
    "ucdp_greedy",
    "uniform_partition",
    "class_partition",
    "label_ranges",
]


@dataclass(frozen=True)
class ShardAssignment:
    """Per-round shard split: ordered chunk-id sets plus the strategy used.

    ``label_groups`` is populated by the class-based strategy only; there a
    chunk id may appear in several shards (once per label range it touches).
    """

    round: int
    shards: tuple[frozenset[int], ...]
    strategy_tag: str
    label_groups: tuple[frozenset[int], ...] | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "round": self.round,
                "strategy": self.strategy_tag,
                "shards": [sorted(s) for s in self.shards],
            },
            sort_keys=True,
        )


def _group_by_owner(chunks: Iterable[DataChunk]) -> dict[int, list[DataChunk]]:
    by_owner: dict[int, list[DataChunk]] = {}
    for chunk in chunks:
        by_owner.setdefault(chunk.owner, []).append(chunk)
    return by_owner


def ucdp_greedy(
    shard_count: int,
    user_sizes: dict[int, int],
    seed_users: Sequence[int],
) -> list[list[int]]:
    """Deterministic core of the user-centered partition.

    ``seed_users`` are placed one per shard, in order.  Remaining users are
    then assigned in round-robin passes over the shards; each shard picks the
    user minimizing the positive part of

        (shard_size + user_size) / (users_in_shard + 1) - mean_user_size

    i.e. the user whose addition overshoots the per-user average the least
    (undershoot costs nothing).  Ties break toward the smallest user id.
    Returns the per-shard user lists.
    """
    if shard_count < 1:
        raise ValueError("shard_count must be >= 1")
    if len(seed_users) != shard_count:
        raise ValueError("need exactly one seed user per shard")
    mean_size = sum(user_sizes.values()) / len(user_sizes)
    members: list[list[int]] = [[u] for u in seed_users]
    totals = [user_sizes[u] for u in seed_users]
    remaining = sorted(set(user_sizes) - set(seed_users))
    while remaining:
        for s in range(shard_count):
            if not remaining:
                break
            best = min(
                remaining,
                key=lambda u: (max((totals[s] + user_sizes[u]) / (len(members[s]) + 1) - mean_size, 0.0), u),
            )
            members[s].append(best)
            totals[s] += user_sizes[best]
            remaining.remove(best)
    return members


def ucdp_partition(shard_count: int, chunks: Iterable[DataChunk], rng_seed: int) -> ShardAssignment:
    """Partition one round's chunks by contributing user.

    With at most ``shard_count`` contributing users, each user gets their own
    shard.  Otherwise ``shard_count`` randomly chosen users seed the shards
    and the rest are balanced greedily (see :func:`ucdp_greedy`).  All chunks
    of one user always share a shard.
    """
    if shard_count < 1:
        raise ValueError("shard_count must be >= 1")
    chunks = list(chunks)
    round_ = chunks[0].round if chunks else 0
    by_owner = _group_by_owner(chunks)
    users = sorted(by_owner)
    if not users:
        return ShardAssignment(round=round_, shards=(), strategy_tag="ucdp")
    if len(users) <= shard_count:
        shard_users = [[u] for u in users]
    else:
        sizes = {u: sum(c.sample_count for c in by_owner[u]) for u in users}
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed]))
        seeds = [users[i] for i in rng.choice(len(users), size=shard_count, replace=False)]
        shard_users = ucdp_greedy(shard_count, sizes, seeds)
    shards = tuple(
        frozenset(c.chunk_id for u in shard for c in by_owner[u]) for shard in shard_users
    )
    return ShardAssignment(round=round_, shards=shards, strategy_tag="ucdp")


def uniform_partition(shard_count: int, chunks: Iterable[DataChunk], rng_seed: int) -> ShardAssignment:
    """Seeded shuffle then round-robin deal into exactly ``shard_count`` shards."""
    if shard_count < 1:
        raise ValueError("shard_count must be >= 1")
    chunks = sorted(chunks, key=lambda c: c.chunk_id)
    round_ = chunks[0].round if chunks else 0
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed]))
    order = rng.permutation(len(chunks))
    shards: list[set[int]] = [set() for _ in range(shard_count)]
    for pos, idx in enumerate(order):
        shards[pos % shard_count].add(chunks[idx].chunk_id)
    return ShardAssignment(
        round=round_,
        shards=tuple(frozenset(s) for s in shards),
        strategy_tag="uniform",
    )


def label_ranges(label_space: int, shard_count: int) -> list[frozenset[int]]:
    """Split labels 0..label_space-1 into ``shard_count`` contiguous ranges.

    Ranges are as even as possible; the first ``label_space % shard_count``
    ranges take the extra label.
    """
    if shard_count < 1:
        raise ValueError("shard_count must be >= 1")
    if shard_count > label_space:
        raise ValueError("shard_count must not exceed the label space")
    base, extra = divmod(label_space, shard_count)
    ranges = []
    start = 0
    for g in range(shard_count):
        width = base + (1 if g < extra else 0)
        ranges.append(frozenset(range(start, start + width)))
        start += width
    return ranges


def class_partition(shard_count: int, chunks: Iterable[DataChunk], label_space: int) -> ShardAssignment:
    """Route each chunk's samples by label into contiguous label-range shards.

    A chunk appears in every shard whose label range intersects its
    histogram, so an unlearning request for it touches all those shards.
    """
    chunks = list(chunks)
    round_ = chunks[0].round if chunks else 0
    groups = label_ranges(label_space, shard_count)
    shards: list[set[int]] = [set() for _ in range(shard_count)]
    for chunk in chunks:
        for g, labels in enumerate(groups):
            if labels & chunk.label_histogram.keys():
                shards[g].add(chunk.chunk_id)
    return ShardAssignment(
        round=round_,
        shards=tuple(frozenset(s) for s in shards),
        strategy_tag="class_based",
        label_groups=tuple(groups),
    )
