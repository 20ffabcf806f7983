"""Capacity-bounded checkpoint stores with pluggable replacement policies.

The slot-mode store normalizes memory by the number of checkpoints it can
hold.  While free slots exist, inserts fill the lowest-index one.  Once full,
the victim is chosen by the policy:

* ``fibor``  — the replacement index advances by successive distinct
  Fibonacci numbers (0, 1, 2, 3, 5, 8, ...) modulo the capacity, visiting
  slots in a non-linear jumping pattern that keeps a mix of old and recent
  checkpoints resident.  Both the replacement index and the position in the
  Fibonacci sequence persist for the lifetime of the store.
* ``fifo``   — evicts the oldest-inserted checkpoint.
* ``random`` — evicts a seeded-uniform slot.
* ``none``   — refuses to evict; the incoming checkpoint is dropped.

A byte-mode store (`ByteMemoryStore`) treats capacity as a size budget over
heterogeneously sized checkpoints, and the static store gives each shard
exactly one overwrite slot (the classic keep-only-the-latest behavior).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

if TYPE_CHECKING:
    from .learner import CentroidState

__all__ = [
    "fib_distinct",
    "ModelCheckpoint",
    "ReplacementEvent",
    "MemoryStore",
    "ByteMemoryStore",
    "StaticShardStore",
    "lookup_latest_clean",
    "POLICIES",
]

POLICIES = ("fibor", "fifo", "random", "none")


def fib_distinct(k: int) -> int:
    """The k-th distinct Fibonacci number: 0, 1, 2, 3, 5, 8, 13, ...

    This is the Fibonacci sequence with the duplicate 1 removed, so
    f(0)=0, f(1)=1, f(2)=2 and f(k)=f(k-1)+f(k-2) from k=3 on.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return 0
    a, b = 1, 2
    for _ in range(k - 1):
        a, b = b, a + b
    return a


@dataclass
class ModelCheckpoint:
    """A stored sub-model snapshot usable as a retraining start point.

    ``covered_chunks`` are the chunk ids whose (retained) samples the
    snapshot was trained on; ``prefix_len`` and ``retained_snapshot`` pin the
    exact position in the owning lineage's replay order.
    """

    checkpoint_id: int
    lineage_id: tuple[int, int]
    covered_chunks: frozenset[int] = frozenset()
    state: "CentroidState | None" = None
    size_mb: float = 0.0
    round_created: int = 0
    prefix_len: int = 0
    retained_snapshot: tuple[int, ...] = ()


@dataclass(frozen=True)
class ReplacementEvent:
    """One store mutation: insert into a free slot, replace, drop, or delete.

    ``slot`` is 0-based (and None for drops); displays and exports add 1.
    """

    round: int
    kind: str
    slot: int | None
    evicted: int | None
    inserted: int | None

    @property
    def external_slot(self) -> int | None:
        return None if self.slot is None else self.slot + 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "round": self.round,
                "kind": self.kind,
                "slot": self.external_slot,
                "evicted": self.evicted,
                "inserted": self.inserted,
            },
            sort_keys=True,
        )


class MemoryStore:
    """Slot-normalized checkpoint store with a persistent replacement policy."""

    def __init__(self, capacity: int, policy: str = "fibor", rng_seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be a positive slot count")
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
        self.capacity = capacity
        self.policy = policy
        self.slots: list[int | None] = [None] * capacity
        self.events: list[ReplacementEvent] = []
        self._by_id: dict[int, ModelCheckpoint] = {}
        self._slot_of: dict[int, int] = {}
        self._insert_seq: list[int] = [0] * capacity
        self._seq = 0
        # FiboR counters survive for the lifetime of the store; resetting
        # them per batch would land every first eviction on slot 0.
        self._i_replace = 0
        self._i_fibor = 0
        self._fib_pair = (1 % capacity, 2 % capacity)
        self._rng = np.random.default_rng(np.random.SeedSequence([rng_seed]))

    @property
    def occupancy(self) -> int:
        return len(self._by_id)

    def get(self, checkpoint_id: int) -> ModelCheckpoint:
        return self._by_id[checkpoint_id]

    def __contains__(self, checkpoint_id: int) -> bool:
        return checkpoint_id in self._by_id

    def resident_checkpoints(self) -> list[ModelCheckpoint]:
        return [self._by_id[cid] for cid in self.slots if cid is not None]

    def _next_fib_step(self) -> int:
        """f(i_fibor) mod capacity, advancing the sequence position."""
        if self._i_fibor == 0:
            step = 0
        else:
            a, b = self._fib_pair
            step = a
            self._fib_pair = (b, (a + b) % self.capacity)
        self._i_fibor += 1
        return step

    def _pick_victim_slot(self) -> int | None:
        if self.policy == "fibor":
            self._i_replace = (self._i_replace + self._next_fib_step()) % self.capacity
            return self._i_replace
        if self.policy == "fifo":
            occupied = [s for s, cid in enumerate(self.slots) if cid is not None]
            return min(occupied, key=lambda s: self._insert_seq[s])
        if self.policy == "random":
            return int(self._rng.integers(self.capacity))
        return None  # no-replacement

    def _place(self, slot: int, checkpoint: ModelCheckpoint) -> None:
        self.slots[slot] = checkpoint.checkpoint_id
        self._by_id[checkpoint.checkpoint_id] = checkpoint
        self._slot_of[checkpoint.checkpoint_id] = slot
        self._seq += 1
        self._insert_seq[slot] = self._seq

    def store(self, checkpoint: ModelCheckpoint, round: int = 0) -> ReplacementEvent:
        """Insert a checkpoint, evicting per policy when no slot is free."""
        if checkpoint.checkpoint_id in self._by_id:
            raise ValueError(f"checkpoint {checkpoint.checkpoint_id} already stored")
        if None in self.slots:
            slot = self.slots.index(None)
            self._place(slot, checkpoint)
            event = ReplacementEvent(round, "insert", slot, None, checkpoint.checkpoint_id)
        else:
            slot = self._pick_victim_slot()
            if slot is None:
                event = ReplacementEvent(round, "drop", None, None, checkpoint.checkpoint_id)
            else:
                victim = self.slots[slot]
                assert victim is not None
                del self._by_id[victim]
                del self._slot_of[victim]
                self._place(slot, checkpoint)
                event = ReplacementEvent(round, "replace", slot, victim, checkpoint.checkpoint_id)
        self.events.append(event)
        return event

    def delete(self, checkpoint_id: int, round: int = 0) -> ReplacementEvent:
        """Remove a checkpoint, freeing its slot for the next insert."""
        slot = self._slot_of.pop(checkpoint_id)
        del self._by_id[checkpoint_id]
        self.slots[slot] = None
        event = ReplacementEvent(round, "delete", slot, checkpoint_id, None)
        self.events.append(event)
        return event


class ByteMemoryStore:
    """Checkpoint store with a byte budget over heterogeneous sizes.

    Residents form an ordered list; the FiboR jump indexes into that list
    instead of fixed slots, and evictions repeat until the incoming
    checkpoint fits.
    """

    def __init__(self, budget_mb: float, policy: str = "fibor", rng_seed: int = 0):
        if budget_mb <= 0:
            raise ValueError("budget_mb must be positive")
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
        self.budget_mb = budget_mb
        self.policy = policy
        self.events: list[ReplacementEvent] = []
        self._order: list[int] = []
        self._by_id: dict[int, ModelCheckpoint] = {}
        self._i_replace = 0
        self._i_fibor = 0
        self._fib_pair = (1, 2)
        self._rng = np.random.default_rng(np.random.SeedSequence([rng_seed]))

    @property
    def occupancy(self) -> int:
        return len(self._order)

    @property
    def used_mb(self) -> float:
        return sum(self._by_id[cid].size_mb for cid in self._order)

    def get(self, checkpoint_id: int) -> ModelCheckpoint:
        return self._by_id[checkpoint_id]

    def __contains__(self, checkpoint_id: int) -> bool:
        return checkpoint_id in self._by_id

    def resident_checkpoints(self) -> list[ModelCheckpoint]:
        return [self._by_id[cid] for cid in self._order]

    def _next_fib_step(self) -> int:
        if self._i_fibor == 0:
            step = 0
        else:
            step, nxt = self._fib_pair
            self._fib_pair = (nxt, step + nxt)
        self._i_fibor += 1
        return step

    def _evict_one(self, round: int) -> None:
        n = len(self._order)
        if self.policy == "fibor":
            self._i_replace = (self._i_replace + self._next_fib_step() % n) % n
            idx = self._i_replace
        elif self.policy == "fifo":
            idx = 0
        else:  # random
            idx = int(self._rng.integers(n))
        victim = self._order.pop(idx)
        del self._by_id[victim]
        self.events.append(ReplacementEvent(round, "replace", idx, victim, None))

    def store(self, checkpoint: ModelCheckpoint, round: int = 0) -> ReplacementEvent:
        if checkpoint.checkpoint_id in self._by_id:
            raise ValueError(f"checkpoint {checkpoint.checkpoint_id} already stored")
        can_fit = checkpoint.size_mb <= self.budget_mb
        if can_fit and self.policy == "none" and self.used_mb + checkpoint.size_mb > self.budget_mb:
            can_fit = False
        if not can_fit:
            event = ReplacementEvent(round, "drop", None, None, checkpoint.checkpoint_id)
            self.events.append(event)
            return event
        while self.used_mb + checkpoint.size_mb > self.budget_mb:
            self._evict_one(round)
        self._order.append(checkpoint.checkpoint_id)
        self._by_id[checkpoint.checkpoint_id] = checkpoint
        event = ReplacementEvent(round, "insert", len(self._order) - 1, None, checkpoint.checkpoint_id)
        self.events.append(event)
        return event

    def delete(self, checkpoint_id: int, round: int = 0) -> ReplacementEvent:
        idx = self._order.index(checkpoint_id)
        self._order.pop(idx)
        del self._by_id[checkpoint_id]
        event = ReplacementEvent(round, "delete", idx, checkpoint_id, None)
        self.events.append(event)
        return event


class StaticShardStore:
    """One overwrite slot per shard: only the latest checkpoint survives."""

    def __init__(self, n_shards: int):
        if n_shards < 1:
            raise ValueError("n_shards must be positive")
        self.capacity = n_shards
        self.slots: list[int | None] = [None] * n_shards
        self.events: list[ReplacementEvent] = []
        self._by_id: dict[int, ModelCheckpoint] = {}

    @property
    def occupancy(self) -> int:
        return len(self._by_id)

    def get(self, checkpoint_id: int) -> ModelCheckpoint:
        return self._by_id[checkpoint_id]

    def __contains__(self, checkpoint_id: int) -> bool:
        return checkpoint_id in self._by_id

    def resident_checkpoints(self) -> list[ModelCheckpoint]:
        return [self._by_id[cid] for cid in self.slots if cid is not None]

    def store(self, checkpoint: ModelCheckpoint, round: int = 0) -> ReplacementEvent:
        slot = checkpoint.lineage_id[0]
        if not 0 <= slot < self.capacity:
            raise ValueError(f"shard index {slot} outside the static store")
        victim = self.slots[slot]
        if victim is not None:
            del self._by_id[victim]
        self.slots[slot] = checkpoint.checkpoint_id
        self._by_id[checkpoint.checkpoint_id] = checkpoint
        kind = "insert" if victim is None else "replace"
        event = ReplacementEvent(round, kind, slot, victim, checkpoint.checkpoint_id)
        self.events.append(event)
        return event

    def delete(self, checkpoint_id: int, round: int = 0) -> ReplacementEvent:
        slot = self.slots.index(checkpoint_id)
        self.slots[slot] = None
        del self._by_id[checkpoint_id]
        event = ReplacementEvent(round, "delete", slot, checkpoint_id, None)
        self.events.append(event)
        return event


def lookup_latest_clean(
    store: MemoryStore | ByteMemoryStore | StaticShardStore,
    lineage_id: tuple[int, int],
    forbidden_chunks: Iterable[int],
) -> ModelCheckpoint | None:
    """Latest stored checkpoint of the lineage untouched by the given chunks.

    Among residents of ``lineage_id`` whose coverage is disjoint from
    ``forbidden_chunks``, returns the one with the largest coverage (ties go
    to the most recent); None when every stored snapshot is contaminated.
    """
    forbidden = frozenset(forbidden_chunks)
    best: ModelCheckpoint | None = None
    for ckpt in store.resident_checkpoints():
        if ckpt.lineage_id != lineage_id or ckpt.covered_chunks & forbidden:
            continue
        key = (ckpt.prefix_len, len(ckpt.covered_chunks), ckpt.round_created, ckpt.checkpoint_id)
        if best is None or key > (best.prefix_len, len(best.covered_chunks), best.round_created, best.checkpoint_id):
            best = ckpt
    return best
