"""Sharded training with exact unlearning over a request stream.

Each variant processes the same workload round by round: partition the
round's chunks into shards, extend each shard's lineage with its new data,
prune, and snapshot the trained sub-models into the checkpoint store.  With
the shard controller enabled, the decaying schedule caps how many of the
round's sub-models are snapshotted, easing storage pressure over time.
Delete requests roll every touched lineage back to its latest clean stored
checkpoint, replay everything after it except the forgotten samples, delete
the contaminated checkpoints, and store the retrained snapshot.

The retrained-sample number (RSN) of a request is the count of retained
samples replayed to service it — the simulator's proxy for retraining time —
and energy is linear in it.  Because the learner is exactly incremental, a
retrained checkpoint is bit-identical to a from-scratch retrain on the
retained data, which the test suite verifies end to end.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .controller import ShardControllerConfig, shards_at
from .learner import (
    CentroidState,
    EnergyModel,
    FeatureSpace,
    empty_state,
    majority_vote,
    prune_iterative,
    train_incremental,
)
from .memory import MemoryStore, ModelCheckpoint, StaticShardStore, lookup_latest_clean
from .partition import ShardAssignment, class_partition, ucdp_partition, uniform_partition
from .profiles import ModelSizeProfile, get_profile, pruned_size
from .workload import DataChunk, RoundEvents, UpdateRequest, enqueue_fcfs

__all__ = [
    "EngineInvariantError",
    "UnknownChunkError",
    "SystemVariant",
    "VARIANT_PRESETS",
    "variant_from_tag",
    "Fragment",
    "Lineage",
    "MetricsRecord",
    "UnlearnAudit",
    "UnlearningSimulation",
    "ScenarioResult",
    "run_scenario",
    "metrics_to_csv",
    "CSV_HEADER",
]

_STREAM_PARTITION = 21


class EngineInvariantError(RuntimeError):
    """An internal accounting invariant was violated mid-run."""


class UnknownChunkError(ValueError):
    """A delete referenced a chunk that is unknown or already unlearned."""


@dataclass(frozen=True)
class SystemVariant:
    """One system configuration: partitioner, store policy, schedule, pruning."""

    tag: str
    partition_strategy: str  # ucdp | uniform | class_based
    replacement_policy: str  # fibor | fifo | random | none | static
    shard_controller: bool
    prune_mode: str  # iterative | oneshot | none
    prune_rate: float = 0.0
    prune_steps: int = 2


VARIANT_PRESETS: dict[str, SystemVariant] = {
    v.tag: v
    for v in [
        SystemVariant("cause", "ucdp", "fibor", True, "iterative", 0.7),
        SystemVariant("cause_no_sc", "ucdp", "fibor", False, "iterative", 0.7),
        SystemVariant("cause_u", "uniform", "fibor", True, "iterative", 0.7),
        SystemVariant("cause_c", "class_based", "fibor", True, "iterative", 0.7),
        SystemVariant("sisa", "uniform", "static", False, "none"),
        SystemVariant("arcane", "class_based", "static", False, "none"),
        SystemVariant("omp70", "uniform", "none", False, "oneshot", 0.7, 1),
        SystemVariant("omp95", "uniform", "none", False, "oneshot", 0.95, 1),
        # Replacement-policy ablations.
        SystemVariant("cause_fifo", "ucdp", "fifo", True, "iterative", 0.7),
        SystemVariant("cause_random", "ucdp", "random", True, "iterative", 0.7),
        SystemVariant("cause_norepl", "ucdp", "none", True, "iterative", 0.7),
    ]
}


def variant_from_tag(tag: str) -> SystemVariant:
    try:
        return VARIANT_PRESETS[tag]
    except KeyError:
        raise KeyError(f"unknown variant {tag!r}; known: {sorted(VARIANT_PRESETS)}") from None


@dataclass(frozen=True)
class Fragment:
    """The atomic learned unit: one chunk's samples of one label."""

    chunk_id: int
    label: int
    round: int
    owner: int
    full_count: int


class Lineage:
    """Cross-round history of one shard's incremental sub-model."""

    def __init__(self, shard_index: int, creation_round: int):
        self.lineage_id = (shard_index, creation_round)
        self.shard_index = shard_index
        self.items: list[Fragment] = []
        self.chunk_items: dict[int, list[int]] = {}

    def extend(self, fragments: Iterable[Fragment]) -> None:
        for frag in fragments:
            self.chunk_items.setdefault(frag.chunk_id, []).append(len(self.items))
            self.items.append(frag)


@dataclass
class MetricsRecord:
    round: int
    variant: str
    rsn_round: int
    rsn_cumulative: int
    retrain_ratio: float
    energy_joules: float
    occupancy: int
    replacements: int
    drops: int
    accuracy: float | None = None


@dataclass
class UnlearnAudit:
    """Everything an independent oracle needs to re-check one retrain episode."""

    request_id: int
    lineage_id: tuple[int, int]
    rsn: int
    start_prefix: int
    residents_before: tuple[tuple[int, int, frozenset[int]], ...]
    retained_counts: tuple[int, ...]
    new_state: CentroidState | None


CSV_HEADER = "round,variant,rsn_round,rsn_cum,retrain_ratio,energy_j,occupancy,replacements,drops,accuracy"


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def metrics_to_csv(records: Sequence[MetricsRecord]) -> str:
    """Render metrics rows ordered by (variant, round); byte-stable."""
    lines = [CSV_HEADER]
    for r in sorted(records, key=lambda r: (r.variant, r.round)):
        lines.append(
            f"{r.round},{r.variant},{r.rsn_round},{r.rsn_cumulative},"
            f"{_fmt(r.retrain_ratio)},{_fmt(r.energy_joules)},{r.occupancy},"
            f"{r.replacements},{r.drops},{_fmt(r.accuracy)}"
        )
    return "\n".join(lines) + "\n"


def _retained_after_delete(chunk: DataChunk, fraction: float) -> dict[int, int]:
    """Per-label retained counts after removing ``fraction`` of the chunk.

    Samples are ordered by ascending label; deletion removes a suffix of at
    least one sample, so the retained set is always a prefix.
    """
    total = chunk.sample_count
    if fraction >= 1.0:
        removed = total
    else:
        removed = min(total, max(1, int(math.floor(fraction * total + 0.5))))
    budget = total - removed
    retained: dict[int, int] = {}
    for label in sorted(chunk.label_histogram):
        take = min(chunk.label_histogram[label], budget)
        retained[label] = take
        budget -= take
    return retained


class UnlearningSimulation:
    """One variant's deterministic run over a workload stream."""

    def __init__(
        self,
        variant: SystemVariant,
        *,
        shards: int,
        capacity_slots: int,
        label_space: int,
        features: FeatureSpace,
        sc_gamma: float = 0.5,
        sc_p: float = 0.5,
        energy: EnergyModel | None = None,
        profile: ModelSizeProfile | str = "toy",
        rng_seed: int = 0,
        test_samples_per_label: int = 20,
        audit: bool = False,
    ):
        self.variant = variant
        self.base_shards = shards
        self.label_space = label_space
        self.features = features
        self.energy = energy or EnergyModel()
        self.profile = get_profile(profile) if isinstance(profile, str) else profile
        self.rng_seed = rng_seed
        self.controller = ShardControllerConfig(shards, sc_gamma, sc_p) if variant.shard_controller else None
        if variant.replacement_policy == "static":
            self.store: MemoryStore | StaticShardStore = StaticShardStore(shards)
        else:
            policy_seed = int(np.uint64(rng_seed) ^ np.uint64(zlib.crc32(variant.tag.encode())))
            self.store = MemoryStore(capacity_slots, variant.replacement_policy, rng_seed=policy_seed)
        # Checkpoint byte size follows the profile at the variant's pruning
        # rate, clamped to the measured curve domain.
        size_rate = min(variant.prune_rate, 0.9) if variant.prune_mode != "none" else 0.0
        self.checkpoint_mb = pruned_size(self.profile, size_rate)[1]

        self.chunks: dict[int, DataChunk] = {}
        self.retained: dict[int, dict[int, int]] = {}
        self.tombstoned: set[int] = set()
        self.chunk_lineages: dict[int, list[Lineage]] = {}
        self.active: dict[int, Lineage] = {}
        self.lineages: list[Lineage] = []
        # User-centered partitioning pins each user to a home shard on first
        # contribution so one user's unlearning request touches one lineage.
        self.user_home: dict[int, int] = {}
        self._last_snapshot_round: dict[tuple[int, int], int] = {}
        self.live_states: dict[tuple[int, int], CentroidState] = {}
        self.records: list[MetricsRecord] = []
        self.audit: list[UnlearnAudit] | None = [] if audit else None

        self._next_checkpoint = 1
        self._added_samples = 0
        self._unlearned_samples = 0
        self._rsn_cumulative = 0
        self._test_set = features.test_set(test_samples_per_label) if test_samples_per_label > 0 else None

    # -- bookkeeping ------------------------------------------------------

    @property
    def live_samples(self) -> int:
        return self._added_samples - self._unlearned_samples

    def lineage_live_samples(self, lineage: Lineage) -> int:
        return sum(self.retained[f.chunk_id].get(f.label, 0) for f in lineage.items)

    def _check_conservation(self) -> None:
        total = sum(sum(r.values()) for r in self.retained.values())
        if total != self.live_samples:
            raise EngineInvariantError(
                f"sample conservation broken: retained {total} != added-unlearned {self.live_samples}"
            )

    def _partition_seed(self, round_: int) -> int:
        ss = np.random.SeedSequence([self.rng_seed, _STREAM_PARTITION, round_])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def _partition(self, shard_count: int, chunks: list[DataChunk], round_: int) -> ShardAssignment:
        strategy = self.variant.partition_strategy
        if strategy == "ucdp":
            return ucdp_partition(shard_count, chunks, self._partition_seed(round_))
        if strategy == "uniform":
            return uniform_partition(shard_count, chunks, self._partition_seed(round_))
        if strategy == "class_based":
            return class_partition(shard_count, chunks, self.label_space)
        raise ValueError(f"unknown partition strategy {strategy!r}")

    def _active_lineage(self, shard_index: int, round_: int) -> Lineage:
        lineage = self.active.get(shard_index)
        if lineage is None:
            lineage = Lineage(shard_index, round_)
            self.active[shard_index] = lineage
            self.lineages.append(lineage)
        return lineage

    def _fragments_for(self, chunk_ids: Iterable[int], labels: frozenset[int] | None) -> list[Fragment]:
        """Canonically ordered fragments of the given chunks, optionally
        restricted to one label group."""
        fragments = []
        for cid in sorted(chunk_ids, key=lambda c: (self.chunks[c].owner, c)):
            chunk = self.chunks[cid]
            for label in sorted(chunk.label_histogram):
                if labels is None or label in labels:
                    fragments.append(
                        Fragment(cid, label, chunk.round, chunk.owner, chunk.label_histogram[label])
                    )
        return fragments

    def _prune(self, state: CentroidState) -> CentroidState:
        if self.variant.prune_mode == "none" or state.trained_sample_count == 0:
            return state
        steps = 1 if self.variant.prune_mode == "oneshot" else self.variant.prune_steps
        return prune_iterative(state, self.variant.prune_rate, steps)

    def _snapshot(self, lineage: Lineage, state: CentroidState, round_: int) -> ModelCheckpoint:
        retained = tuple(self.retained[f.chunk_id].get(f.label, 0) for f in lineage.items)
        covered = frozenset(
            f.chunk_id for f, r in zip(lineage.items, retained) if r > 0
        )
        ckpt = ModelCheckpoint(
            checkpoint_id=self._next_checkpoint,
            lineage_id=lineage.lineage_id,
            covered_chunks=covered,
            state=state.copy(),
            size_mb=self.checkpoint_mb,
            round_created=round_,
            prefix_len=len(lineage.items),
            retained_snapshot=retained,
        )
        self._next_checkpoint += 1
        self.store.store(ckpt, round_)
        return ckpt

    # -- round processing -------------------------------------------------

    def run_round(self, events: RoundEvents) -> MetricsRecord:
        """Train on the round's chunks, then service its delete requests."""
        t = events.round
        events_before = len(self.store.events)
        if events.added:
            for chunk in events.added:
                self.chunks[chunk.chunk_id] = chunk
                self.retained[chunk.chunk_id] = dict(chunk.label_histogram)
                self._added_samples += chunk.sample_count
            assignment = self._partition(self.base_shards, events.added, t)
            groups = assignment.label_groups
            shard_sets: Sequence[frozenset[int]] = assignment.shards
            if self.variant.partition_strategy == "ucdp":
                suggested: dict[int, int] = {}
                for s, chunk_ids in enumerate(assignment.shards):
                    for cid in chunk_ids:
                        suggested[self.chunks[cid].owner] = s
                routed: list[set[int]] = [set() for _ in range(self.base_shards)]
                for chunk in events.added:
                    home = self.user_home.get(chunk.owner)
                    if home is None:
                        home = suggested[chunk.owner]
                        self.user_home[chunk.owner] = home
                    routed[home].add(chunk.chunk_id)
                shard_sets = [frozenset(s) for s in routed]
            trained: list[Lineage] = []
            for shard_index, chunk_ids in enumerate(shard_sets):
                if not chunk_ids:
                    continue
                labels = groups[shard_index] if groups is not None else None
                fragments = self._fragments_for(chunk_ids, labels)
                if not fragments:
                    continue
                lineage = self._active_lineage(shard_index, t)
                state = self.live_states.get(lineage.lineage_id)
                if state is None:
                    state = empty_state(self.label_space, self.features.dim)
                blocks = [
                    (f.label, *self.features.block_stats(f.chunk_id, f.label, f.full_count))
                    for f in fragments
                ]
                state = train_incremental(state, blocks)
                state = self._prune(state)
                lineage.extend(fragments)
                for f in fragments:
                    owners = self.chunk_lineages.setdefault(f.chunk_id, [])
                    if lineage not in owners:
                        owners.append(lineage)
                self.live_states[lineage.lineage_id] = state
                trained.append(lineage)
            # The schedule caps how many of the round's sub-models get
            # snapshotted; with it off, every trained sub-model is stored.
            budget = shards_at(self.controller, t) if self.controller else len(trained)
            trained.sort(key=lambda l: (self._last_snapshot_round.get(l.lineage_id, -1), l.shard_index))
            for lineage in trained[:budget]:
                self._snapshot(lineage, self.live_states[lineage.lineage_id], t)
                self._last_snapshot_round[lineage.lineage_id] = t
        rsn_round = 0
        episodes = 0
        for request in enqueue_fcfs(events.deletes):
            rsn, n_episodes = self.handle_unlearning(request)
            rsn_round += rsn
            episodes += n_episodes
        self._check_conservation()
        self._rsn_cumulative += rsn_round
        new_events = self.store.events[events_before:]
        record = MetricsRecord(
            round=t,
            variant=self.variant.tag,
            rsn_round=rsn_round,
            rsn_cumulative=self._rsn_cumulative,
            retrain_ratio=(rsn_round / self.live_samples) if self.live_samples > 0 else 0.0,
            energy_joules=self.energy.joules_per_sample * rsn_round + self.energy.fixed_overhead * episodes,
            occupancy=self.store.occupancy,
            replacements=sum(1 for e in new_events if e.kind == "replace"),
            drops=sum(1 for e in new_events if e.kind == "drop"),
            accuracy=self.evaluate_accuracy() if self._test_set is not None else None,
        )
        self.records.append(record)
        return record

    # -- unlearning -------------------------------------------------------

    def handle_unlearning(self, request: UpdateRequest) -> tuple[int, int]:
        """Service one delete request; returns (request RSN, retrain episodes)."""
        for cid in request.chunk_ids:
            if cid not in self.chunks:
                raise UnknownChunkError(f"delete references unknown chunk {cid}")
            if cid in self.tombstoned:
                raise UnknownChunkError(f"chunk {cid} was already unlearned")
        request_chunks = frozenset(request.chunk_ids)
        touched: dict[tuple[int, int], Lineage] = {}
        for cid in request.chunk_ids:
            for lineage in self.chunk_lineages.get(cid, []):
                touched[lineage.lineage_id] = lineage
        # Update ground truth before replaying: the replay must exclude the
        # samples this very request removes.
        for cid in request.chunk_ids:
            chunk = self.chunks[cid]
            new_retained = _retained_after_delete(chunk, request.sample_fraction)
            removed = sum(self.retained[cid].values()) - sum(new_retained.values())
            self.retained[cid] = new_retained
            self._unlearned_samples += removed
            self.tombstoned.add(cid)
        total_rsn = 0
        episodes = 0
        for lineage_id in sorted(touched):
            lineage = touched[lineage_id]
            residents_before = tuple(
                (c.checkpoint_id, c.prefix_len, c.covered_chunks)
                for c in self.store.resident_checkpoints()
                if c.lineage_id == lineage_id
            )
            clean = lookup_latest_clean(self.store, lineage_id, request_chunks)
            for ckpt in [c for c in self.store.resident_checkpoints() if c.lineage_id == lineage_id]:
                if ckpt.covered_chunks & request_chunks:
                    self.store.delete(ckpt.checkpoint_id, request.arrival_round)
            start = clean.prefix_len if clean else 0
            state = clean.state.copy() if clean else empty_state(self.label_space, self.features.dim)
            rsn = 0
            blocks = []
            for frag in lineage.items[start:]:
                count = self.retained[frag.chunk_id].get(frag.label, 0)
                if count > 0:
                    blocks.append((frag.label, *self.features.block_stats(frag.chunk_id, frag.label, count)))
                    rsn += count
            state = train_incremental(state, blocks)
            state = self._prune(state)
            episodes += 1
            total_rsn += rsn
            if self.lineage_live_samples(lineage) == 0:
                # Nothing left to serve: drop the live model instead of
                # storing an empty snapshot.
                self.live_states.pop(lineage_id, None)
                new_state = None
            else:
                self.live_states[lineage_id] = state
                self._snapshot(lineage, state, request.arrival_round)
                new_state = state
            if self.audit is not None:
                self.audit.append(
                    UnlearnAudit(
                        request_id=request.request_id,
                        lineage_id=lineage_id,
                        rsn=rsn,
                        start_prefix=start,
                        residents_before=residents_before,
                        retained_counts=tuple(
                            self.retained[f.chunk_id].get(f.label, 0) for f in lineage.items
                        ),
                        new_state=new_state,
                    )
                )
        return total_rsn, episodes

    # -- evaluation -------------------------------------------------------

    def ensemble_checkpoints(self) -> list[ModelCheckpoint]:
        """Latest stored checkpoint of every lineage that still has live data."""
        ensemble = []
        for lineage in self.lineages:
            if self.lineage_live_samples(lineage) == 0:
                continue
            own = [c for c in self.store.resident_checkpoints() if c.lineage_id == lineage.lineage_id]
            if own:
                ensemble.append(max(own, key=lambda c: (c.prefix_len, c.round_created, c.checkpoint_id)))
        return ensemble

    def evaluate_accuracy(self) -> float | None:
        if self._test_set is None:
            raise ValueError("simulation was built without a test set")
        xs, ys = self._test_set
        if len(xs) == 0:
            raise ValueError("empty test set")
        ensemble = self.ensemble_checkpoints()
        votes = [c.state.predict(xs) for c in ensemble if c.state is not None and c.state.counts.any()]
        if not votes:
            return None
        stacked = np.stack(votes, axis=0)
        agreed = np.array([majority_vote(stacked[:, i].tolist()) for i in range(stacked.shape[1])])
        return float((agreed == ys).mean())


@dataclass
class ScenarioResult:
    records: list[MetricsRecord]
    runs: dict[str, UnlearningSimulation] = field(default_factory=dict)

    def cumulative_rsn(self, tag: str) -> int:
        rows = [r for r in self.records if r.variant == tag]
        return rows[-1].rsn_cumulative if rows else 0


def run_scenario(
    stream: Sequence[RoundEvents],
    variants: Sequence[SystemVariant | str],
    *,
    shards: int,
    capacity_slots: int,
    label_space: int,
    rng_seed: int,
    sc_gamma: float = 0.5,
    sc_p: float = 0.5,
    feature_dim: int = 8,
    energy: EnergyModel | None = None,
    profile: ModelSizeProfile | str = "toy",
    test_samples_per_label: int = 20,
    audit: bool = False,
) -> ScenarioResult:
    """Replay one workload stream under every variant; fully deterministic."""
    features = FeatureSpace(rng_seed, label_space, feature_dim)
    result = ScenarioResult(records=[])
    for entry in variants:
        variant = variant_from_tag(entry) if isinstance(entry, str) else entry
        sim = UnlearningSimulation(
            variant,
            shards=shards,
            capacity_slots=capacity_slots,
            label_space=label_space,
            features=features,
            sc_gamma=sc_gamma,
            sc_p=sc_p,
            energy=energy,
            profile=profile,
            rng_seed=rng_seed,
            test_samples_per_label=test_samples_per_label,
            audit=audit,
        )
        for events in stream:
            sim.run_round(events)
        result.records.extend(sim.records)
        result.runs[variant.tag] = sim
    return result
