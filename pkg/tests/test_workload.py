"""Workload generator: determinism, delete semantics, serialization."""

from __future__ import annotations

import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeunlearn.workload import (
    UpdateRequest,
    WorkloadConfig,
    dump_jsonl,
    enqueue_fcfs,
    generate_workload,
    load_jsonl,
)


def small_config(**overrides) -> WorkloadConfig:
    base = dict(
        n_users=4,
        n_rounds=5,
        unlearn_probability=0.5,
        rng_seed=1,
        label_space=6,
        chunk_min=5,
        chunk_max=20,
        labels_min=1,
        labels_max=3,
    )
    base.update(overrides)
    return WorkloadConfig(**base)


def all_deletes(stream):
    return [r for events in stream for r in events.deletes]


def test_replay_is_byte_identical():
    config = small_config(rng_seed=99)
    assert dump_jsonl(generate_workload(config)) == dump_jsonl(generate_workload(config))


def test_zero_probability_means_zero_deletes():
    for seed in range(10):
        stream = generate_workload(small_config(unlearn_probability=0.0, rng_seed=seed))
        assert all_deletes(stream) == []


def test_single_user_full_probability_deletes_once_per_round():
    stream = generate_workload(
        WorkloadConfig(n_users=1, n_rounds=3, unlearn_probability=1.0, rng_seed=7)
    )
    per_round = [len(events.deletes) for events in stream]
    assert per_round == [0, 1, 1]
    # Round 2 must forget the round-1 chunk, round 3 the round-2 chunk.
    assert stream[1].deletes[0].chunk_ids == (stream[0].added[0].chunk_id,)
    assert stream[2].deletes[0].chunk_ids == (stream[1].added[0].chunk_id,)


def test_monte_carlo_delete_count_matches_binomial():
    # With activity 1, every user has a live chunk from round 2 on, so the
    # total delete count is Binomial(n_users * (T-1), rho) exactly.  The spec
    # sketch's n*T*rho arithmetic ignores the delete-free first round.
    n_seeds = 1000
    trials, rho = 100 * 9, 0.1
    mean_expected = trials * rho
    sigma_mean = math.sqrt(trials * rho * (1 - rho)) / math.sqrt(n_seeds)
    counts = []
    for seed in range(n_seeds):
        config = WorkloadConfig(n_users=100, n_rounds=10, unlearn_probability=rho, rng_seed=seed)
        counts.append(len(all_deletes(generate_workload(config))))
    mean = sum(counts) / n_seeds
    assert abs(mean - mean_expected) <= 3 * sigma_mean


def test_fcfs_orders_by_request_id():
    reqs = [
        UpdateRequest(request_id=3, kind="delete", chunk_ids=(3,), arrival_round=2),
        UpdateRequest(request_id=1, kind="delete", chunk_ids=(1,), arrival_round=2),
        UpdateRequest(request_id=2, kind="delete", chunk_ids=(2,), arrival_round=2),
    ]
    assert [r.request_id for r in enqueue_fcfs(reqs)] == [1, 2, 3]
    assert enqueue_fcfs([]) == []
    assert enqueue_fcfs(reqs[:1]) == [reqs[0]]


def test_fcfs_rejects_mixed_rounds():
    reqs = [
        UpdateRequest(request_id=0, kind="delete", chunk_ids=(0,), arrival_round=1),
        UpdateRequest(request_id=1, kind="delete", chunk_ids=(1,), arrival_round=2),
    ]
    with pytest.raises(ValueError):
        enqueue_fcfs(reqs)


def test_no_chunk_is_deleted_twice_and_targets_are_earlier_live_chunks():
    stream = generate_workload(small_config(n_users=8, n_rounds=8, unlearn_probability=0.7))
    seen_chunks: dict[int, int] = {}
    deleted: set[int] = set()
    for events in stream:
        for req in events.deletes:
            for cid in req.chunk_ids:
                assert cid not in deleted, "chunk unlearned twice"
                assert cid in seen_chunks, "delete references unknown chunk"
                assert seen_chunks[cid] < events.round, "delete must target earlier rounds"
                deleted.add(cid)
        for chunk in events.added:
            seen_chunks[chunk.chunk_id] = events.round


def test_deletes_target_own_chunks_only():
    stream = generate_workload(small_config(n_users=6, n_rounds=6, unlearn_probability=0.8))
    owner = {c.chunk_id: c.owner for ev in stream for c in ev.added}
    for req in all_deletes(stream):
        owners = {owner[cid] for cid in req.chunk_ids}
        assert len(owners) == 1


def test_raising_probability_only_adds_delete_events():
    base = small_config(n_users=10, n_rounds=8, rng_seed=5)

    def fired(rho):
        stream = generate_workload(dataclasses.replace(base, unlearn_probability=rho))
        owner = {c.chunk_id: c.owner for ev in stream for c in ev.added}
        return {(owner[r.chunk_ids[0]], r.arrival_round) for r in all_deletes(stream)}

    low, mid, high = fired(0.1), fired(0.3), fired(0.5)
    assert low <= mid <= high


def test_adding_users_does_not_perturb_existing_streams():
    small = generate_workload(small_config(n_users=3, n_rounds=4, rng_seed=11))
    large = generate_workload(small_config(n_users=5, n_rounds=4, rng_seed=11))
    for ev_small, ev_large in zip(small, large):
        chunks_small = {c.owner: c for c in ev_small.added}
        chunks_large = {c.owner: c for c in ev_large.added if c.owner < 3}
        for owner, chunk in chunks_small.items():
            assert chunks_large[owner].sample_count == chunk.sample_count
            assert chunks_large[owner].label_histogram == chunk.label_histogram


def test_jsonl_round_trip():
    stream = generate_workload(small_config(rng_seed=21))
    text = dump_jsonl(stream)
    assert dump_jsonl(load_jsonl(text)) == text


def test_chunk_histogram_sums_to_sample_count():
    stream = generate_workload(small_config(n_users=10, n_rounds=6, rng_seed=3))
    for events in stream:
        for chunk in events.added:
            assert sum(chunk.label_histogram.values()) == chunk.sample_count
            assert chunk.sample_count > 0


@pytest.mark.parametrize(
    "bad",
    [
        dict(n_users=0),
        dict(unlearn_probability=1.5),
        dict(chunk_min=0),
        dict(chunk_min=30, chunk_max=20),
        dict(labels_min=0),
        dict(labels_max=9),
        dict(rng_seed=-1),
    ],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        small_config(**bad)


@given(
    n_users=st.integers(1, 6),
    n_rounds=st.integers(1, 6),
    rho=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
@settings(max_examples=25, deadline=None)
def test_generation_is_deterministic(n_users, n_rounds, rho, seed):
    config = WorkloadConfig(
        n_users=n_users,
        n_rounds=n_rounds,
        unlearn_probability=rho,
        rng_seed=seed,
        label_space=4,
        chunk_min=2,
        chunk_max=8,
        labels_min=1,
        labels_max=2,
    )
    assert dump_jsonl(generate_workload(config)) == dump_jsonl(generate_workload(config))
