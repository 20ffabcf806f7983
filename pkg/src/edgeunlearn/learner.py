"""Deterministic toy learner with exact incremental training and unlearning.

The learner is a nearest-centroid classifier that keeps, per label, the exact
running sum of feature vectors and a sample counter.  Because a chunk's
contribution is a single precomputed block sum, training state A and then
appending B is bit-identical to training A followed by B from scratch — which
is what makes checkpoint-based retraining provably exact rather than
approximately so.

Feature vectors are synthetic: every (chunk, label) block is drawn from its
label's fixed seeded Gaussian, so features are a pure function of identity
and never depend on generation order.

Pruning removes the smallest-magnitude centroid coordinates.  Removed
coordinates shrink the parameter vector (they are dropped, not zeroed) and
predictions treat them as zero contribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FeatureSpace",
    "CentroidState",
    "empty_state",
    "train_incremental",
    "prune_iterative",
    "prune_oneshot",
    "majority_vote",
    "EnergyModel",
    "energy_of",
]

_STREAM_MEANS = 11
_STREAM_CHUNK_FEATURES = 12
_STREAM_TEST_FEATURES = 13


class FeatureSpace:
    """Seeded synthetic feature generator shared by one simulation.

    Block sums are cached by (chunk_id, label, count): the cache guarantees
    that replaying a chunk produces the exact float sum that training it the
    first time produced, no matter which code path asks.
    """

    def __init__(self, seed: int, label_space: int, dim: int = 8, spread: float = 4.0):
        self.seed = seed
        self.label_space = label_space
        self.dim = dim
        rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_MEANS]))
        self.label_means = spread * rng.standard_normal((label_space, dim))
        self._block_cache: dict[tuple[int, int, int], tuple[np.ndarray, int]] = {}

    def chunk_features(self, chunk_id: int, label: int, count: int) -> np.ndarray:
        """Feature rows for the first ``count`` samples of a chunk's label block."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _STREAM_CHUNK_FEATURES, chunk_id, label]))
        return self.label_means[label] + rng.standard_normal((count, self.dim))

    def block_stats(self, chunk_id: int, label: int, count: int) -> tuple[np.ndarray, int]:
        """Cached (feature sum, count) of a chunk's label block prefix."""
        key = (chunk_id, label, count)
        hit = self._block_cache.get(key)
        if hit is None:
            total = self.chunk_features(chunk_id, label, count).sum(axis=0)
            total.setflags(write=False)
            hit = (total, count)
            self._block_cache[key] = hit
        return hit

    def test_set(self, samples_per_label: int) -> tuple[np.ndarray, np.ndarray]:
        """Held-out evaluation samples drawn from the same label Gaussians."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _STREAM_TEST_FEATURES]))
        xs, ys = [], []
        for label in range(self.label_space):
            xs.append(self.label_means[label] + rng.standard_normal((samples_per_label, self.dim)))
            ys.append(np.full(samples_per_label, label))
        return np.concatenate(xs), np.concatenate(ys)


@dataclass
class CentroidState:
    """Sufficient statistics of the centroid learner plus its pruning mask.

    ``sums[c]`` is the exact float sum of all retained samples of label c
    absorbed since the state's origin, ``counts[c]`` how many there were.
    ``pruned`` flags (label, dim) coordinates removed from the parameter
    vector; None means nothing was ever pruned.
    """

    sums: np.ndarray
    counts: np.ndarray
    pruned: np.ndarray | None = None

    @property
    def label_space(self) -> int:
        return self.sums.shape[0]

    @property
    def dim(self) -> int:
        return self.sums.shape[1]

    @property
    def trained_sample_count(self) -> int:
        return int(self.counts.sum())

    def centroids(self) -> np.ndarray:
        """Per-label mean vectors; unseen labels and pruned coordinates are 0."""
        out = np.zeros_like(self.sums)
        seen = self.counts > 0
        out[seen] = self.sums[seen] / self.counts[seen, None]
        if self.pruned is not None:
            out[self.pruned] = 0.0
        return out

    def parameters(self) -> np.ndarray:
        """The flattened centroid entries that survive the pruning mask."""
        flat = self.centroids().ravel()
        if self.pruned is None:
            return flat
        return flat[~self.pruned.ravel()]

    @property
    def pruned_mask(self) -> frozenset[int]:
        """Flattened indices of removed parameters."""
        if self.pruned is None:
            return frozenset()
        return frozenset(np.flatnonzero(self.pruned.ravel()).tolist())

    def copy(self) -> "CentroidState":
        return CentroidState(
            sums=self.sums.copy(),
            counts=self.counts.copy(),
            pruned=None if self.pruned is None else self.pruned.copy(),
        )

    def absorb(self, label: int, block_sum: np.ndarray, count: int) -> None:
        """Fold one chunk block's precomputed sum into the statistics."""
        if block_sum.shape != (self.dim,):
            raise ValueError(f"feature dimension mismatch: {block_sum.shape} vs ({self.dim},)")
        if count == 0:
            return
        self.sums[label] = self.sums[label] + block_sum
        self.counts[label] += count

    def identical_to(self, other: "CentroidState") -> bool:
        """Bit-level equality of statistics and mask."""
        if self.sums.shape != other.sums.shape:
            return False
        same_mask = (
            (self.pruned is None and other.pruned is None)
            or (self.pruned is not None and other.pruned is not None and np.array_equal(self.pruned, other.pruned))
        )
        return (
            same_mask
            and np.array_equal(self.sums.view(np.uint64), other.sums.view(np.uint64))
            and np.array_equal(self.counts, other.counts)
        )

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels for rows of ``x``; unseen labels never win."""
        cents = self.centroids()
        seen = self.counts > 0
        if not seen.any():
            raise ValueError("cannot predict from an empty state")
        d = ((x[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        d[:, ~seen] = np.inf
        return d.argmin(axis=1)


def empty_state(label_space: int, dim: int) -> CentroidState:
    return CentroidState(sums=np.zeros((label_space, dim)), counts=np.zeros(label_space, dtype=np.int64))


def train_incremental(
    state: CentroidState,
    blocks: Iterable[tuple[int, np.ndarray, int]],
    *,
    copy: bool = True,
) -> CentroidState:
    """Fold ordered (label, block_sum, count) blocks into ``state``.

    Blocks must arrive in the canonical replay order (round, owner, chunk,
    label); under that ordering, extending a prefix state is bit-identical
    to training the concatenated stream from scratch.
    """
    out = state.copy() if copy else state
    for label, block_sum, count in blocks:
        out.absorb(label, block_sum, count)
    return out


def blocks_from_features(labeled_features: Iterable[tuple[int, np.ndarray]]):
    """Adapt (label, feature_rows) pairs to the block-sum training form."""
    for label, rows in labeled_features:
        rows = np.asarray(rows, dtype=float)
        if len(rows):
            yield label, rows.sum(axis=0), len(rows)


def _removal_count(n_params: int, rate: float) -> int:
    return int(np.floor(rate * n_params + 0.5))


def prune_iterative(
    state: CentroidState,
    rate: float,
    steps: int,
    retrain_blocks: Sequence[tuple[int, np.ndarray, int]] | None = None,
) -> CentroidState:
    """Prune to ``rate`` in ``steps`` equal passes of remove-then-retrain.

    Each pass removes the smallest-magnitude surviving centroid coordinates
    until the cumulative removed fraction reaches the pass target; if
    ``retrain_blocks`` is given, the retained coordinates are then recomputed
    exactly on that data.  Any previous mask is discarded: the state is
    re-pruned from its full parameter set, so the sparsity of the result is
    ``rate``, not cumulative across calls.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("pruning rate must be in [0, 1)")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if state.sums.size == 0:
        raise ValueError("cannot prune an empty parameter vector")
    out = state.copy()
    out.pruned = np.zeros(out.sums.shape, dtype=bool)
    n = out.sums.size
    removed = 0
    for i in range(1, steps + 1):
        target = _removal_count(n, rate * i / steps)
        take = target - removed
        if take > 0:
            flat_mask = out.pruned.ravel()
            magnitudes = np.abs(out.centroids().ravel())
            candidates = np.flatnonzero(~flat_mask)
            order = candidates[np.lexsort((candidates, magnitudes[candidates]))]
            flat_mask[order[:take]] = True
            out.pruned = flat_mask.reshape(out.sums.shape)
            removed = target
        if retrain_blocks is not None:
            refreshed = empty_state(out.label_space, out.dim)
            for label, block_sum, count in retrain_blocks:
                refreshed.absorb(label, block_sum, count)
            refreshed.pruned = out.pruned
            out = refreshed
    if not out.pruned.any():
        out.pruned = None
    return out


def prune_oneshot(
    state: CentroidState,
    rate: float,
    retrain_blocks: Sequence[tuple[int, np.ndarray, int]] | None = None,
) -> CentroidState:
    """Single-pass magnitude pruning to ``rate``."""
    return prune_iterative(state, rate, steps=1, retrain_blocks=retrain_blocks)


def majority_vote(votes: Sequence[int]) -> int:
    """Most frequent label; ties break toward the smallest label id."""
    if len(votes) == 0:
        raise ValueError("majority_vote needs at least one vote")
    tally: dict[int, int] = {}
    for v in votes:
        tally[v] = tally.get(v, 0) + 1
    return min(tally, key=lambda label: (-tally[label], label))


@dataclass(frozen=True)
class EnergyModel:
    """Linear retraining-energy model: joules = a * samples + b per episode."""

    joules_per_sample: float = 1.0
    fixed_overhead: float = 0.0

    def __post_init__(self) -> None:
        if self.joules_per_sample < 0 or self.fixed_overhead < 0:
            raise ValueError("energy coefficients must be non-negative")


def energy_of(model: EnergyModel, rsn: int) -> float:
    """Energy of one retraining episode that replayed ``rsn`` samples."""
    if rsn < 0:
        raise ValueError("rsn must be non-negative")
    return model.joules_per_sample * rsn + model.fixed_overhead
