"""Probabilistic replacement selection with penalty-weight balancing.

Candidates are scored by exp(-w_j * D_j), D_j the L2 feature distance to
the target, normalized over the non-excluded pool entries. A selected
entry's weight rises by one, lowering its future probability so the pool
gets used evenly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .consensus import AnchorSegment
from .pool import SegmentPool


@dataclass(frozen=True)
class TargetSelection:
    """The segment being replaced and its feature in pool space."""

    segment: AnchorSegment
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class ReplacementDistribution:
    """Probabilities over pool entries; excluded indices carry 0."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs.flags.writeable = False


def feature_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two feature vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"feature dims differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def replacement_distribution(
    target: TargetSelection, pool: SegmentPool, exclude: frozenset[str] | set[str] = frozenset()
) -> ReplacementDistribution:
    """Softmax of -w_j * D_j over the pool, excluded ids zeroed.

    The target's own id is always excluded when present (self-replacement
    would be a no-op augmentation). Exponents are shifted by their maximum
    before exponentiation so weights and distances up to w*D ~ 700 cannot
    underflow the whole distribution.
    """
    n = pool.size
    active = np.ones(n, dtype=bool)
    excluded_ids = set(exclude) | {target.segment.segment_id}
    for i, e in enumerate(pool.entries):
        if e.anchor.segment_id in excluded_ids:
            active[i] = False
    if not active.any():
        raise ValueError("no candidates: every pool entry is excluded")

    tfeat = np.asarray(target.feature, dtype=np.float64)
    logits = np.full(n, -np.inf)
    for i, e in enumerate(pool.entries):
        if active[i]:
            logits[i] = -e.weight * feature_distance(tfeat, e.feature)
    shift = logits[active].max()
    probs = np.zeros(n)
    probs[active] = np.exp(logits[active] - shift)
    probs /= probs.sum()
    return ReplacementDistribution(probs)


def sample_replacement(dist: ReplacementDistribution, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over the distribution."""
    probs = dist.probs
    cdf = np.cumsum(probs)
    u = rng.random()
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= probs.size or probs[idx] == 0.0:
        idx = int(np.flatnonzero(probs > 0)[-1])
    return idx


def penalize(pool: SegmentPool, index: int) -> None:
    """Bump the selected entry's weight by one.

    Mutates the pool; callers running parallel generation must serialize
    these updates (single-writer discipline).
    """
    if not 0 <= index < pool.size:
        raise ValueError(f"pool index {index} out of range [0, {pool.size})")
    pool.entries[index].weight += 1.0
