"""Unit-sphere vector arithmetic and threshold-stopped agglomerative clustering.

Every similarity decision in the package funnels through these primitives:
embeddings are L2-normalised float64 vectors compared by cosine similarity,
and image-search result sets are grouped bottom-up on cosine distance until
the closest pair of clusters is further apart than a distance threshold.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyInputError,
    EmptyPoolError,
)

# Absolute tolerance for unit-norm checks and other score comparisons.
NORM_TOLERANCE = 1e-6

# Merge candidates within this distance of the minimum are treated as tied and
# resolved by the index rule below. Large enough to absorb the float drift
# between the incremental linkage update and a from-scratch recomputation,
# small enough never to conflate genuinely distinct distances.
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class Embedding:
    """An L2-normalised vector; the currency of every similarity comparison.

    Construct via :func:`l2_normalize` for arbitrary vectors, or directly when
    the values are already unit norm (within ``NORM_TOLERANCE``).
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DegenerateVectorError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise DegenerateVectorError("embedding contains non-finite components")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise DegenerateVectorError(
                f"embedding norm {norm!r} is not 1.0 within {NORM_TOLERANCE}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    __hash__ = None  # embeddings are not hashable; compare by value only

    def __repr__(self) -> str:  # keep tracebacks readable for wide vectors
        head = ", ".join(f"{v:.4f}" for v in self.values[:4])
        tail = ", ..." if self.dim > 4 else ""
        return f"Embedding([{head}{tail}], dim={self.dim})"


def l2_normalize(v: Sequence[float] | np.ndarray) -> Embedding:
    """Scale ``v`` to unit L2 norm, preserving direction.

    Raises DegenerateVectorError for the zero vector, whose direction is
    undefined.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DegenerateVectorError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVectorError("vector contains non-finite components")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateVectorError("zero vector has no direction")
    return Embedding(arr / norm)


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Dot product of two unit vectors, clipped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))


def cosine_distance(a: Embedding, b: Embedding) -> float:
    """1 - cosine similarity; in [0, 2]."""
    return 1.0 - cosine_similarity(a, b)


def average_pool(embeddings: Iterable[Embedding]) -> Embedding:
    """Component-wise mean of the inputs, re-normalised to the unit sphere.

    Raises EmptyPoolError for an empty input and DegenerateVectorError when
    the inputs cancel to a zero mean.
    """
    pool = list(embeddings)
    if not pool:
        raise EmptyPoolError("cannot pool an empty embedding list")
    dim = pool[0].dim
    for e in pool[1:]:
        if e.dim != dim:
            raise DimensionMismatchError(f"dimension mismatch in pool: {e.dim} vs {dim}")
    mean = np.mean(np.stack([e.values for e in pool]), axis=0)
    return l2_normalize(mean)


@dataclass(frozen=True)
class Partition:
    """Disjoint clusters of point indices covering 0..N-1.

    Stored canonically: each cluster is a sorted tuple and clusters are
    ordered by their smallest member.
    """

    clusters: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        canonical = tuple(
            sorted((tuple(sorted(c)) for c in self.clusters), key=lambda c: c[0])
        )
        seen: set[int] = set()
        for cluster in canonical:
            if not cluster:
                raise ValueError("partition contains an empty cluster")
            for idx in cluster:
                if idx in seen:
                    raise ValueError(f"index {idx} appears in more than one cluster")
                seen.add(idx)
        if seen != set(range(len(seen))):
            raise ValueError("cluster union does not cover 0..N-1")
        object.__setattr__(self, "clusters", canonical)

    @property
    def n_points(self) -> int:
        return sum(len(c) for c in self.clusters)

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)


class Linkage(str, Enum):
    AVERAGE = "average"
    SINGLE = "single"
    COMPLETE = "complete"


def _pick_tied_merge(
    dist: np.ndarray, minimum: float, reps: np.ndarray
) -> tuple[int, int]:
    """Resolve which pair to merge when several share the minimal distance.

    Among candidate pairs within TIE_TOLERANCE of the minimum, choose the one
    whose smallest member index is lowest, then by the other cluster's
    smallest member index.
    """
    rows, cols = np.where(dist <= minimum + TIE_TOLERANCE)
    best_key: tuple[int, int] | None = None
    best_pair: tuple[int, int] = (-1, -1)
    for i, j in zip(rows.tolist(), cols.tolist()):
        if i >= j:
            continue
        key = (min(reps[i], reps[j]), max(reps[i], reps[j]))
        if best_key is None or key < best_key:
            best_key = key
            best_pair = (i, j)
    return best_pair


def agglomerative_cluster(
    points: Sequence[Embedding],
    threshold: float,
    linkage: Linkage | str = Linkage.AVERAGE,
) -> Partition:
    """Bottom-up clustering on cosine distance with a stopping threshold.

    Starts from singletons and repeatedly merges the two closest clusters
    (by the chosen linkage; average by default) until the minimum
    inter-cluster distance exceeds ``threshold``. Deterministic: ties are
    resolved by the smallest member index rule in :func:`_pick_tied_merge`.
    """
    pts = list(points)
    if not pts:
        raise EmptyInputError("cannot cluster an empty point list")
    if not 0.0 < threshold <= 2.0:
        raise ConfigError(f"cosine-distance threshold {threshold} not in (0, 2]")
    linkage = Linkage(linkage)
    dim = pts[0].dim
    for p in pts[1:]:
        if p.dim != dim:
            raise DimensionMismatchError("clustering input mixes dimensions")
    n = len(pts)
    if n == 1:
        return Partition(((0,),))

    values = np.stack([p.values for p in pts])
    dist = 1.0 - np.clip(values @ values.T, -1.0, 1.0)
    np.fill_diagonal(dist, np.inf)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    members: list[list[int]] = [[i] for i in range(n)]
    reps = np.arange(n)  # smallest original index in each slot

    for _ in range(n - 1):
        minimum = float(dist.min())
        if minimum > threshold:
            break
        i, j = _pick_tied_merge(dist, minimum, reps)

        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        if others.size:
            if linkage is Linkage.AVERAGE:
                merged = (sizes[i] * dist[i, others] + sizes[j] * dist[j, others]) / (
                    sizes[i] + sizes[j]
                )
            elif linkage is Linkage.SINGLE:
                merged = np.minimum(dist[i, others], dist[j, others])
            else:
                merged = np.maximum(dist[i, others], dist[j, others])
            dist[i, others] = merged
            dist[others, i] = merged
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        reps[i] = min(reps[i], reps[j])

    clusters = tuple(tuple(sorted(members[s])) for s in np.flatnonzero(active))
    return Partition(clusters)


def largest_cluster(partition: Partition) -> tuple[int, ...]:
    """The cluster of maximum cardinality; ties go to the smallest member index."""
    if not partition.clusters:
        raise EmptyInputError("partition has no clusters")
    return max(partition.clusters, key=lambda c: (len(c), -c[0]))
