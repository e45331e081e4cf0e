"""Fame classification of candidate names and identity-model construction.

A name is queried against an image-search engine upstream; here we decide,
from the returned face embeddings alone, whether the person is famous enough
for those results to serve as sole labelling evidence. The rule: cluster the
top-ranked result faces and call the name famous when the largest cluster
holds more than ``alpha`` faces (many consistent hits imply the results
depict one well-photographed person). Empty results mean the person is
never-famous; anything in between is less-famous.

Face models for famous names pool the largest cluster only, which discards
the false-positive images outside it. Speaker models pool the utterance
embeddings overlapping a tagged person's speaking segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import Embedding, agglomerative_cluster, average_pool, largest_cluster
from .errors import ConfigError, DegenerateVectorError, NotFamousError
from .evidence import (
    EvidenceBundle,
    FaceTrack,
    SearchResultSet,
    SpeechTurn,
    normalize_name,
    overlapping_turns,
    search_for,
)


class Fame(str, Enum):
    FAMOUS = "famous"
    LESS_FAMOUS = "less_famous"
    NEVER_FAMOUS = "never_famous"


@dataclass(frozen=True)
class FameStatus:
    name: str  # canonical display form
    status: Fame
    largest_cluster_size: int


class Provenance(str, Enum):
    SEARCH_CLUSTER = "search_cluster"
    QUERY_EXPANSION = "query_expansion"


@dataclass(frozen=True)
class IdentityModel:
    """A named, pooled, unit-norm face embedding used for nearest-neighbour tagging."""

    name: str
    embedding: Embedding
    provenance: Provenance
    support_count: int


@dataclass(frozen=True)
class SpeakerModel:
    """A named, pooled, unit-norm voice embedding."""

    name: str
    embedding: Embedding
    support_count: int


@dataclass(frozen=True)
class FamousConfig:
    """Knobs for the fame decision.

    ``alpha`` is the cluster-size threshold: strictly more than alpha faces in
    the largest cluster means famous. Defaults follow the validated operating
    point: alpha 30, cosine-distance 0.7, top 100 results considered.
    """

    alpha: int = 30
    cluster_distance: float = 0.7
    top_k_results: int = 100

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.cluster_distance <= 2.0:
            raise ConfigError(
                f"cluster_distance {self.cluster_distance} not in (0, 2]"
            )
        if self.top_k_results < 1:
            raise ConfigError(f"top_k_results must be >= 1, got {self.top_k_results}")


def _cluster_entries(results: SearchResultSet, cfg: FamousConfig):
    """Cluster the top-k result embeddings; returns (points, largest member indices)."""
    entries = results.top(cfg.top_k_results)
    points = [e.embedding for e in entries]
    partition = agglomerative_cluster(points, cfg.cluster_distance)
    return points, largest_cluster(partition)


def classify_famous(results: SearchResultSet, cfg: FamousConfig) -> FameStatus:
    """Famous / less-famous / never-famous from one name's search results."""
    if not results.entries:
        return FameStatus(results.name, Fame.NEVER_FAMOUS, 0)
    _, biggest = _cluster_entries(results, cfg)
    size = len(biggest)
    status = Fame.FAMOUS if size > cfg.alpha else Fame.LESS_FAMOUS
    return FameStatus(results.name, status, size)


def classify_names(bundle: EvidenceBundle, cfg: FamousConfig) -> dict[str, FameStatus]:
    """Fame status for every distinct candidate name with an occurrence.

    Keyed by normalised name, in sorted order; display form comes from the
    search map. Classification per name is independent, so the map contents
    do not depend on occurrence order.
    """
    keys = sorted({normalize_name(o.name) for o in bundle.names})
    return {key: classify_famous(search_for(bundle, key), cfg) for key in keys}


def build_face_model(
    name: str, results: SearchResultSet, cfg: FamousConfig
) -> IdentityModel:
    """Pool the largest result cluster into a single face-identity embedding."""
    status = classify_famous(results, cfg)
    if status.status is not Fame.FAMOUS:
        raise NotFamousError(
            f"{name!r} is {status.status.value} (largest cluster "
            f"{status.largest_cluster_size} <= alpha {cfg.alpha})"
        )
    points, biggest = _cluster_entries(results, cfg)
    embedding = average_pool([points[i] for i in biggest])
    return IdentityModel(
        name=name,
        embedding=embedding,
        provenance=Provenance.SEARCH_CLUSTER,
        support_count=len(biggest),
    )


def build_face_models(
    bundle: EvidenceBundle, fame: dict[str, FameStatus], cfg: FamousConfig
) -> list[IdentityModel]:
    """Face models for every famous name, in name order."""
    models = []
    for key in sorted(fame):
        status = fame[key]
        if status.status is Fame.FAMOUS:
            models.append(build_face_model(status.name, search_for(bundle, key), cfg))
    return models


def build_speaker_model(
    name: str, tagged_tracks: Sequence[FaceTrack], bundle: EvidenceBundle
) -> SpeakerModel | None:
    """Pool the speaker embeddings of all turns overlapping the tagged tracks.

    Returns None (not an error) when no turn overlaps any speaking segment,
    or when the pooled mean degenerates.
    """
    turns_seen: dict[str, SpeechTurn] = {}
    for track in tagged_tracks:
        for turn in overlapping_turns(track, bundle.turns):
            turns_seen.setdefault(turn.turn_id, turn)
    if not turns_seen:
        return None
    ordered = sorted(turns_seen.values(), key=lambda u: (u.t_start, u.turn_id))
    try:
        embedding = average_pool([u.speaker_embedding for u in ordered])
    except DegenerateVectorError:
        return None
    return SpeakerModel(name=name, embedding=embedding, support_count=len(ordered))
