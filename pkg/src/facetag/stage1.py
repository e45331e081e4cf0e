"""First tagging pass: identity models as sole evidence, plus corroboration.

Famous names already have a trustworthy face model, so their tracks are
labelled by nearest-model similarity alone. Less-famous names need two
signals to line up: the name written on screen or spoken (primary, temporal)
and at least one of the top-ranked search faces matching a track near that
moment (corroborating). One occurrence labels at most one track, and a track
never carries more than one tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .core import cosine_similarity
from .errors import ConfigError, SourceHasNoTimeError
from .evidence import (
    EvidenceBundle,
    NameOccurrence,
    NameSource,
    normalize_name,
    pooled_track_embeddings,
    search_for,
    tracks_in_window,
)
from .identity import Fame, FameStatus, IdentityModel


class TagStage(str, Enum):
    FAMOUS_MODEL = "famous_model"
    CORROBORATION = "corroboration"
    FUSION = "fusion"
    QUERY_EXPANSION = "query_expansion"


@dataclass(frozen=True)
class Tag:
    """One labelling decision: this track shows this named person."""

    track_id: str
    name: str
    score: float
    stage: TagStage


@dataclass(frozen=True)
class Stage1Config:
    """Thresholds for the first pass.

    ``tau_face`` gates template (many-to-one) matching against famous models;
    ``tau_verify`` gates the weaker 1-to-1 verification used for
    corroboration. Both default to 0.7 pending calibration. ``top_m_verify``
    is how many top-ranked search faces may corroborate, and ``delta`` is the
    half-width in seconds of the window around a name occurrence.
    """

    tau_face: float = 0.7
    tau_verify: float = 0.7
    top_m_verify: int = 20
    delta: float = 5.0

    def __post_init__(self) -> None:
        for label, value in (("tau_face", self.tau_face), ("tau_verify", self.tau_verify)):
            if not -1.0 <= value <= 1.0:
                raise ConfigError(f"{label} {value} not in [-1, 1]")
        if self.top_m_verify < 1:
            raise ConfigError(f"top_m_verify must be >= 1, got {self.top_m_verify}")
        if self.delta < 0.0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")


def _argmax_model_tags(
    bundle: EvidenceBundle,
    models: Sequence[IdentityModel],
    threshold: float,
    stage: TagStage,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[Tag]:
    """Nearest-model decision rule shared by famous tagging and query expansion.

    For each eligible track, score against every model and tag with the
    argmax name when the best score clears the threshold. Ties go to the
    lexicographically smallest name. Tracks whose detections cancel to a
    degenerate pool are skipped.
    """
    if not models:
        return []
    ordered = sorted(models, key=lambda m: m.name)
    pooled = pooled_track_embeddings(bundle)
    tags = []
    for track in bundle.tracks:
        if track.track_id in exclude:
            continue
        emb = pooled[track.track_id]
        if emb is None:
            continue
        best = None
        best_score = -2.0
        for model in ordered:
            score = cosine_similarity(emb, model.embedding)
            if score > best_score:  # strict: first (smallest) name wins ties
                best, best_score = model, score
        if best is not None and best_score >= threshold:
            tags.append(Tag(track.track_id, best.name, best_score, stage))
    return tags


def tag_famous(
    bundle: EvidenceBundle, models: Sequence[IdentityModel], tau_face: float
) -> list[Tag]:
    """Label every track whose best famous-model similarity reaches tau_face."""
    return _argmax_model_tags(bundle, models, tau_face, TagStage.FAMOUS_MODEL)


def corroborate(
    occurrence: NameOccurrence,
    bundle: EvidenceBundle,
    cfg: Stage1Config,
    tagged_track_ids: Iterable[str] = (),
) -> list[Tag]:
    """Tag at most one untagged track near a written/spoken name occurrence.

    A window track qualifies when any of the first ``top_m_verify`` search
    faces for the name matches it at ``tau_verify`` or better (1-to-1
    verification); the highest-scoring qualifying track gets the tag, ties
    broken by track_id.
    """
    if occurrence.source is NameSource.IMDB:
        raise SourceHasNoTimeError(
            f"occurrence of {occurrence.name!r} from imdb has no timestamp"
        )
    results = search_for(bundle, occurrence.name)
    top = results.top(cfg.top_m_verify)
    if not top:
        return []
    tagged = set(tagged_track_ids)
    pooled = pooled_track_embeddings(bundle)
    best_track_id = None
    best_score = -2.0
    for track in tracks_in_window(occurrence, bundle.tracks, cfg.delta):
        if track.track_id in tagged:
            continue
        emb = pooled[track.track_id]
        if emb is None:
            continue
        score = max(cosine_similarity(emb, entry.embedding) for entry in top)
        if score >= cfg.tau_verify and score > best_score:
            best_track_id, best_score = track.track_id, score
    if best_track_id is None:
        return []
    return [Tag(best_track_id, results.name, best_score, TagStage.CORROBORATION)]


def run_stage1(
    bundle: EvidenceBundle,
    fame: dict[str, FameStatus],
    models: Sequence[IdentityModel],
    cfg: Stage1Config,
) -> list[Tag]:
    """Famous-model tagging, then corroboration for less-famous occurrences.

    Occurrences are processed chronologically (then by name) so earlier tags
    deterministically shrink the pool available to later, overlapping
    windows. A track receives at most one tag.
    """
    tags = tag_famous(bundle, models, cfg.tau_face)
    tagged = {t.track_id for t in tags}
    pending = [
        occ
        for occ in bundle.names
        if occ.source in (NameSource.WRITTEN, NameSource.SPOKEN)
        and fame[normalize_name(occ.name)].status is Fame.LESS_FAMOUS
    ]
    pending.sort(key=lambda o: (o.time, normalize_name(o.name), o.video_id))
    for occ in pending:
        for tag in corroborate(occ, bundle, cfg, tagged):
            tags.append(tag)
            tagged.add(tag.track_id)
    return tags


# ---------------------------------------------------------------------------
# Tag wire format: one JSON object per line
# ---------------------------------------------------------------------------


def write_tags_jsonl(tags: Sequence[Tag], path: str | Path) -> None:
    """Serialise tags sorted by track_id, one object per line."""
    lines = [
        json.dumps(
            {"track_id": t.track_id, "name": t.name, "score": t.score, "stage": t.stage.value}
        )
        for t in sorted(tags, key=lambda t: t.track_id)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_tags_jsonl(path: str | Path) -> list[Tag]:
    tags = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        tags.append(
            Tag(
                track_id=str(rec["track_id"]),
                name=str(rec["name"]),
                score=float(rec["score"]),
                stage=TagStage(rec["stage"]),
            )
        )
    return tags
