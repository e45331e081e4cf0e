"""Second pass: boost the tag count without giving up precision.

Two independent boosters run over the tracks the first pass left unlabelled:

* Fusion: for a speaking track, average the face-model score with a
  voice-model score. A wrong label now needs two decoupled modalities to
  agree on the same wrong person at once, which keeps the rule safe even
  though each single score may be weak.
* Query expansion: rebuild each tagged identity's face model from the
  in-video detections it has already claimed (plus the original model).
  Pooling real video frames bridges the domain gap between frontal web
  images and in-the-wild poses, so the refreshed models reach tracks the
  web-image models could not.

Existing tags are never altered or removed; both boosters only add.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import Embedding, average_pool, cosine_similarity
from .errors import ConfigError, DegenerateVectorError
from .evidence import (
    EvidenceBundle,
    normalize_name,
    overlapping_turns,
    pooled_track_embeddings,
)
from .identity import (
    IdentityModel,
    Provenance,
    SpeakerModel,
    build_speaker_model,
)
from .stage1 import Tag, TagStage, _argmax_model_tags


class Stage2Order(str, Enum):
    FUSION_THEN_QE = "fusion_then_qe"
    FUSION_ONLY = "fusion_only"
    QE_ONLY = "qe_only"


@dataclass(frozen=True)
class Stage2Config:
    tau_fuse: float = 0.7
    tau_qe: float = 0.7
    order: Stage2Order = Stage2Order.FUSION_THEN_QE
    qe_iterations: int = 1

    def __post_init__(self) -> None:
        for label, value in (("tau_fuse", self.tau_fuse), ("tau_qe", self.tau_qe)):
            if not -1.0 <= value <= 1.0:
                raise ConfigError(f"{label} {value} not in [-1, 1]")
        if self.qe_iterations < 1:
            raise ConfigError(f"qe_iterations must be >= 1, got {self.qe_iterations}")


def fuse_scores(face_score: float, voice_score: float) -> float:
    """Arithmetic mean of the two modality scores."""
    return (face_score + voice_score) / 2.0


def build_speaker_models(
    bundle: EvidenceBundle, tags: Sequence[Tag]
) -> list[SpeakerModel]:
    """One speaker model per tagged identity that has overlapping speech."""
    tracks = bundle.track_by_id()
    grouped: dict[str, list] = {}
    display: dict[str, str] = {}
    for tag in sorted(tags, key=lambda t: t.track_id):
        key = normalize_name(tag.name)
        track = tracks.get(tag.track_id)
        if track is None:
            continue
        grouped.setdefault(key, []).append(track)
        display.setdefault(key, tag.name)
    models = []
    for key in sorted(grouped):
        model = build_speaker_model(display[key], grouped[key], bundle)
        if model is not None:
            models.append(model)
    return models


def fusion_tag(
    bundle: EvidenceBundle,
    existing_tags: Sequence[Tag],
    face_models: Sequence[IdentityModel],
    speaker_models: Sequence[SpeakerModel],
    tau_fuse: float,
) -> list[Tag]:
    """Tag untagged speaking tracks whose best fused score reaches tau_fuse.

    Only identities holding both a face model and a speaker model compete;
    the fused score is the mean of the two similarities. Per-track decisions
    are independent of each other.
    """
    face_by_key = {normalize_name(m.name): m for m in face_models}
    voice_by_key = {normalize_name(m.name): m for m in speaker_models}
    keys = sorted(set(face_by_key) & set(voice_by_key))
    if not keys:
        return []
    tagged = {t.track_id for t in existing_tags}
    pooled = pooled_track_embeddings(bundle)
    tags = []
    for track in bundle.tracks:
        if track.track_id in tagged or not track.speaking_segments:
            continue
        turns = overlapping_turns(track, bundle.turns)
        if not turns:
            continue
        face_emb = pooled[track.track_id]
        if face_emb is None:
            continue
        try:
            voice_emb = average_pool([u.speaker_embedding for u in turns])
        except DegenerateVectorError:
            continue
        best_key = None
        best_score = -2.0
        for key in keys:
            fused = fuse_scores(
                cosine_similarity(face_emb, face_by_key[key].embedding),
                cosine_similarity(voice_emb, voice_by_key[key].embedding),
            )
            if fused > best_score:  # strict: first (smallest) name wins ties
                best_key, best_score = key, fused
        if best_key is not None and best_score >= tau_fuse:
            tags.append(
                Tag(track.track_id, face_by_key[best_key].name, best_score, TagStage.FUSION)
            )
    return tags


def query_expand(
    bundle: EvidenceBundle,
    existing_tags: Sequence[Tag],
    prior_models: Sequence[IdentityModel] = (),
) -> list[IdentityModel]:
    """Rebuild identity models from the detections of already-tagged tracks.

    Per tagged identity, pool every detection embedding of its tagged tracks
    together with the original model embedding when one exists. No
    parameters are trained; the output order and values are independent of
    the tag-list ordering.
    """
    prior_by_key = {normalize_name(m.name): m for m in prior_models}
    tracks = bundle.track_by_id()
    grouped: dict[str, list[str]] = {}
    display: dict[str, str] = {}
    for tag in sorted(existing_tags, key=lambda t: t.track_id):
        key = normalize_name(tag.name)
        grouped.setdefault(key, []).append(tag.track_id)
        display.setdefault(key, tag.name)
    models = []
    for key in sorted(grouped):
        vectors: list[Embedding] = []
        for track_id in grouped[key]:
            track = tracks.get(track_id)
            if track is not None:
                vectors.extend(track.detections)
        prior = prior_by_key.get(key)
        if prior is not None:
            vectors.append(prior.embedding)
        if not vectors:
            continue
        try:
            embedding = average_pool(vectors)
        except DegenerateVectorError:
            continue
        models.append(
            IdentityModel(
                name=prior.name if prior is not None else display[key],
                embedding=embedding,
                provenance=Provenance.QUERY_EXPANSION,
                support_count=len(vectors),
            )
        )
    return models


def qe_tag(
    bundle: EvidenceBundle,
    existing_tags: Sequence[Tag],
    expanded_models: Sequence[IdentityModel],
    tau_qe: float,
) -> list[Tag]:
    """One expansion pass: nearest-expanded-model tagging of untagged tracks."""
    tagged = {t.track_id for t in existing_tags}
    return _argmax_model_tags(
        bundle, expanded_models, tau_qe, TagStage.QUERY_EXPANSION, exclude=tagged
    )


def run_stage2(
    bundle: EvidenceBundle,
    stage1_tags: Sequence[Tag],
    face_models: Sequence[IdentityModel],
    cfg: Stage2Config,
) -> list[Tag]:
    """Apply fusion and/or query expansion per ``cfg.order``.

    With ``fusion_then_qe`` the expansion pools over first-pass and fusion
    tags together. Query expansion repeats up to ``qe_iterations`` times,
    re-expanding the models between passes, and stops early at a fixpoint.
    Returns the union of all tags, one per track, superset of the input.
    """
    tags = list(stage1_tags)
    if cfg.order in (Stage2Order.FUSION_THEN_QE, Stage2Order.FUSION_ONLY):
        speaker_models = build_speaker_models(bundle, tags)
        tags.extend(fusion_tag(bundle, tags, face_models, speaker_models, cfg.tau_fuse))
    if cfg.order in (Stage2Order.FUSION_THEN_QE, Stage2Order.QE_ONLY):
        for _ in range(cfg.qe_iterations):
            if not tags:
                break
            expanded = query_expand(bundle, tags, face_models)
            fresh = qe_tag(bundle, tags, expanded, cfg.tau_qe)
            if not fresh:
                break
            tags.extend(fresh)
    return tags
