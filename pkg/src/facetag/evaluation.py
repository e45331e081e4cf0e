"""Retrieval metrics, precision-first threshold calibration, and sweeps.

Tagging an archive is an open-set retrieval task, so tag sets are scored
with precision, recall, mean average precision, and class recall (how many
of the annotated people were found at least once). Ground truth maps each
annotated track to a name, with the reserved ``"@unknown"`` marking tracks
whose identity could not be established; a tag on such a track counts as a
false positive.

Calibration follows the no-mistakes rule: pick the smallest threshold that
rejects every incorrect candidate on a validation bundle, so the operating
point trades recall for exact precision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .errors import ConfigError, MissingGroundTruthError
from .evidence import (
    UNKNOWN_NAME,
    EvidenceBundle,
    NameOccurrence,
    NameSource,
    SearchResultSet,
    normalize_name,
    pooled_track_embeddings,
    search_for,
    tracks_in_window,
)
from .core import cosine_similarity
from .identity import (
    Fame,
    FameStatus,
    FamousConfig,
    build_face_models,
    classify_famous,
    classify_names,
)
from .pipeline import (
    COMBO_ORDER,
    PipelineResult,
    run_pipeline,
)
from .stage1 import Stage1Config, Tag, TagStage, _argmax_model_tags, run_stage1, tag_famous
from .stage2 import (
    Stage2Config,
    Stage2Order,
    build_speaker_models,
    fusion_tag,
    qe_tag,
    query_expand,
)

CALIBRATION_EPSILON = 1e-6


@dataclass(frozen=True)
class MetricCounts:
    true_tags: int
    false_tags: int
    total_annotated: int
    classes_hit: int
    classes_total: int


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    class_recall: float
    mean_average_precision: float
    counts: MetricCounts

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "class_recall": self.class_recall,
            "mean_average_precision": self.mean_average_precision,
            "counts": {
                "true_tags": self.counts.true_tags,
                "false_tags": self.counts.false_tags,
                "total_annotated": self.counts.total_annotated,
                "classes_hit": self.counts.classes_hit,
                "classes_total": self.counts.classes_total,
            },
        }


def tag_is_correct(tag: Tag, ground_truth: Mapping[str, str]) -> bool:
    """Case-normalised name match; "@unknown" annotations never match."""
    if tag.track_id not in ground_truth:
        raise MissingGroundTruthError(f"track {tag.track_id!r} has no annotation")
    truth = normalize_name(ground_truth[tag.track_id])
    if truth == UNKNOWN_NAME:
        return False
    return truth == normalize_name(tag.name)


def average_precision(ranked_correct: Sequence[bool], n_relevant: int) -> float:
    """Mean of precision at each correct rank, over the total relevant count."""
    if n_relevant < sum(ranked_correct):
        raise ValueError("n_relevant smaller than the number of correct entries")
    if n_relevant == 0:
        return 0.0
    score = 0.0
    correct_so_far = 0
    for rank, flag in enumerate(ranked_correct, start=1):
        if flag:
            correct_so_far += 1
            score += correct_so_far / rank
    return score / n_relevant


def _annotated_classes(ground_truth: Mapping[str, str]) -> dict[str, int]:
    """Relevant-track count per normalised class name, @unknown excluded."""
    classes: dict[str, int] = {}
    for name in ground_truth.values():
        key = normalize_name(name)
        if key != UNKNOWN_NAME:
            classes[key] = classes.get(key, 0) + 1
    return classes


def mean_average_precision(
    tags: Sequence[Tag], ground_truth: Mapping[str, str]
) -> float:
    """Macro-averaged AP over every annotated identity.

    Per identity, its tags are ranked by descending score (ties by
    track_id); identities with no ground-truth tracks are excluded,
    identities with no tags score zero.
    """
    classes = _annotated_classes(ground_truth)
    if not classes:
        return 0.0
    by_class: dict[str, list[Tag]] = {key: [] for key in classes}
    for tag in tags:
        if tag.track_id not in ground_truth:
            raise MissingGroundTruthError(f"track {tag.track_id!r} has no annotation")
        key = normalize_name(tag.name)
        if key in by_class:
            by_class[key].append(tag)
    total = 0.0
    for key, n_relevant in classes.items():
        ranked = sorted(by_class[key], key=lambda t: (-t.score, t.track_id))
        flags = [tag_is_correct(t, ground_truth) for t in ranked]
        total += average_precision(flags, n_relevant)
    return total / len(classes)


def score_tags(tags: Sequence[Tag], ground_truth: Mapping[str, str]) -> MetricReport:
    """Precision / recall / class recall / mAP for a tag set.

    Zero tags score precision 1.0 by convention: no mistakes were made.
    """
    true_tags = 0
    false_tags = 0
    hit_classes: set[str] = set()
    for tag in tags:
        if tag_is_correct(tag, ground_truth):
            true_tags += 1
            hit_classes.add(normalize_name(tag.name))
        else:
            false_tags += 1
    classes = _annotated_classes(ground_truth)
    total_annotated = sum(classes.values())
    counts = MetricCounts(
        true_tags=true_tags,
        false_tags=false_tags,
        total_annotated=total_annotated,
        classes_hit=len(hit_classes & set(classes)),
        classes_total=len(classes),
    )
    precision = 1.0 if true_tags + false_tags == 0 else true_tags / (true_tags + false_tags)
    recall = true_tags / total_annotated if total_annotated else 0.0
    class_recall = counts.classes_hit / counts.classes_total if counts.classes_total else 0.0
    return MetricReport(
        precision=precision,
        recall=recall,
        class_recall=class_recall,
        mean_average_precision=mean_average_precision(tags, ground_truth),
        counts=counts,
    )


# ---------------------------------------------------------------------------
# Threshold calibration
# ---------------------------------------------------------------------------


def calibrate_threshold(
    candidates: Sequence[Tag], ground_truth: Mapping[str, str]
) -> float:
    """Smallest threshold accepting no incorrect candidate.

    Returns max incorrect score + 1e-6, or -1.0 when every candidate is
    correct (accept everything). Applying the result to the same candidate
    set yields precision exactly 1.0 by construction.
    """
    incorrect = [c.score for c in candidates if not tag_is_correct(c, ground_truth)]
    if not incorrect:
        return -1.0
    return max(incorrect) + CALIBRATION_EPSILON


@dataclass(frozen=True)
class CalibratedThresholds:
    tau_face: float
    tau_verify: float
    tau_fuse: float
    tau_qe: float

    def as_dict(self) -> dict:
        return {
            "tau_face": self.tau_face,
            "tau_verify": self.tau_verify,
            "tau_fuse": self.tau_fuse,
            "tau_qe": self.tau_qe,
        }


def _corroboration_candidates(
    bundle: EvidenceBundle,
    fame: Mapping[str, FameStatus],
    cfg: Stage1Config,
    famous_tagged: set[str],
) -> list[Tag]:
    """Every (occurrence-window track, name) verification score.

    Deliberately a superset of anything `corroborate` can tag at any
    threshold given the famous tags, so a threshold rejecting all incorrect
    candidates here rejects every possible incorrect corroboration tag.
    """
    pooled = pooled_track_embeddings(bundle)
    candidates = []
    for occ in bundle.names:
        if occ.source not in (NameSource.WRITTEN, NameSource.SPOKEN):
            continue
        if fame[normalize_name(occ.name)].status is not Fame.LESS_FAMOUS:
            continue
        results = search_for(bundle, occ.name)
        top = results.top(cfg.top_m_verify)
        if not top:
            continue
        for track in tracks_in_window(occ, bundle.tracks, cfg.delta):
            if track.track_id in famous_tagged:
                continue
            emb = pooled[track.track_id]
            if emb is None:
                continue
            score = max(cosine_similarity(emb, entry.embedding) for entry in top)
            candidates.append(Tag(track.track_id, results.name, score, TagStage.CORROBORATION))
    return candidates


def calibrate_pipeline(
    bundle: EvidenceBundle,
    ground_truth: Mapping[str, str],
    famous_cfg: FamousConfig,
    stage1_cfg: Stage1Config = Stage1Config(),
    stage2_cfg: Stage2Config = Stage2Config(),
) -> CalibratedThresholds:
    """Calibrate all four thresholds on a validation bundle, in stage order.

    Each stage's candidate pool is threshold-free and covers every tag that
    stage could emit once the earlier thresholds are fixed, so running the
    pipeline with the result yields precision 1.0 on this bundle. (With
    ``qe_iterations`` > 1 only the first expansion pass is covered.)
    """
    fame = classify_names(bundle, famous_cfg)
    models = build_face_models(bundle, fame, famous_cfg)

    face_candidates = _argmax_model_tags(bundle, models, -1.0, TagStage.FAMOUS_MODEL)
    tau_face = calibrate_threshold(face_candidates, ground_truth)
    famous_tags = tag_famous(bundle, models, tau_face)
    famous_tagged = {t.track_id for t in famous_tags}

    verify_candidates = _corroboration_candidates(
        bundle, fame, stage1_cfg, famous_tagged
    )
    tau_verify = calibrate_threshold(verify_candidates, ground_truth)

    stage1_tags = run_stage1(
        bundle, fame, models, replace(stage1_cfg, tau_face=tau_face, tau_verify=tau_verify)
    )

    speaker_models = build_speaker_models(bundle, stage1_tags)
    fuse_candidates = fusion_tag(bundle, stage1_tags, models, speaker_models, -1.0)
    tau_fuse = calibrate_threshold(fuse_candidates, ground_truth)
    fused_tags = list(stage1_tags) + fusion_tag(
        bundle, stage1_tags, models, speaker_models, tau_fuse
    )

    expanded = query_expand(bundle, fused_tags, models) if fused_tags else []
    qe_candidates = qe_tag(bundle, fused_tags, expanded, -1.0)
    tau_qe = calibrate_threshold(qe_candidates, ground_truth)

    return CalibratedThresholds(
        tau_face=tau_face, tau_verify=tau_verify, tau_fuse=tau_fuse, tau_qe=tau_qe
    )


# ---------------------------------------------------------------------------
# Fame census and the alpha sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FameCensusRow:
    famous: int = 0
    less_famous: int = 0
    never_famous: int = 0

    def as_dict(self) -> dict:
        return {
            "famous": self.famous,
            "less_famous": self.less_famous,
            "never_famous": self.never_famous,
        }


def fame_census(
    names: Sequence[NameOccurrence],
    search: Mapping[str, SearchResultSet],
    cfg: FamousConfig,
) -> dict[str, FameCensusRow]:
    """Distinct-name fame counts per occurrence source, plus an overall row."""
    by_key: dict[str, SearchResultSet] = {
        normalize_name(display): results for display, results in search.items()
    }
    status_cache: dict[str, Fame] = {}

    def status_of(key: str) -> Fame:
        if key not in status_cache:
            results = by_key.get(key, SearchResultSet(name=key))
            status_cache[key] = classify_famous(results, cfg).status
        return status_cache[key]

    per_source: dict[str, set[str]] = {s.value: set() for s in NameSource}
    overall: set[str] = set()
    for occ in names:
        key = normalize_name(occ.name)
        per_source[occ.source.value].add(key)
        overall.add(key)

    def row(keys: set[str]) -> FameCensusRow:
        tally = {Fame.FAMOUS: 0, Fame.LESS_FAMOUS: 0, Fame.NEVER_FAMOUS: 0}
        for key in keys:
            tally[status_of(key)] += 1
        return FameCensusRow(
            famous=tally[Fame.FAMOUS],
            less_famous=tally[Fame.LESS_FAMOUS],
            never_famous=tally[Fame.NEVER_FAMOUS],
        )

    census = {source.value: row(per_source[source.value]) for source in NameSource}
    census["all"] = row(overall)
    return census


@dataclass(frozen=True)
class SweepPoint:
    alpha: int
    reports: dict[str, MetricReport]


def alpha_sweep(
    bundle: EvidenceBundle,
    ground_truth: Mapping[str, str],
    alphas: Sequence[int],
    famous_cfg: FamousConfig,
    stage1_cfg: Stage1Config,
    stage2_cfg: Stage2Config,
) -> list[SweepPoint]:
    """Re-run the full pipeline per fame threshold and score each stage combo.

    Thresholds stay fixed across the sweep; only the fame classification
    (and everything downstream of it) changes with alpha.
    """
    if not alphas:
        raise ConfigError("alpha sweep needs at least one value")
    sweep_stage2 = replace(stage2_cfg, order=Stage2Order.FUSION_THEN_QE)
    points = []
    for alpha in sorted(alphas):
        result: PipelineResult = run_pipeline(
            bundle, replace(famous_cfg, alpha=alpha), stage1_cfg, sweep_stage2
        )
        reports = {
            combo: score_tags(result.tags_for(combo), ground_truth)
            for combo in COMBO_ORDER
        }
        points.append(SweepPoint(alpha=alpha, reports=reports))
    return points
