"""End-to-end composition: fame classification, both tagging passes, artifacts."""

from __future__ import annotations

from dataclasses import dataclass

from .evidence import EvidenceBundle
from .identity import (
    FameStatus,
    FamousConfig,
    IdentityModel,
    SpeakerModel,
    build_face_models,
    classify_names,
)
from .stage1 import Stage1Config, Tag, TagStage, run_stage1
from .stage2 import (
    Stage2Config,
    Stage2Order,
    build_speaker_models,
    query_expand,
    run_stage2,
)

COMBO_STAGE1 = "stage1"
COMBO_STAGE1_FUSION = "stage1_fusion"
COMBO_STAGE1_FUSION_QE = "stage1_fusion_qe"
COMBO_ORDER = (COMBO_STAGE1, COMBO_STAGE1_FUSION, COMBO_STAGE1_FUSION_QE)

_COMBO_STAGES = {
    COMBO_STAGE1: {TagStage.FAMOUS_MODEL, TagStage.CORROBORATION},
    COMBO_STAGE1_FUSION: {TagStage.FAMOUS_MODEL, TagStage.CORROBORATION, TagStage.FUSION},
    COMBO_STAGE1_FUSION_QE: set(TagStage),
}


@dataclass(frozen=True)
class PipelineResult:
    fame: dict[str, FameStatus]
    face_models: tuple[IdentityModel, ...]
    speaker_models: tuple[SpeakerModel, ...]
    expanded_models: tuple[IdentityModel, ...]
    stage1_tags: tuple[Tag, ...]
    tags: tuple[Tag, ...]

    def tags_for(self, combo: str) -> list[Tag]:
        """The cumulative tag set for a stage combination."""
        stages = _COMBO_STAGES[combo]
        return [t for t in self.tags if t.stage in stages]

    def tag_counts(self) -> dict[str, int]:
        counts = {stage.value: 0 for stage in TagStage}
        for tag in self.tags:
            counts[tag.stage.value] += 1
        return counts


def run_pipeline(
    bundle: EvidenceBundle,
    famous_cfg: FamousConfig,
    stage1_cfg: Stage1Config,
    stage2_cfg: Stage2Config,
) -> PipelineResult:
    """Classify names, build models, run both tagging passes."""
    fame = classify_names(bundle, famous_cfg)
    face_models = build_face_models(bundle, fame, famous_cfg)
    stage1_tags = run_stage1(bundle, fame, face_models, stage1_cfg)
    tags = run_stage2(bundle, stage1_tags, face_models, stage2_cfg)

    speaker_models = tuple(build_speaker_models(bundle, stage1_tags))
    expanded_models: tuple[IdentityModel, ...] = ()
    if stage2_cfg.order in (Stage2Order.FUSION_THEN_QE, Stage2Order.QE_ONLY) and tags:
        expanded_models = tuple(query_expand(bundle, tags, face_models))

    return PipelineResult(
        fame=fame,
        face_models=tuple(face_models),
        speaker_models=speaker_models,
        expanded_models=expanded_models,
        stage1_tags=tuple(stage1_tags),
        tags=tuple(tags),
    )
