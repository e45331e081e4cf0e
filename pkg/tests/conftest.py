"""Shared builders for hand-constructed fixtures."""

from __future__ import annotations

import math

import numpy as np

from facetag.core import Embedding, l2_normalize
from facetag.evidence import EvidenceBundle, FaceTrack, SpeechTurn


def unit(*components: float) -> Embedding:
    """Embedding from arbitrary components, normalised."""
    return l2_normalize(np.asarray(components, dtype=np.float64))


def axis(dim: int, index: int) -> Embedding:
    """One-hot unit vector; exact values, exact dot products."""
    values = np.zeros(dim)
    values[index] = 1.0
    return Embedding(values)


def angled(theta: float, dim: int = 2) -> Embedding:
    """2-D direction at angle theta (radians), padded with zeros to dim."""
    values = np.zeros(dim)
    values[0] = math.cos(theta)
    values[1] = math.sin(theta)
    return l2_normalize(values)


def make_track(
    track_id: str,
    detections,
    t_start: float = 0.0,
    t_end: float = 4.0,
    video_id: str = "v0",
    speaking=(),
) -> FaceTrack:
    return FaceTrack(
        track_id=track_id,
        video_id=video_id,
        shot_id=f"{video_id}-shot",
        t_start=t_start,
        t_end=t_end,
        detections=tuple(detections),
        speaking_segments=tuple(speaking),
    )


def make_turn(
    turn_id: str,
    embedding: Embedding,
    t_start: float,
    t_end: float,
    video_id: str = "v0",
    asd_track_id: str | None = None,
) -> SpeechTurn:
    return SpeechTurn(
        turn_id=turn_id,
        video_id=video_id,
        t_start=t_start,
        t_end=t_end,
        speaker_embedding=embedding,
        asd_track_id=asd_track_id,
    )
