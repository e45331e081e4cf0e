"""Immutable data model for everything produced upstream of the engine.

Face-tracks, speech-turns, name occurrences and image-search result sets are
carried in a single evidence bundle, serialised as one JSON document
(format version "1"). Embeddings are stored as arrays of decimal floats, so
a save/load round trip is bit-exact. Bundles are immutable after loading and
safe for concurrent readers.

Reserved name: ground-truth entries of ``"@unknown"`` mark tracks whose
identity could not be annotated; any tag on such a track is a mistake.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Embedding, average_pool
from .errors import (
    BundleFormatError,
    BundleValidationError,
    DegenerateVectorError,
    EmptyPoolError,
    SourceHasNoTimeError,
)

BUNDLE_VERSION = "1"
UNKNOWN_NAME = "@unknown"


def normalize_name(name: str) -> str:
    """Canonical map key for a person name: lower-cased, whitespace-collapsed."""
    return " ".join(name.split()).lower()


class NameSource(str, Enum):
    IMDB = "imdb"
    WRITTEN = "written"
    SPOKEN = "spoken"


@dataclass(frozen=True)
class FaceTrack:
    """Linked face detections of one person within a shot.

    ``speaking_segments`` are the sub-intervals (from upstream active-speaker
    detection) during which this face is speaking.
    """

    track_id: str
    video_id: str
    shot_id: str
    t_start: float
    t_end: float
    detections: tuple[Embedding, ...]
    speaking_segments: tuple[tuple[float, float], ...] = ()

    def pooled_embedding(self) -> Embedding:
        """Average-pooled, re-normalised single embedding for the track."""
        return average_pool(self.detections)


@dataclass(frozen=True)
class SpeechTurn:
    """A contiguous utterance with a single speaker embedding."""

    turn_id: str
    video_id: str
    t_start: float
    t_end: float
    speaker_embedding: Embedding
    asd_track_id: str | None = None


@dataclass(frozen=True)
class NameOccurrence:
    """One sighting of a candidate name: cast list, on-screen text, or speech."""

    name: str
    source: NameSource
    video_id: str | None = None
    time: float | None = None


@dataclass(frozen=True)
class SearchResult:
    rank: int
    embedding: Embedding


@dataclass(frozen=True)
class SearchResultSet:
    """Ranked face embeddings returned for a queried name; may be empty."""

    name: str
    entries: tuple[SearchResult, ...] = ()

    def top(self, k: int) -> tuple[SearchResult, ...]:
        return self.entries[:k]


@dataclass(frozen=True)
class EvidenceBundle:
    face_dim: int
    speaker_dim: int
    tracks: tuple[FaceTrack, ...] = ()
    turns: tuple[SpeechTurn, ...] = ()
    names: tuple[NameOccurrence, ...] = ()
    search: dict[str, SearchResultSet] = field(default_factory=dict)
    ground_truth: dict[str, str] | None = None

    def track_by_id(self) -> dict[str, FaceTrack]:
        return {t.track_id: t for t in self.tracks}

    def video_ids(self) -> set[str]:
        return {t.video_id for t in self.tracks} | {u.video_id for u in self.turns}


def search_for(bundle: EvidenceBundle, name: str) -> SearchResultSet:
    """Look up the result set for a name, matching case-insensitively."""
    key = normalize_name(name)
    for display, results in bundle.search.items():
        if normalize_name(display) == key:
            return results
    raise BundleValidationError(f"no search results recorded for name {name!r}")


def pooled_track_embeddings(bundle: EvidenceBundle) -> dict[str, Embedding | None]:
    """Pooled embedding per track; None where the detections cancel out."""
    pooled: dict[str, Embedding | None] = {}
    for track in bundle.tracks:
        try:
            pooled[track.track_id] = track.pooled_embedding()
        except (DegenerateVectorError, EmptyPoolError):
            pooled[track.track_id] = None
    return pooled


# ---------------------------------------------------------------------------
# Temporal queries
# ---------------------------------------------------------------------------


def overlapping_turns(
    track: FaceTrack, turns: Sequence[SpeechTurn]
) -> list[SpeechTurn]:
    """Turns that overlap a speaking segment of the track with positive duration.

    Zero-length touches do not count. Result is sorted by turn start time.
    """
    hits = []
    for turn in turns:
        if turn.video_id != track.video_id:
            continue
        for seg_start, seg_end in track.speaking_segments:
            if min(turn.t_end, seg_end) - max(turn.t_start, seg_start) > 0.0:
                hits.append(turn)
                break
    hits.sort(key=lambda u: (u.t_start, u.turn_id))
    return hits


def tracks_in_window(
    occurrence: NameOccurrence, tracks: Sequence[FaceTrack], delta: float
) -> list[FaceTrack]:
    """Tracks whose span intersects [time - delta, time + delta], sorted by id.

    Only written/spoken occurrences carry a timestamp; asking about an IMDB
    occurrence raises SourceHasNoTimeError.
    """
    if occurrence.source is NameSource.IMDB or occurrence.time is None:
        raise SourceHasNoTimeError(
            f"occurrence of {occurrence.name!r} from {occurrence.source.value} has no timestamp"
        )
    lo = occurrence.time - delta
    hi = occurrence.time + delta
    hits = [
        t
        for t in tracks
        if t.video_id == occurrence.video_id and t.t_start <= hi and t.t_end >= lo
    ]
    hits.sort(key=lambda t: t.track_id)
    return hits


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_embedding(emb: Embedding, dim: int, what: str) -> None:
    if emb.dim != dim:
        raise BundleValidationError(f"{what}: embedding dim {emb.dim}, expected {dim}")


def validate_bundle(bundle: EvidenceBundle) -> None:
    """Enforce every structural invariant; raises naming the offending record."""
    if bundle.face_dim < 1 or bundle.speaker_dim < 1:
        raise BundleValidationError("face_dim and speaker_dim must be positive")

    track_videos: dict[str, str] = {}
    for track in bundle.tracks:
        tid = track.track_id
        if tid in track_videos:
            raise BundleValidationError(f"track {tid}: duplicate track_id")
        track_videos[tid] = track.video_id
        if not track.t_start < track.t_end:
            raise BundleValidationError(f"track {tid}: t_start must precede t_end")
        if not track.detections:
            raise BundleValidationError(f"track {tid}: no detection embeddings")
        for emb in track.detections:
            _check_embedding(emb, bundle.face_dim, f"track {tid}")
        for seg_start, seg_end in track.speaking_segments:
            if not seg_start < seg_end:
                raise BundleValidationError(f"track {tid}: empty speaking segment")
            if seg_start < track.t_start or seg_end > track.t_end:
                raise BundleValidationError(
                    f"track {tid}: speaking segment outside track span"
                )

    turn_ids: set[str] = set()
    for turn in bundle.turns:
        uid = turn.turn_id
        if uid in turn_ids:
            raise BundleValidationError(f"turn {uid}: duplicate turn_id")
        turn_ids.add(uid)
        if not turn.t_start < turn.t_end:
            raise BundleValidationError(f"turn {uid}: t_start must precede t_end")
        _check_embedding(turn.speaker_embedding, bundle.speaker_dim, f"turn {uid}")
        if turn.asd_track_id is not None:
            video = track_videos.get(turn.asd_track_id)
            if video is None:
                raise BundleValidationError(
                    f"turn {uid}: asd_track_id {turn.asd_track_id!r} does not resolve"
                )
            if video != turn.video_id:
                raise BundleValidationError(
                    f"turn {uid}: asd_track_id {turn.asd_track_id!r} is in another video"
                )

    known_videos = set(track_videos.values()) | {u.video_id for u in bundle.turns}
    search_keys = {normalize_name(k) for k in bundle.search}
    if len(search_keys) != len(bundle.search):
        raise BundleValidationError("search map keys collide after name normalisation")
    for idx, occ in enumerate(bundle.names):
        label = f"name occurrence #{idx} ({occ.name!r})"
        if not occ.name.strip():
            raise BundleValidationError(f"{label}: empty name")
        if occ.source is NameSource.IMDB:
            if occ.time is not None:
                raise BundleValidationError(f"{label}: imdb occurrences carry no time")
        else:
            if occ.time is None or occ.video_id is None:
                raise BundleValidationError(
                    f"{label}: {occ.source.value} occurrences need time and video_id"
                )
        if occ.video_id is not None and occ.video_id not in known_videos:
            raise BundleValidationError(
                f"{label}: video_id {occ.video_id!r} does not resolve"
            )
        if normalize_name(occ.name) not in search_keys:
            raise BundleValidationError(f"{label}: no search result set for this name")

    for display, results in bundle.search.items():
        label = f"search set {display!r}"
        if normalize_name(results.name) != normalize_name(display):
            raise BundleValidationError(f"{label}: key does not match set name")
        if len(results.entries) > 100:
            raise BundleValidationError(f"{label}: more than 100 entries")
        prev_rank = 0
        for entry in results.entries:
            if entry.rank <= prev_rank:
                raise BundleValidationError(
                    f"{label}: ranks must be strictly increasing and 1-based"
                )
            if entry.rank > 100:
                raise BundleValidationError(f"{label}: rank {entry.rank} beyond top-100")
            prev_rank = entry.rank
            _check_embedding(entry.embedding, bundle.face_dim, label)

    if bundle.ground_truth is not None:
        for tid, name in bundle.ground_truth.items():
            if tid not in track_videos:
                raise BundleValidationError(
                    f"ground truth: track {tid!r} does not resolve"
                )
            if not name.strip():
                raise BundleValidationError(f"ground truth: empty name for track {tid}")


# ---------------------------------------------------------------------------
# Serialisation (format version "1")
# ---------------------------------------------------------------------------


def _require(doc: Mapping, key: str, context: str):
    if key not in doc:
        raise BundleFormatError(f"{context}: missing field {key!r}")
    return doc[key]


def _embedding_from(values, context: str) -> Embedding:
    try:
        return Embedding(np.asarray(values, dtype=np.float64))
    except (TypeError, ValueError) as exc:
        raise BundleFormatError(f"{context}: bad embedding ({exc})") from exc
    except DegenerateVectorError as exc:
        raise BundleValidationError(f"{context}: {exc}") from exc


def bundle_from_dict(doc: Mapping) -> EvidenceBundle:
    """Parse and fully validate a bundle document."""
    if not isinstance(doc, Mapping):
        raise BundleFormatError("bundle document must be a JSON object")
    version = _require(doc, "version", "bundle")
    if version != BUNDLE_VERSION:
        raise BundleFormatError(
            f"unsupported bundle version {version!r}; expected {BUNDLE_VERSION!r}"
        )
    face_dim = _require(doc, "face_dim", "bundle")
    speaker_dim = _require(doc, "speaker_dim", "bundle")
    if not isinstance(face_dim, int) or not isinstance(speaker_dim, int):
        raise BundleFormatError("face_dim and speaker_dim must be integers")
    try:
        bundle = _parse_records(doc, face_dim, speaker_dim)
    except (TypeError, ValueError, AttributeError) as exc:
        raise BundleFormatError(f"malformed bundle document: {exc}") from exc
    validate_bundle(bundle)
    return bundle


def _parse_records(doc: Mapping, face_dim: int, speaker_dim: int) -> EvidenceBundle:
    tracks = []
    for rec in doc.get("tracks", []):
        tid = str(_require(rec, "track_id", "track"))
        context = f"track {tid}"
        tracks.append(
            FaceTrack(
                track_id=tid,
                video_id=str(_require(rec, "video_id", context)),
                shot_id=str(_require(rec, "shot_id", context)),
                t_start=float(_require(rec, "t_start", context)),
                t_end=float(_require(rec, "t_end", context)),
                detections=tuple(
                    _embedding_from(v, context) for v in _require(rec, "detections", context)
                ),
                speaking_segments=tuple(
                    (float(s[0]), float(s[1])) for s in rec.get("speaking_segments", [])
                ),
            )
        )

    turns = []
    for rec in doc.get("turns", []):
        uid = str(_require(rec, "turn_id", "turn"))
        context = f"turn {uid}"
        asd = rec.get("asd_track_id")
        turns.append(
            SpeechTurn(
                turn_id=uid,
                video_id=str(_require(rec, "video_id", context)),
                t_start=float(_require(rec, "t_start", context)),
                t_end=float(_require(rec, "t_end", context)),
                speaker_embedding=_embedding_from(
                    _require(rec, "speaker_embedding", context), context
                ),
                asd_track_id=None if asd is None else str(asd),
            )
        )

    names = []
    for idx, rec in enumerate(doc.get("names", [])):
        context = f"name occurrence #{idx}"
        source_raw = _require(rec, "source", context)
        try:
            source = NameSource(source_raw)
        except ValueError as exc:
            raise BundleFormatError(f"{context}: unknown source {source_raw!r}") from exc
        time = rec.get("time")
        names.append(
            NameOccurrence(
                name=str(_require(rec, "name", context)),
                source=source,
                video_id=None if rec.get("video_id") is None else str(rec["video_id"]),
                time=None if time is None else float(time),
            )
        )

    search: dict[str, SearchResultSet] = {}
    for display, entries in doc.get("search", {}).items():
        context = f"search set {display!r}"
        parsed = tuple(
            SearchResult(
                rank=int(_require(rec, "rank", context)),
                embedding=_embedding_from(_require(rec, "embedding", context), context),
            )
            for rec in entries
        )
        search[str(display)] = SearchResultSet(name=str(display), entries=parsed)

    ground_truth = doc.get("ground_truth")
    if ground_truth is not None:
        ground_truth = {str(k): str(v) for k, v in ground_truth.items()}

    return EvidenceBundle(
        face_dim=face_dim,
        speaker_dim=speaker_dim,
        tracks=tuple(tracks),
        turns=tuple(turns),
        names=tuple(names),
        search=search,
        ground_truth=ground_truth,
    )


def bundle_to_dict(bundle: EvidenceBundle) -> dict:
    doc: dict = {
        "version": BUNDLE_VERSION,
        "face_dim": bundle.face_dim,
        "speaker_dim": bundle.speaker_dim,
        "tracks": [
            {
                "track_id": t.track_id,
                "video_id": t.video_id,
                "shot_id": t.shot_id,
                "t_start": t.t_start,
                "t_end": t.t_end,
                "detections": [e.values.tolist() for e in t.detections],
                "speaking_segments": [list(seg) for seg in t.speaking_segments],
            }
            for t in bundle.tracks
        ],
        "turns": [
            {
                "turn_id": u.turn_id,
                "video_id": u.video_id,
                "t_start": u.t_start,
                "t_end": u.t_end,
                "speaker_embedding": u.speaker_embedding.values.tolist(),
                "asd_track_id": u.asd_track_id,
            }
            for u in bundle.turns
        ],
        "names": [
            {
                "name": o.name,
                "source": o.source.value,
                "video_id": o.video_id,
                "time": o.time,
            }
            for o in bundle.names
        ],
        "search": {
            display: [
                {"rank": e.rank, "embedding": e.embedding.values.tolist()}
                for e in results.entries
            ]
            for display, results in bundle.search.items()
        },
    }
    if bundle.ground_truth is not None:
        doc["ground_truth"] = dict(bundle.ground_truth)
    return doc


def load_bundle(path: str | Path) -> EvidenceBundle:
    """Read and validate an evidence-bundle JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{path}: not valid JSON ({exc})") from exc
    return bundle_from_dict(doc)


def save_bundle(bundle: EvidenceBundle, path: str | Path) -> None:
    """Write the bundle as indented JSON; floats round-trip exactly."""
    Path(path).write_text(
        json.dumps(bundle_to_dict(bundle), indent=2) + "\n", encoding="utf-8"
    )
