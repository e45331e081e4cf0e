"""Deterministic synthetic evidence bundles plus brute-force test oracles.

The generator draws one face prototype and one speaker prototype per
identity on the unit sphere, then derives every observation from them:
search-result faces and track detections are the prototype rotated toward a
random orthogonal direction by a Gaussian angle, so points stay on the
sphere by construction. All randomness flows from a single seed through
numpy's default PCG64 generator, making bundles byte-reproducible.

Per-identity profiles control the search-result mix (honest cluster size,
independent distractors, and optionally a "polluted" cluster of faces that
actually depict another cast member), whether the person appears on screen
at all, and whether their name shows up written/spoken near a true
appearance. "Hard" tracks rotate the whole track away from the prototype by
a fixed angle before per-detection noise, mimicking extreme poses that web
images do not cover.

The oracles (`naive_cluster_reference`, `brute_force_ap`) are deliberately
plain re-implementations used to cross-check the production code paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TIE_TOLERANCE, Embedding, Partition
from .errors import ConfigError, EmptyInputError
from .evidence import (
    EvidenceBundle,
    FaceTrack,
    NameOccurrence,
    NameSource,
    SearchResult,
    SearchResultSet,
    SpeechTurn,
    validate_bundle,
)

TRACK_SPACING = 6.0
TRACK_DURATION = 4.0


@dataclass(frozen=True)
class IdentityProfile:
    """Search-result and appearance profile for one synthetic identity.

    ``polluted_cluster_size`` entries are drawn near the face prototype of
    ``polluted_target`` (another identity index), modelling a search query
    whose biggest result cluster depicts the wrong person. ``n_tracks``
    overrides the bundle-wide track count; 0 means the name exists (e.g. in
    a cast list) but the person never appears on screen.
    """

    search_cluster_size: int
    distractor_count: int = 0
    polluted_cluster_size: int = 0
    polluted_target: int | None = None
    n_tracks: int | None = None
    written_occurrence: bool = True


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_identities: int
    fame_profile: tuple[IdentityProfile, ...]
    n_tracks_per_identity: int = 3
    embedding_noise: float = 0.1  # angular std-dev, radians
    speech_fraction: float = 0.5
    face_dim: int = 128
    speaker_dim: int = 64
    detections_per_track: int = 4
    hard_track_fraction: float = 0.0
    hard_track_angle: float = 1.35  # radians away from the web-image prototype

    def __post_init__(self) -> None:
        if self.n_identities < 1:
            raise ConfigError("n_identities must be >= 1")
        if len(self.fame_profile) != self.n_identities:
            raise ConfigError(
                f"fame_profile has {len(self.fame_profile)} entries for "
                f"{self.n_identities} identities"
            )
        if self.face_dim < 2 or self.speaker_dim < 2:
            raise ConfigError("embedding dimensions must be >= 2")
        if self.embedding_noise < 0:
            raise ConfigError("embedding_noise must be >= 0")
        for frac_name in ("speech_fraction", "hard_track_fraction"):
            value = getattr(self, frac_name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{frac_name} must be in [0, 1], got {value}")
        if self.n_tracks_per_identity < 0 or self.detections_per_track < 1:
            raise ConfigError("track and detection counts out of range")
        for idx, prof in enumerate(self.fame_profile):
            total = prof.search_cluster_size + prof.distractor_count + prof.polluted_cluster_size
            if min(prof.search_cluster_size, prof.distractor_count, prof.polluted_cluster_size) < 0:
                raise ConfigError(f"profile {idx}: negative entry counts")
            if total > 100:
                raise ConfigError(f"profile {idx}: {total} search entries exceed the top-100")
            if prof.polluted_cluster_size > 0 and prof.polluted_target is not None:
                if not 0 <= prof.polluted_target < self.n_identities:
                    raise ConfigError(f"profile {idx}: polluted_target out of range")
                if prof.polluted_target == idx:
                    raise ConfigError(f"profile {idx}: polluted_target must differ")
            if prof.n_tracks is not None and prof.n_tracks < 0:
                raise ConfigError(f"profile {idx}: n_tracks must be >= 0")


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def _rotate(rng: np.random.Generator, base: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``base`` by ``angle`` toward a random orthogonal direction."""
    if angle == 0.0:
        return base
    while True:
        g = rng.standard_normal(base.shape[0])
        ortho = g - np.dot(g, base) * base
        norm = np.linalg.norm(ortho)
        if norm > 1e-9:
            ortho /= norm
            break
    rotated = np.cos(angle) * base + np.sin(angle) * ortho
    return rotated / np.linalg.norm(rotated)


def _perturb(rng: np.random.Generator, base: np.ndarray, noise: float) -> np.ndarray:
    if noise == 0.0:
        return base
    return _rotate(rng, base, float(rng.normal(0.0, noise)))


def generate_bundle(cfg: SynthConfig) -> tuple[EvidenceBundle, dict[str, str]]:
    """Build a fully validated bundle with known ground truth.

    Deterministic for a given config: identical configs produce
    byte-identical saved bundles.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_identities
    names = [f"Person {i:02d}" for i in range(n)]
    face_protos = [_unit(rng, cfg.face_dim) for _ in range(n)]
    speaker_protos = [_unit(rng, cfg.speaker_dim) for _ in range(n)]

    # Search results: honest cluster, then polluted cluster, then loose
    # distractors, interleaved at random ranks.
    search: dict[str, SearchResultSet] = {}
    for i, prof in enumerate(cfg.fame_profile):
        entries: list[np.ndarray] = []
        entries.extend(
            _perturb(rng, face_protos[i], cfg.embedding_noise)
            for _ in range(prof.search_cluster_size)
        )
        if prof.polluted_cluster_size > 0:
            target = (
                face_protos[prof.polluted_target]
                if prof.polluted_target is not None
                else _unit(rng, cfg.face_dim)
            )
            entries.extend(
                _perturb(rng, target, cfg.embedding_noise)
                for _ in range(prof.polluted_cluster_size)
            )
        entries.extend(_unit(rng, cfg.face_dim) for _ in range(prof.distractor_count))
        order = rng.permutation(len(entries))
        search[names[i]] = SearchResultSet(
            name=names[i],
            entries=tuple(
                SearchResult(rank=pos + 1, embedding=Embedding(entries[src]))
                for pos, src in enumerate(order)
            ),
        )

    # Tracks laid out round-robin on one timeline so that occurrence windows
    # straddle neighbouring identities.
    track_counts = [
        prof.n_tracks if prof.n_tracks is not None else cfg.n_tracks_per_identity
        for prof in cfg.fame_profile
    ]
    slots = [
        (identity, local)
        for local in range(max(track_counts, default=0))
        for identity in range(n)
        if local < track_counts[identity]
    ]

    tracks: list[FaceTrack] = []
    turns: list[SpeechTurn] = []
    ground_truth: dict[str, str] = {}
    first_track_start: dict[int, float] = {}
    for slot, (identity, _) in enumerate(slots):
        start = TRACK_SPACING * slot
        end = start + TRACK_DURATION
        track_id = f"v0-t{slot:04d}"
        base = face_protos[identity]
        if cfg.hard_track_fraction > 0 and rng.random() < cfg.hard_track_fraction:
            base = _rotate(rng, base, cfg.hard_track_angle)
        detections = tuple(
            Embedding(_perturb(rng, base, cfg.embedding_noise))
            for _ in range(cfg.detections_per_track)
        )
        speaking: tuple[tuple[float, float], ...] = ()
        if rng.random() < cfg.speech_fraction:
            speaking = ((start + 1.0, start + 3.0),)
            turns.append(
                SpeechTurn(
                    turn_id=f"v0-u{slot:04d}",
                    video_id="v0",
                    t_start=start + 0.9,
                    t_end=start + 3.1,
                    speaker_embedding=Embedding(
                        _perturb(rng, speaker_protos[identity], cfg.embedding_noise)
                    ),
                    asd_track_id=track_id,
                )
            )
        tracks.append(
            FaceTrack(
                track_id=track_id,
                video_id="v0",
                shot_id=f"v0-s{slot:04d}",
                t_start=start,
                t_end=end,
                detections=detections,
                speaking_segments=speaking,
            )
        )
        ground_truth[track_id] = names[identity]
        first_track_start.setdefault(identity, start)

    occurrences: list[NameOccurrence] = []
    for i in range(n):
        occurrences.append(NameOccurrence(name=names[i], source=NameSource.IMDB))
    for i, prof in enumerate(cfg.fame_profile):
        if prof.written_occurrence and i in first_track_start:
            occurrences.append(
                NameOccurrence(
                    name=names[i],
                    source=NameSource.WRITTEN if i % 2 == 0 else NameSource.SPOKEN,
                    video_id="v0",
                    time=first_track_start[i] + TRACK_DURATION / 2.0,
                )
            )

    bundle = EvidenceBundle(
        face_dim=cfg.face_dim,
        speaker_dim=cfg.speaker_dim,
        tracks=tuple(tracks),
        turns=tuple(turns),
        names=tuple(occurrences),
        search=search,
        ground_truth=dict(ground_truth),
    )
    validate_bundle(bundle)
    return bundle, ground_truth


# ---------------------------------------------------------------------------
# Ready-made fixture configurations
# ---------------------------------------------------------------------------


def standard_fixture_config(seed: int = 11) -> SynthConfig:
    """The mixed-fame fixture used for end-to-end checks.

    20 identities: 8 famous, 7 less-famous with small honest clusters, 5
    never-famous. A fifth of tracks are "hard" (rotated 1.35 rad off the
    web prototype) so the second pass has genuine headroom over the first.
    """
    famous = [
        IdentityProfile(76, 10),
        IdentityProfile(45, 8),
        IdentityProfile(60, 12),
        IdentityProfile(40, 6),
        IdentityProfile(76, 0),
        IdentityProfile(50, 9),
        IdentityProfile(35, 11),
        IdentityProfile(64, 5),
    ]
    less_famous = [
        IdentityProfile(2, 6),
        IdentityProfile(3, 5),
        IdentityProfile(2, 8),
        IdentityProfile(4, 4),
        IdentityProfile(5, 3),
        IdentityProfile(3, 7),
        IdentityProfile(2, 6),
    ]
    never_famous = [IdentityProfile(0, 0) for _ in range(5)]
    return SynthConfig(
        seed=seed,
        n_identities=20,
        fame_profile=tuple(famous + less_famous + never_famous),
        n_tracks_per_identity=3,
        embedding_noise=0.15,
        speech_fraction=0.6,
        face_dim=128,
        speaker_dim=64,
        detections_per_track=4,
        hard_track_fraction=0.2,
        hard_track_angle=1.35,
    )


def sweep_fixture_config(seed: int = 11) -> SynthConfig:
    """Fixture whose small clusters are distractor-polluted.

    Two phantom names have search results dominated by a cluster depicting a
    never-famous cast member, so a low fame threshold builds wrong models
    and costs precision; two imdb-only names with mid-sized honest clusters
    lose all their tags once the threshold passes their cluster size, so
    recall falls as the threshold rises. Sweep this with fixed
    verification-grade thresholds (the thresholds are learnt once and do not
    move with alpha), so that only truly high similarities can tag.
    """
    profiles = (
        IdentityProfile(76, 10),  # anchor, famous at every sweep point
        IdentityProfile(68, 6),  # anchor
        IdentityProfile(12, 4, written_occurrence=False),  # imdb-only, mid cluster
        IdentityProfile(25, 5, written_occurrence=False),  # imdb-only, mid cluster
        IdentityProfile(  # phantom: biggest cluster depicts identity 8
            2, 3, polluted_cluster_size=8, polluted_target=8,
            n_tracks=0, written_occurrence=False,
        ),
        IdentityProfile(  # phantom: biggest cluster depicts identity 9
            2, 2, polluted_cluster_size=18, polluted_target=9,
            n_tracks=0, written_occurrence=False,
        ),
        IdentityProfile(3, 5),  # corroborated less-famous
        IdentityProfile(2, 6),  # corroborated less-famous
        IdentityProfile(0, 0, written_occurrence=False),  # victim of phantom 4
        IdentityProfile(0, 0, written_occurrence=False),  # victim of phantom 5
    )
    return SynthConfig(
        seed=seed,
        n_identities=10,
        fame_profile=profiles,
        n_tracks_per_identity=3,
        embedding_noise=0.12,
        speech_fraction=0.5,
        face_dim=128,
        speaker_dim=64,
        detections_per_track=4,
        hard_track_fraction=0.15,
        hard_track_angle=1.35,
    )


def small_fixture_config(seed: int = 3) -> SynthConfig:
    """A small mixed bundle for seeded property loops."""
    profiles = (
        IdentityProfile(40, 5),
        IdentityProfile(50, 8),
        IdentityProfile(60, 0),
        IdentityProfile(2, 6),
        IdentityProfile(3, 5),
        IdentityProfile(2, 4),
        IdentityProfile(0, 0),
        IdentityProfile(0, 0),
    )
    return SynthConfig(
        seed=seed,
        n_identities=8,
        fame_profile=profiles,
        n_tracks_per_identity=2,
        embedding_noise=0.15,
        speech_fraction=0.5,
        face_dim=64,
        speaker_dim=32,
        detections_per_track=3,
        hard_track_fraction=0.25,
        hard_track_angle=1.35,
    )


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------


def naive_cluster_reference(points: Sequence[Embedding], threshold: float) -> Partition:
    """Reference average-linkage agglomeration, recomputed from leaf distances.

    Written independently of the production clusterer: cluster-pair
    distances are taken as the plain mean over the leaf cosine-distance
    block each time, with the same stopping rule and smallest-member-index
    tie-break. O(N^3); only for tests.
    """
    pts = list(points)
    if not pts:
        raise EmptyInputError("cannot cluster an empty point list")
    values = np.stack([p.values for p in pts])
    leaf = 1.0 - np.clip(values @ values.T, -1.0, 1.0)
    n = len(pts)

    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    pair_dist: dict[tuple[int, int], float] = {
        (i, j): float(leaf[i, j]) for i in range(n) for j in range(i + 1, n)
    }
    while len(clusters) > 1:
        minimum = min(pair_dist.values())
        if minimum > threshold:
            break
        tied = [pair for pair, d in pair_dist.items() if d <= minimum + TIE_TOLERANCE]
        a, b = min(tied)  # pair ids are smallest member indices, so this is the rule
        merged = sorted(clusters.pop(a) + clusters.pop(b))
        pair_dist = {
            pair: d for pair, d in pair_dist.items() if a not in pair and b not in pair
        }
        for other_id, other_members in clusters.items():
            lo, hi = min(a, other_id), max(a, other_id)
            pair_dist[(lo, hi)] = float(
                leaf[np.ix_(merged, other_members)].mean()
            )
        clusters[a] = merged
    return Partition(tuple(tuple(c) for c in clusters.values()))


def brute_force_ap(ranked: Sequence[bool], n_relevant: int) -> float:
    """Literal average precision: precision summed at correct positions."""
    hits = sum(1 for flag in ranked if flag)
    if n_relevant < hits:
        raise ValueError(f"n_relevant {n_relevant} < {hits} correct entries")
    if n_relevant == 0:
        return 0.0
    total = 0.0
    seen = 0
    for position, flag in enumerate(ranked, start=1):
        if flag:
            seen += 1
            total += seen / position
    return total / n_relevant
