from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from facetag.errors import (
    BundleFormatError,
    BundleValidationError,
    SourceHasNoTimeError,
)
from facetag.evidence import (
    EvidenceBundle,
    NameOccurrence,
    NameSource,
    SearchResult,
    SearchResultSet,
    bundle_from_dict,
    bundle_to_dict,
    load_bundle,
    normalize_name,
    overlapping_turns,
    save_bundle,
    search_for,
    tracks_in_window,
)
from facetag.synth import generate_bundle, small_fixture_config

from conftest import axis, make_track, make_turn, unit


def reference_doc() -> dict:
    """A small hand-built valid bundle spanning two videos."""
    def vec(i):  # unit 4-vectors
        values = [0.0, 0.0, 0.0, 0.0]
        values[i % 4] = 1.0
        return values

    return {
        "version": "1",
        "face_dim": 4,
        "speaker_dim": 3,
        "tracks": [
            {
                "track_id": "a-t0",
                "video_id": "va",
                "shot_id": "a-s0",
                "t_start": 0.0,
                "t_end": 5.0,
                "detections": [vec(0), vec(0)],
                "speaking_segments": [[1.0, 3.0]],
            },
            {
                "track_id": "a-t1",
                "video_id": "va",
                "shot_id": "a-s1",
                "t_start": 6.0,
                "t_end": 9.0,
                "detections": [vec(1)],
                "speaking_segments": [],
            },
            {
                "track_id": "b-t0",
                "video_id": "vb",
                "shot_id": "b-s0",
                "t_start": 0.0,
                "t_end": 4.0,
                "detections": [vec(2)],
                "speaking_segments": [[0.5, 2.5]],
            },
        ],
        "turns": [
            {
                "turn_id": "a-u0",
                "video_id": "va",
                "t_start": 0.5,
                "t_end": 2.0,
                "speaker_embedding": [1.0, 0.0, 0.0],
                "asd_track_id": "a-t0",
            },
            {
                "turn_id": "b-u0",
                "video_id": "vb",
                "t_start": 1.0,
                "t_end": 2.0,
                "speaker_embedding": [0.0, 1.0, 0.0],
                "asd_track_id": None,
            },
        ],
        "names": [
            {"name": "Alice Alpha", "source": "imdb", "video_id": None, "time": None},
            {"name": "Alice Alpha", "source": "written", "video_id": "va", "time": 2.0},
            {"name": "Bob Beta", "source": "spoken", "video_id": "vb", "time": 1.5},
        ],
        "search": {
            "Alice Alpha": [
                {"rank": 1, "embedding": vec(0)},
                {"rank": 3, "embedding": vec(1)},
            ],
            "Bob Beta": [],
        },
        "ground_truth": {"a-t0": "Alice Alpha", "a-t1": "@unknown", "b-t0": "Bob Beta"},
    }


# ---------------------------------------------------------------------------
# Loading, saving, round trips
# ---------------------------------------------------------------------------


def test_minimal_bundle_loads():
    doc = {
        "version": "1",
        "face_dim": 2,
        "speaker_dim": 2,
        "tracks": [
            {
                "track_id": "t0",
                "video_id": "v0",
                "shot_id": "s0",
                "t_start": 0.0,
                "t_end": 1.0,
                "detections": [[1.0, 0.0]],
            }
        ],
        "names": [{"name": "Solo Person", "source": "imdb"}],
        "search": {"Solo Person": []},
    }
    bundle = bundle_from_dict(doc)
    assert len(bundle.tracks) == 1
    assert bundle.ground_truth is None


def test_reference_doc_round_trips(tmp_path):
    bundle = bundle_from_dict(reference_doc())
    path = tmp_path / "bundle.json"
    save_bundle(bundle, path)
    reloaded = load_bundle(path)
    assert reloaded == bundle
    save_bundle(reloaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_synth_bundle_round_trips(tmp_path):
    bundle, _ = generate_bundle(small_fixture_config(1))
    path = tmp_path / "bundle.json"
    save_bundle(bundle, path)
    assert load_bundle(path) == bundle


def test_non_json_file_is_format_error(tmp_path):
    path = tmp_path / "garbage.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(BundleFormatError):
        load_bundle(path)


def test_wrong_version_rejected():
    doc = reference_doc()
    doc["version"] = "2"
    with pytest.raises(BundleFormatError):
        bundle_from_dict(doc)


def test_dangling_asd_track_names_the_turn():
    doc = reference_doc()
    doc["turns"][0]["asd_track_id"] = "missing-track"
    with pytest.raises(BundleValidationError, match="a-u0"):
        bundle_from_dict(doc)


def test_cross_video_asd_link_rejected():
    doc = reference_doc()
    doc["turns"][0]["asd_track_id"] = "b-t0"
    with pytest.raises(BundleValidationError, match="a-u0"):
        bundle_from_dict(doc)


def test_validation_error_names_the_track():
    doc = reference_doc()
    doc["tracks"][1]["t_end"] = doc["tracks"][1]["t_start"]
    with pytest.raises(BundleValidationError, match="a-t1"):
        bundle_from_dict(doc)


def test_normalize_name():
    assert normalize_name("  Alice   ALPHA ") == "alice alpha"
    assert normalize_name("alice alpha") == "alice alpha"


def test_search_for_is_case_insensitive():
    bundle = bundle_from_dict(reference_doc())
    assert search_for(bundle, "ALICE  alpha").name == "Alice Alpha"
    with pytest.raises(BundleValidationError):
        search_for(bundle, "Nobody")


# ---------------------------------------------------------------------------
# Single-field corruption fuzz
# ---------------------------------------------------------------------------


def _mutations():
    """Catalog of (label, corruptor) pairs; each touches one field."""

    def set_field(path, value):
        def apply(doc):
            target = doc
            for key in path[:-1]:
                target = target[key]
            target[path[-1]] = value

        return apply

    def del_field(path):
        def apply(doc):
            target = doc
            for key in path[:-1]:
                target = target[key]
            del target[path[-1]]

        return apply

    catalog = [
        ("version-bump", set_field(("version",), "2")),
        ("version-missing", del_field(("version",))),
        ("face-dim-string", set_field(("face_dim",), "4")),
        ("face-dim-zero", set_field(("face_dim",), 0)),
        ("speaker-dim-mismatch", set_field(("speaker_dim",), 7)),
        ("track-times-swapped", set_field(("tracks", 0, "t_start"), 9.0)),
        ("track-times-equal", set_field(("tracks", 1, "t_end"), 6.0)),
        ("track-no-detections", set_field(("tracks", 0, "detections"), [])),
        ("track-missing-start", del_field(("tracks", 0, "t_start"))),
        ("track-duplicate-id", set_field(("tracks", 1, "track_id"), "a-t0")),
        ("track-det-not-unit", set_field(("tracks", 0, "detections", 0), [2.0, 0, 0, 0])),
        ("track-det-wrong-dim", set_field(("tracks", 0, "detections", 0), [1.0, 0.0])),
        ("track-det-nan", set_field(("tracks", 0, "detections", 0), [None, 0, 0, 0])),
        ("segment-reversed", set_field(("tracks", 0, "speaking_segments", 0), [3.0, 1.0])),
        ("segment-outside", set_field(("tracks", 0, "speaking_segments", 0), [1.0, 7.0])),
        ("turn-times-swapped", set_field(("turns", 0, "t_start"), 3.0)),
        ("turn-duplicate-id", set_field(("turns", 1, "turn_id"), "a-u0")),
        ("turn-emb-not-unit", set_field(("turns", 0, "speaker_embedding"), [0.5, 0, 0])),
        ("turn-emb-wrong-dim", set_field(("turns", 0, "speaker_embedding"), [1.0, 0, 0, 0])),
        ("turn-dangling-asd", set_field(("turns", 0, "asd_track_id"), "ghost")),
        ("turn-cross-video-asd", set_field(("turns", 0, "asd_track_id"), "b-t0")),
        ("turn-missing-video", del_field(("turns", 0, "video_id"))),
        ("imdb-with-time", set_field(("names", 0, "time"), 4.2)),
        ("written-without-time", set_field(("names", 1, "time"), None)),
        ("written-without-video", set_field(("names", 1, "video_id"), None)),
        ("occurrence-bad-source", set_field(("names", 2, "source"), "ocr")),
        ("occurrence-empty-name", set_field(("names", 2, "name"), "   ")),
        ("occurrence-dangling-video", set_field(("names", 1, "video_id"), "vz")),
        ("occurrence-unsearched-name", set_field(("names", 2, "name"), "Carol Gamma")),
        ("search-rank-duplicate", set_field(("search", "Alice Alpha", 1, "rank"), 1)),
        ("search-rank-zero", set_field(("search", "Alice Alpha", 0, "rank"), 0)),
        ("search-rank-101", set_field(("search", "Alice Alpha", 1, "rank"), 101)),
        ("search-entry-not-unit", set_field(("search", "Alice Alpha", 0, "embedding"), [3.0, 0, 0, 0])),
        ("search-entry-wrong-dim", set_field(("search", "Alice Alpha", 0, "embedding"), [1.0, 0.0])),
        ("gt-dangling-track", set_field(("ground_truth", "ghost"), "Alice Alpha")),
        ("gt-empty-name", set_field(("ground_truth", "a-t0"), "")),
    ]

    def add_colliding_search_key(doc):
        doc["search"]["ALICE  ALPHA"] = []

    def oversize_search(doc):
        doc["search"]["Bob Beta"] = [
            {"rank": i + 1, "embedding": [1.0, 0.0, 0.0, 0.0]} for i in range(101)
        ]

    def decreasing_ranks(doc):
        doc["search"]["Alice Alpha"] = [
            {"rank": 3, "embedding": [1.0, 0.0, 0.0, 0.0]},
            {"rank": 1, "embedding": [1.0, 0.0, 0.0, 0.0]},
        ]

    catalog.append(("search-key-collision", add_colliding_search_key))
    catalog.append(("search-oversize", oversize_search))
    catalog.append(("search-ranks-decreasing", decreasing_ranks))
    return catalog


@pytest.mark.parametrize("label,corrupt", _mutations(), ids=lambda item: item if isinstance(item, str) else "")
def test_single_field_corruptions_rejected(label, corrupt):
    doc = copy.deepcopy(reference_doc())
    corrupt(doc)
    with pytest.raises((BundleFormatError, BundleValidationError)):
        bundle_from_dict(doc)


def test_randomised_corruption_sweep_rejects_at_least_100():
    """Apply the catalog across randomly chosen targets; every mutant must fail."""
    rng = np.random.default_rng(99)
    catalog = _mutations()
    rejected = 0
    attempts = 0
    while rejected < 100 and attempts < 500:
        attempts += 1
        label, corrupt = catalog[int(rng.integers(0, len(catalog)))]
        doc = copy.deepcopy(reference_doc())
        corrupt(doc)
        with pytest.raises((BundleFormatError, BundleValidationError)):
            bundle_from_dict(doc)
        rejected += 1
    assert rejected >= 100


# ---------------------------------------------------------------------------
# Temporal queries
# ---------------------------------------------------------------------------


def test_overlapping_turns_positive_overlap_included():
    track = make_track("t", [axis(2, 0)], 0.0, 5.0, speaking=[(0.0, 5.0)])
    turn = make_turn("u", unit(1.0, 1.0, 0.0), 4.0, 6.0)
    assert overlapping_turns(track, [turn]) == [turn]


def test_overlapping_turns_zero_length_touch_excluded():
    track = make_track("t", [axis(2, 0)], 0.0, 5.0, speaking=[(0.0, 5.0)])
    turn = make_turn("u", unit(1.0, 1.0, 0.0), 5.0, 6.0)
    assert overlapping_turns(track, [turn]) == []


def test_overlapping_turns_other_video_excluded():
    track = make_track("t", [axis(2, 0)], 0.0, 5.0, speaking=[(0.0, 5.0)])
    turn = make_turn("u", unit(1.0, 1.0, 0.0), 1.0, 2.0, video_id="other")
    assert overlapping_turns(track, [turn]) == []


def test_overlapping_turns_matches_brute_force():
    rng = np.random.default_rng(10)
    emb = unit(1.0, 1.0, 0.0)
    for _ in range(50):
        segments = []
        cursor = 0.0
        for _ in range(int(rng.integers(0, 4))):
            start = cursor + float(rng.uniform(0, 3))
            end = start + float(rng.uniform(0.1, 4))
            segments.append((start, end))
            cursor = end
        span_end = max((end for _, end in segments), default=2.0) + 1.0
        track = make_track("t", [axis(2, 0)], 0.0, span_end, speaking=segments)
        turns = []
        for i in range(int(rng.integers(0, 12))):
            start = float(rng.uniform(-2, span_end))
            turns.append(make_turn(f"u{i}", emb, start, start + float(rng.uniform(0.05, 3))))

        got = overlapping_turns(track, turns)

        expected = []
        for turn in turns:
            overlap = any(
                min(turn.t_end, seg_end) - max(turn.t_start, seg_start) > 0
                for seg_start, seg_end in segments
            )
            if overlap:
                expected.append(turn)
        expected.sort(key=lambda u: (u.t_start, u.turn_id))
        assert got == expected


def test_tracks_in_window_examples():
    occurrence = NameOccurrence("Alice", NameSource.WRITTEN, video_id="v0", time=100.0)
    inside = make_track("t-in", [axis(2, 0)], 103.0, 110.0)
    outside = make_track("t-out", [axis(2, 0)], 106.0, 120.0)
    assert tracks_in_window(occurrence, [outside, inside], 5.0) == [inside]


def test_tracks_in_window_imdb_rejected():
    occurrence = NameOccurrence("Alice", NameSource.IMDB)
    with pytest.raises(SourceHasNoTimeError):
        tracks_in_window(occurrence, [], 5.0)


def test_tracks_in_window_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(50):
        tracks = []
        for i in range(int(rng.integers(0, 15))):
            start = float(rng.uniform(0, 100))
            tracks.append(
                make_track(f"t{i:02d}", [axis(2, 0)], start, start + float(rng.uniform(0.5, 10)))
            )
        time = float(rng.uniform(0, 100))
        delta = float(rng.uniform(0, 10))
        occurrence = NameOccurrence("Alice", NameSource.SPOKEN, video_id="v0", time=time)

        got = tracks_in_window(occurrence, tracks, delta)

        expected = sorted(
            (
                t
                for t in tracks
                if t.t_start <= time + delta and t.t_end >= time - delta
            ),
            key=lambda t: t.track_id,
        )
        assert got == expected
