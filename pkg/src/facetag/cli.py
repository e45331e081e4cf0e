"""Command-line entry points: run, sweep, synth, calibrate, eval.

Configuration comes from a JSON file; command-line flags override file
values. Exit codes: 0 success, 1 config error, 2 I/O error, 3 validation
error. All outputs land under the configured output directory and are
byte-identical across reruns of the same config.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError, FacetagError
from .evaluation import (
    CalibratedThresholds,
    alpha_sweep,
    calibrate_pipeline,
    fame_census,
    score_tags,
)
from .evidence import load_bundle, save_bundle
from .identity import FamousConfig
from .pipeline import COMBO_ORDER, run_pipeline
from .stage1 import Stage1Config, read_tags_jsonl, write_tags_jsonl
from .stage2 import Stage2Config, Stage2Order
from .synth import (
    IdentityProfile,
    SynthConfig,
    generate_bundle,
    small_fixture_config,
    standard_fixture_config,
    sweep_fixture_config,
)

DEFAULT_SWEEP_ALPHAS = (5, 10, 20, 30, 40, 60)

_FIXTURES = {
    "standard": standard_fixture_config,
    "sweep": sweep_fixture_config,
    "small": small_fixture_config,
}


def _load_json_config(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: config is not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _section(doc: Mapping, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"config section {key!r} must be an object")
    return dict(value)


def _build(cls, section: dict, what: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad {what} config: {exc}") from exc


class Settings:
    """Merged file + flag configuration for one command invocation."""

    def __init__(self, args: argparse.Namespace) -> None:
        doc = _load_json_config(args.config) if args.config else {}
        self.bundle_path = getattr(args, "bundle", None) or doc.get("bundle")
        self.output_dir = Path(getattr(args, "out", None) or doc.get("output_dir", "out"))
        self.ground_truth_path = getattr(args, "ground_truth", None) or doc.get(
            "ground_truth"
        )

        famous = _section(doc, "famous")
        if getattr(args, "alpha", None) is not None:
            famous["alpha"] = args.alpha
        self.famous = _build(FamousConfig, famous, "famous")

        stage1 = _section(doc, "stage1")
        stage2 = _section(doc, "stage2")

        # Precedence: explicit flag > calibrated thresholds file > config section.
        thresholds_path = getattr(args, "thresholds", None) or doc.get("thresholds_path")
        if thresholds_path:
            thresholds = _load_json_config(thresholds_path)
            for key in ("tau_face", "tau_verify"):
                if thresholds.get(key) is not None:
                    stage1[key] = thresholds[key]
            for key in ("tau_fuse", "tau_qe"):
                if thresholds.get(key) is not None:
                    stage2[key] = thresholds[key]

        for flag in ("tau_face", "tau_verify"):
            if getattr(args, flag, None) is not None:
                stage1[flag] = getattr(args, flag)
        if getattr(args, "delta_window", None) is not None:
            stage1["delta"] = args.delta_window
        for flag in ("tau_fuse", "tau_qe"):
            if getattr(args, flag, None) is not None:
                stage2[flag] = getattr(args, flag)
        if getattr(args, "stage2_order", None) is not None:
            stage2["order"] = args.stage2_order
        if getattr(args, "qe_iterations", None) is not None:
            stage2["qe_iterations"] = args.qe_iterations
        if "order" in stage2:
            try:
                stage2["order"] = Stage2Order(stage2["order"])
            except ValueError as exc:
                raise ConfigError(f"unknown stage2 order {stage2['order']!r}") from exc

        self.stage1 = _build(Stage1Config, stage1, "stage1")
        self.stage2 = _build(Stage2Config, stage2, "stage2")

        evaluation = _section(doc, "evaluation")
        sweep_flag = getattr(args, "sweep", None)
        if sweep_flag is not None:
            try:
                alphas = tuple(int(a) for a in sweep_flag.split(",") if a.strip())
            except ValueError as exc:
                raise ConfigError(f"bad --sweep value {sweep_flag!r}") from exc
        else:
            alphas = tuple(evaluation.get("sweep_alphas", DEFAULT_SWEEP_ALPHAS))
        self.sweep_alphas = alphas

        self.synth_section = _section(doc, "synth")
        if getattr(args, "seed", None) is not None:
            self.synth_section["seed"] = args.seed
        elif "seed" in doc and "seed" not in self.synth_section:
            self.synth_section["seed"] = doc["seed"]
        if getattr(args, "fixture", None) is not None:
            self.synth_section["fixture"] = args.fixture

    def require_bundle(self) -> Path:
        if not self.bundle_path:
            raise ConfigError("no bundle path given (config 'bundle' or --bundle)")
        return Path(self.bundle_path)

    def synth_config(self) -> SynthConfig:
        section = dict(self.synth_section)
        fixture = section.pop("fixture", None)
        if fixture is not None:
            if fixture not in _FIXTURES:
                raise ConfigError(
                    f"unknown fixture {fixture!r}; choose from {sorted(_FIXTURES)}"
                )
            seed = section.pop("seed", None)
            if section:
                raise ConfigError(
                    f"fixture {fixture!r} takes only a seed; got extra keys {sorted(section)}"
                )
            return _FIXTURES[fixture]() if seed is None else _FIXTURES[fixture](seed)
        if "profiles" not in section:
            raise ConfigError("synth config needs 'profiles' or a named 'fixture'")
        profiles = tuple(
            _build(IdentityProfile, dict(p), "identity profile") for p in section.pop("profiles")
        )
        section["fame_profile"] = profiles
        section.setdefault("n_identities", len(profiles))
        return _build(SynthConfig, section, "synth")


def _load_ground_truth(settings: Settings, bundle) -> dict[str, str] | None:
    if settings.ground_truth_path:
        doc = _load_json_config(settings.ground_truth_path)
        return {str(k): str(v) for k, v in doc.items()}
    return bundle.ground_truth


def _dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _models_doc(result) -> dict:
    def model_entry(model) -> dict:
        entry = {
            "name": model.name,
            "support_count": model.support_count,
            "embedding": model.embedding.values.tolist(),
        }
        if hasattr(model, "provenance"):
            entry["provenance"] = model.provenance.value
        return entry

    return {
        "face_models": [model_entry(m) for m in result.face_models],
        "speaker_models": [model_entry(m) for m in result.speaker_models],
        "expanded_models": [model_entry(m) for m in result.expanded_models],
    }


def cmd_run(args: argparse.Namespace) -> int:
    settings = Settings(args)
    bundle = load_bundle(settings.require_bundle())
    ground_truth = _load_ground_truth(settings, bundle)
    result = run_pipeline(bundle, settings.famous, settings.stage1, settings.stage2)

    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_tags_jsonl(result.tags, out / "tags.jsonl")
    _dump_json(_models_doc(result), out / "models.json")

    report: dict = {
        "tag_counts": result.tag_counts(),
        "tags_total": len(result.tags),
        "fame_census": {
            source: row.as_dict()
            for source, row in fame_census(
                bundle.names, bundle.search, settings.famous
            ).items()
        },
        "thresholds": {
            "tau_face": settings.stage1.tau_face,
            "tau_verify": settings.stage1.tau_verify,
            "tau_fuse": settings.stage2.tau_fuse,
            "tau_qe": settings.stage2.tau_qe,
        },
    }
    if ground_truth is not None:
        metrics = score_tags(list(result.tags), ground_truth)
        report.update(metrics.as_dict())
        report["per_combo"] = {
            combo: score_tags(result.tags_for(combo), ground_truth).as_dict()
            for combo in COMBO_ORDER
        }
    _dump_json(report, out / "report.json")
    print(f"wrote {out}/tags.jsonl ({len(result.tags)} tags), models.json, report.json")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = Settings(args)
    if not settings.sweep_alphas:
        raise ConfigError("sweep range is empty")
    bundle = load_bundle(settings.require_bundle())
    ground_truth = _load_ground_truth(settings, bundle)
    if ground_truth is None:
        raise ConfigError("sweep needs ground truth (bundle field or --ground-truth)")
    points = alpha_sweep(
        bundle,
        ground_truth,
        settings.sweep_alphas,
        settings.famous,
        settings.stage1,
        settings.stage2,
    )
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    lines = ["alpha,stage,precision,recall"]
    for point in points:
        for combo in COMBO_ORDER:
            report = point.reports[combo]
            lines.append(f"{point.alpha},{combo},{report.precision},{report.recall}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _dump_json(
        {
            "points": [
                {
                    "alpha": p.alpha,
                    "reports": {c: p.reports[c].as_dict() for c in COMBO_ORDER},
                }
                for p in points
            ]
        },
        out / "sweep.json",
    )
    print(f"wrote {out}/sweep.csv ({len(points)} alpha values)")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    settings = Settings(args)
    cfg = settings.synth_config()
    bundle, ground_truth = generate_bundle(cfg)
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out / "bundle.json")
    _dump_json(dict(ground_truth), out / "ground_truth.json")
    print(
        f"wrote {out}/bundle.json ({len(bundle.tracks)} tracks, "
        f"{len(bundle.names)} name occurrences) and ground_truth.json"
    )
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    settings = Settings(args)
    bundle = load_bundle(settings.require_bundle())
    ground_truth = _load_ground_truth(settings, bundle)
    if ground_truth is None:
        raise ConfigError("calibration needs ground truth (bundle field or --ground-truth)")
    thresholds: CalibratedThresholds = calibrate_pipeline(
        bundle, ground_truth, settings.famous, settings.stage1, settings.stage2
    )
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(thresholds.as_dict(), out / "thresholds.json")
    print(f"wrote {out}/thresholds.json: {thresholds.as_dict()}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = Settings(args)
    tags = read_tags_jsonl(args.tags)
    if settings.ground_truth_path:
        doc = _load_json_config(settings.ground_truth_path)
        ground_truth = {str(k): str(v) for k, v in doc.items()}
    elif settings.bundle_path:
        ground_truth = load_bundle(settings.require_bundle()).ground_truth
        if ground_truth is None:
            raise ConfigError("bundle carries no ground truth; pass --ground-truth")
    else:
        raise ConfigError("eval needs --ground-truth or a bundle with ground truth")
    report = score_tags(tags, ground_truth)
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(report.as_dict(), out / "eval_report.json")
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--bundle", help="evidence bundle path")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--ground-truth", dest="ground_truth", help="ground-truth JSON path")
    parser.add_argument("--thresholds", help="thresholds JSON written by 'calibrate'")
    parser.add_argument("--alpha", type=int, help="fame cluster-size threshold")
    parser.add_argument("--tau-face", dest="tau_face", type=float)
    parser.add_argument("--tau-verify", dest="tau_verify", type=float)
    parser.add_argument("--tau-fuse", dest="tau_fuse", type=float)
    parser.add_argument("--tau-qe", dest="tau_qe", type=float)
    parser.add_argument(
        "--stage2-order",
        dest="stage2_order",
        choices=[o.value for o in Stage2Order],
    )
    parser.add_argument("--qe-iterations", dest="qe_iterations", type=int)
    parser.add_argument("--delta-window", dest="delta_window", type=float)
    parser.add_argument("--sweep", help="comma-separated alpha values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facetag",
        description="Tag face-tracks in video archives from precomputed evidence bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full tagging pipeline")
    sweep_p = sub.add_parser("sweep", help="sweep the fame threshold and report curves")
    synth_p = sub.add_parser("synth", help="generate a synthetic evidence bundle")
    calibrate_p = sub.add_parser("calibrate", help="calibrate thresholds on a validation bundle")
    eval_p = sub.add_parser("eval", help="score an existing tags.jsonl against ground truth")

    for p in (run_p, sweep_p, synth_p, calibrate_p, eval_p):
        _add_common_flags(p)
    synth_p.add_argument("--seed", type=int, help="generator seed")
    synth_p.add_argument(
        "--fixture", choices=sorted(_FIXTURES), help="named fixture configuration"
    )
    eval_p.add_argument("--tags", required=True, help="tags.jsonl to score")

    run_p.set_defaults(func=cmd_run)
    sweep_p.set_defaults(func=cmd_sweep)
    synth_p.set_defaults(func=cmd_synth)
    calibrate_p.set_defaults(func=cmd_calibrate)
    eval_p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _print_error(exc)
        return 1
    except FacetagError as exc:
        _print_error(exc)
        return 3
    except OSError as exc:
        _print_error(exc)
        return 2


def _print_error(exc: Exception) -> None:
    print(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        file=sys.stderr,
    )


if __name__ == "__main__":
    sys.exit(main())
