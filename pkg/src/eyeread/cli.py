"""Command-line pipeline: generate | ingest | features | train | predict | evaluate | smoothness | run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .classifier import (
    HEAD_DEFAULTS,
    fit_classifier,
    load_model,
    predict_trials,
    read_predictions_csv,
    save_model,
    write_predictions_csv,
)
from .dataset import (
    Cohort,
    RawCohort,
    SplitSpec,
    build_cohort,
    filter_cohort,
    load_fixation_csv,
    read_split_manifest,
    split_by_subject,
    subjects_from_features,
    write_fixation_csv,
    write_split_manifest,
)
from .evaluation import (
    encoding_smoothness,
    evaluate,
    percentile_radius,
    stage_codes,
    write_report,
    write_smoothness_csv,
)
from .features import feature_matrix, read_feature_csv, write_feature_csv
from .nn import TrainConfig, TrainingDiverged, config_from_dict, config_to_dict
from .sdae import SparseAEConfig
from .synthetic import CohortSpec, generate_cohort
from .types import Diagnosis, Subject

logger = logging.getLogger("eyeread")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_stages() -> List[SparseAEConfig]:
    return [SparseAEConfig(16), SparseAEConfig(4)]


@dataclass
class RunConfig:
    """Everything a run needs; ``seed`` is the only source of randomness.

    Component seeds (generator, split, each training stage) are derived from
    ``seed`` in :meth:`resolved`, so one integer pins the whole run.
    """

    seed: int = 0
    input: Optional[str] = None  # fixation CSV; None means generate
    subjects: Optional[str] = None  # optional subject_id,diagnosis,clinician_score CSV
    generator: CohortSpec = field(default_factory=CohortSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    stages: List[SparseAEConfig] = field(default_factory=_default_stages)
    head: TrainConfig = HEAD_DEFAULTS
    fine_tune: Optional[TrainConfig] = None
    outlier_sd: float = 2.0
    threshold: float = 0.5
    histogram_bins: int = 10
    smoothness_percentile: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not self.stages:
            raise ValueError("at least one autoencoder stage is required")
        if self.outlier_sd <= 0 or self.histogram_bins < 1:
            raise ValueError("outlier_sd must be positive and histogram_bins >= 1")
        if not 0.0 < self.smoothness_percentile < 100.0:
            raise ValueError("smoothness_percentile must lie in (0, 100)")

    def resolved(self) -> "RunConfig":
        a, b, *stage_seeds = np.random.SeedSequence(self.seed).generate_state(3 + len(self.stages))
        return replace(
            self,
            generator=replace(self.generator, seed=int(a)),
            split=replace(self.split, seed=int(b)),
            stages=[replace(s, train=replace(s.train, seed=int(k))) for s, k in zip(self.stages, stage_seeds)],
            head=replace(self.head, seed=int(stage_seeds[-1])),
            fine_tune=None if self.fine_tune is None else replace(self.fine_tune, seed=int(stage_seeds[-1]) + 1),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "input": self.input,
            "subjects": self.subjects,
            "generator": self.generator.to_dict(),
            "split": {"test_controls": self.split.test_controls, "test_ad": self.split.test_ad, "seed": self.split.seed},
            "stages": [s.to_dict() for s in self.stages],
            "head": config_to_dict(self.head),
            "fine_tune": None if self.fine_tune is None else config_to_dict(self.fine_tune),
            "outlier_sd": self.outlier_sd,
            "threshold": self.threshold,
            "histogram_bins": self.histogram_bins,
            "smoothness_percentile": self.smoothness_percentile,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "generator" in doc:
            doc["generator"] = CohortSpec.from_dict(doc["generator"])
        if "split" in doc:
            doc["split"] = SplitSpec(**doc["split"])
        if "stages" in doc:
            doc["stages"] = [SparseAEConfig.from_dict(s) for s in doc["stages"]]
        if "head" in doc:
            doc["head"] = config_from_dict(doc["head"])
        if doc.get("fine_tune") is not None:
            doc["fine_tune"] = config_from_dict(doc["fine_tune"])
        return cls(**doc)

    def hash(self) -> str:
        blob = json.dumps(self.resolved().to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# Subject sidecar -----------------------------------------------------------------

SUBJECT_COLUMNS = ("subject_id", "diagnosis", "clinician_score")


def write_subjects_csv(subjects: Sequence[Subject], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUBJECT_COLUMNS)
        for s in subjects:
            w.writerow([s.subject_id, s.diagnosis.value, "" if s.clinician_score is None else repr(s.clinician_score)])


def read_subjects_csv(path: Path) -> List[Subject]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SUBJECT_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(SUBJECT_COLUMNS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                sid, diag, score = row
                out.append(Subject(sid, Diagnosis(diag), float(score) if score else None))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


# Stages ---------------------------------------------------------------------------

def _load_raw(cfg: RunConfig) -> RawCohort:
    if cfg.input is None:
        return generate_cohort(cfg.generator)
    subjects, trials = load_fixation_csv(cfg.input)
    if cfg.subjects:
        scores = {s.subject_id: s.clinician_score for s in read_subjects_csv(Path(cfg.subjects))}
        subjects = [replace(s, clinician_score=scores.get(s.subject_id)) for s in subjects]
    return RawCohort(subjects, trials)


def _restrict(cohort_trials, ids):
    ids = set(ids)
    return [t for t in cohort_trials if t.subject_id in ids]


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


ARTIFACTS = (
    "fixations.csv", "subjects.csv", "features.csv", "split.txt", "model.json",
    "predictions.csv", "report.json", "report.txt", "histogram.csv", "per_type.csv",
    "smoothness.csv",
)


def run_pipeline(cfg: RunConfig, out_dir: Path) -> int:
    """Full pipeline into ``out_dir``; always leaves a manifest.json behind."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rcfg = cfg.resolved()
    chash = cfg.hash()
    run_info = {"config_hash": chash, "seed": cfg.seed}
    manifest = {"config": cfg.to_dict(), "resolved_config": rcfg.to_dict(), **run_info,
                "status": "running", "artifacts": {}}
    stage = "load"

    def step(name: str) -> None:
        nonlocal stage
        stage = name
        logger.info("stage: %s", name)

    try:
        step("generate" if cfg.input is None else "ingest")
        raw = _load_raw(rcfg)
        write_fixation_csv(raw, out_dir / "fixations.csv")
        write_subjects_csv(raw.subjects, out_dir / "subjects.csv")

        step("features")
        cohort, build = build_cohort(raw)
        filtered, dropped, outliers = filter_cohort(cohort, rcfg.outlier_sd)
        write_feature_csv(filtered.trials, out_dir / "features.csv")
        manifest["cohort"] = {
            "subjects": len(cohort.subjects), "trials": build.n_trials,
            "too_sparse": len(build.too_sparse), "outliers_dropped": len(dropped),
            "outlier_drop_fraction": outliers.total_drop_fraction,
            "trials_after_filter": len(filtered.trials),
        }

        step("split")
        train, test = split_by_subject(filtered, rcfg.split)
        write_split_manifest(train, test, rcfg.split, out_dir / "split.txt", chash)

        step("train")
        x = feature_matrix(train.trials)
        y = [t.label for t in train.trials]
        model = fit_classifier(x, y, rcfg.stages, rcfg.head, rcfg.fine_tune)
        save_model(model, out_dir / "model.json", run_info)

        step("predict")
        preds = predict_trials(model, test.trials)
        write_predictions_csv(preds, out_dir / "predictions.csv")

        step("smoothness")
        levels = stage_codes(model, test.trials)
        smooth = encoding_smoothness(
            model, test.trials,
            percentile_radius(levels[0], rcfg.smoothness_percentile),
            percentile_radius(levels[-1], rcfg.smoothness_percentile),
        )
        write_smoothness_csv(model, test.trials, out_dir / "smoothness.csv")

        step("evaluate")
        report = evaluate(preds, test.subjects, rcfg.threshold, rcfg.histogram_bins, smooth, run_info)
        write_report(report, out_dir)
        manifest["status"] = "ok"
        manifest["summary"] = {
            "test_accuracy": report.confusion.overall_acc,
            "vote_accuracy": report.vote_accuracy,
        }
        code = EXIT_OK
    except TrainingDiverged as exc:
        manifest.update(status="failed", stage=stage, error=str(exc))
        code = EXIT_DIVERGED
    except (ValueError, OSError) as exc:
        manifest.update(status="failed", stage=stage, error=f"{type(exc).__name__}: {exc}")
        code = EXIT_DATA
    for name in ARTIFACTS:
        path = out_dir / name
        if path.exists():
            manifest["artifacts"][name] = sha256_file(path)
    if code != EXIT_OK:
        manifest["partial"] = True
        logger.error("stage %s failed: %s", stage, manifest["error"])
    _write_json(out_dir / "manifest.json", manifest)
    return code


# Argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _hidden(text: str) -> List[int]:
    try:
        units = [int(u) for u in text.split(",") if u.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not units or any(u < 1 for u in units):
        raise argparse.ArgumentTypeError("hidden sizes must be positive integers")
    return units


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="global seed (overrides the config file)")
    p.add_argument("--hidden", type=_hidden, help="stage widths, e.g. 16,4")
    p.add_argument("--sparsity", type=float, help="sparsity target for every stage")
    p.add_argument("--corruption", type=float, help="corruption fraction for every stage")
    p.add_argument("--threshold", type=float, help="P(AD) decision threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eyeread", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic fixation cohort")
    _config_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("ingest", help="validate a fixation CSV and summarize it")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, help="write ingest.json here")

    p = sub.add_parser("features", help="fixation CSV -> outlier-filtered feature CSV")
    _config_args(p)
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="split subjects and train the classifier")
    _config_args(p)
    p.add_argument("features", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("predict", help="P(AD) for feature rows")
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    p.add_argument("--split", type=Path, help="restrict to the test side of this split file")
    p.add_argument("--out", type=Path, required=True, help="predictions CSV path")

    p = sub.add_parser("evaluate", help="report on a predictions CSV")
    _config_args(p)
    p.add_argument("predictions", type=Path)
    p.add_argument("--subjects", type=Path, help="subject CSV with clinician scores")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("smoothness", help="encoding-smoothness report and export")
    _config_args(p)
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    p.add_argument("--split", type=Path, help="restrict to the test side of this split file")
    p.add_argument("--input-radius", type=float)
    p.add_argument("--code-radius", type=float)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("run", help="full pipeline")
    _config_args(p)
    p.add_argument("--input", type=Path, help="fixation CSV (default: generate)")
    p.add_argument("--subjects", type=Path, help="subject CSV with clinician scores")
    p.add_argument("--out", type=Path, required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    doc = {}
    if getattr(args, "config", None) is not None:
        doc = json.loads(Path(args.config).read_text())
    cfg = RunConfig.from_dict(doc)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "hidden", None):
        template = cfg.stages[0]
        cfg = replace(cfg, stages=[replace(template, hidden_units=h) for h in args.hidden])
    if getattr(args, "sparsity", None) is not None:
        cfg = replace(cfg, stages=[replace(s, sparsity_target=args.sparsity) for s in cfg.stages])
    if getattr(args, "corruption", None) is not None:
        cfg = replace(cfg, stages=[replace(s, corruption_fraction=args.corruption) for s in cfg.stages])
    if getattr(args, "threshold", None) is not None:
        cfg = replace(cfg, threshold=args.threshold)
    if getattr(args, "input", None) is not None and args.command == "run":
        cfg = replace(cfg, input=str(args.input))
    if getattr(args, "subjects", None) is not None and args.command == "run":
        cfg = replace(cfg, subjects=str(args.subjects))
    return cfg


def _test_side(trials, split: Optional[Path]):
    if split is None:
        return trials
    return _restrict(trials, read_split_manifest(split)["test"])


def _cmd_generate(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    raw = generate_cohort(cfg.resolved().generator)
    write_fixation_csv(raw, args.out / "fixations.csv")
    write_subjects_csv(raw.subjects, args.out / "subjects.csv")
    print(f"{len(raw.subjects)} subjects, {len(raw.trials)} trials -> {args.out}")


def _cmd_ingest(args, cfg) -> None:
    subjects, trials = load_fixation_csv(args.input)
    cohort, build = build_cohort(RawCohort(subjects, trials))
    summary = {
        "subjects": len(subjects),
        "control": sum(s.diagnosis is Diagnosis.CONTROL for s in subjects),
        "ad": sum(s.diagnosis is Diagnosis.AD for s in subjects),
        "trials": len(trials),
        "fixations": sum(len(t.fixations) for t in trials),
        "too_sparse": len(build.too_sparse),
    }
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "ingest.json", summary)
    print(json.dumps(summary))


def _cmd_features(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    subjects, trials = load_fixation_csv(args.input)
    cohort, build = build_cohort(RawCohort(subjects, trials))
    filtered, dropped, report = filter_cohort(cohort, cfg.outlier_sd)
    write_feature_csv(filtered.trials, args.out / "features.csv")
    _write_json(args.out / "outliers.json", {
        "n_sd": cfg.outlier_sd, "too_sparse": len(build.too_sparse),
        "n_in": report.n_in, "n_dropped": report.n_dropped,
        "drop_fraction": report.total_drop_fraction,
    })
    print(f"{len(filtered.trials)} trials kept, {len(dropped)} dropped ({100 * report.total_drop_fraction:.1f}%)")


def _cmd_train(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    rcfg = cfg.resolved()
    trials = read_feature_csv(args.features)
    cohort = Cohort(subjects_from_features(trials), trials)
    train, test = split_by_subject(cohort, rcfg.split)
    write_split_manifest(train, test, rcfg.split, args.out / "split.txt", cfg.hash())
    model = fit_classifier(
        feature_matrix(train.trials), [t.label for t in train.trials],
        rcfg.stages, rcfg.head, rcfg.fine_tune,
    )
    save_model(model, args.out / "model.json", {"config_hash": cfg.hash(), "seed": cfg.seed})
    print(f"trained on {len(train.trials)} trials from {len(train.subjects)} subjects -> {args.out}")


def _cmd_predict(args, cfg) -> None:
    model = load_model(args.model)
    trials = _test_side(read_feature_csv(args.features), args.split)
    preds = predict_trials(model, trials)
    write_predictions_csv(preds, args.out)
    print(f"{len(preds)} predictions -> {args.out}")


def _cmd_evaluate(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    preds = read_predictions_csv(args.predictions)
    subjects = read_subjects_csv(args.subjects) if args.subjects else []
    report = evaluate(preds, subjects, cfg.threshold, cfg.histogram_bins,
                      meta={"config_hash": cfg.hash(), "seed": cfg.seed})
    write_report(report, args.out)
    sys.stdout.write(report.summary())


def _cmd_smoothness(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    trials = _test_side(read_feature_csv(args.features), args.split)
    levels = stage_codes(model, trials)
    r_in = args.input_radius or percentile_radius(levels[0], cfg.smoothness_percentile)
    r_code = args.code_radius or percentile_radius(levels[-1], cfg.smoothness_percentile)
    report = encoding_smoothness(model, trials, r_in, r_code)
    write_smoothness_csv(model, trials, args.out / "smoothness.csv")
    _write_json(args.out / "smoothness.json", report.to_dict())
    print(json.dumps(report.to_dict()))


def _cmd_run(args, cfg: RunConfig) -> int:
    code = run_pipeline(cfg, args.out)
    manifest = json.loads((args.out / "manifest.json").read_text())
    if code == EXIT_OK:
        print(f"test accuracy {manifest['summary']['test_accuracy']:.3f}, "
              f"majority vote {manifest['summary']['vote_accuracy']:.3f} -> {args.out}")
    else:
        print(f"failed at stage {manifest['stage']}: {manifest['error']}", file=sys.stderr)
    return code


COMMANDS: Dict[str, Callable] = {
    "generate": _cmd_generate, "ingest": _cmd_ingest, "features": _cmd_features,
    "train": _cmd_train, "predict": _cmd_predict, "evaluate": _cmd_evaluate,
    "smoothness": _cmd_smoothness, "run": _cmd_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = config_from_args(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, OSError) as exc:
        print(f"eyeread: bad configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        result = COMMANDS[args.command](args, cfg)
    except TrainingDiverged as exc:
        print(f"eyeread {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError) as exc:
        print(f"eyeread {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if result is None else int(result)


if __name__ == "__main__":
    sys.exit(main())
