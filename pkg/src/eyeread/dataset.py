"""Fixation CSV ingestion, feature cohorts, 2-SD outlier dropout and subject-level splits."""
from __future__ import annotations

import csv
import enum
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .features import (
    FEATURE_NAMES,
    TrialFeatureVector,
    TrialTooSparse,
    extract_trial_features,
    feature_matrix,
)
from .preprocess import classify_fixations, clean_fixations
from .types import Diagnosis, Fixation, RawTrial, SentenceMeta, SentenceType, Subject

logger = logging.getLogger(__name__)

FIXATION_COLUMNS = (
    "subject_id", "diagnosis", "trial_id", "sentence_id", "sentence_type",
    "word_count", "seq", "word_index", "char_position", "duration_ms", "blink",
)


class Provenance(enum.Enum):
    INGESTED = "Ingested"
    SYNTHETIC = "Synthetic"


class FixationCsvError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass
class RawCohort:
    """Subjects with their uncleaned trials."""

    subjects: List[Subject]
    trials: List[RawTrial]
    provenance: Provenance = Provenance.INGESTED


@dataclass
class Cohort:
    subjects: List[Subject]
    trials: List[TrialFeatureVector]
    provenance: Provenance = Provenance.INGESTED

    def __post_init__(self):
        ids = {s.subject_id for s in self.subjects}
        if len(ids) != len(self.subjects):
            raise ValueError("duplicate subject ids in cohort")
        with_trials = {t.subject_id for t in self.trials}
        unknown = with_trials - ids
        if unknown:
            raise ValueError(f"trials reference unknown subjects: {sorted(unknown)}")
        empty = ids - with_trials
        if empty:
            raise ValueError(f"subjects without trials: {sorted(empty)}")

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(subject_id)


# CSV ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_fixation_csv(cohort: RawCohort, path: Union[str, Path]) -> None:
    diagnosis = {s.subject_id: s.diagnosis for s in cohort.subjects}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIXATION_COLUMNS)
        for trial in cohort.trials:
            meta = trial.sentence
            for f in trial.fixations:
                writer.writerow([
                    trial.subject_id, diagnosis[trial.subject_id].value, trial.trial_id,
                    meta.sentence_id, meta.sentence_type.value, meta.word_count,
                    f.seq, f.word_index, _fmt(f.char_position), _fmt(f.duration_ms),
                    int(f.is_blink_or_loss),
                ])


def load_fixation_csv(path: Union[str, Path]) -> Tuple[List[Subject], List[RawTrial]]:
    """Parse the fixation CSV; rows are grouped per (subject_id, trial_id)."""
    subjects: Dict[str, Diagnosis] = OrderedDict()
    groups: Dict[Tuple[str, str], dict] = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FixationCsvError(path, 1, "empty file") from None
        if tuple(h.strip() for h in header) != FIXATION_COLUMNS:
            raise FixationCsvError(path, 1, f"header must be {','.join(FIXATION_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FIXATION_COLUMNS):
                raise FixationCsvError(path, lineno, f"expected {len(FIXATION_COLUMNS)} fields, got {len(row)}")
            rec = dict(zip(FIXATION_COLUMNS, (v.strip() for v in row)))
            try:
                diag = Diagnosis(rec["diagnosis"])
                stype = SentenceType(rec["sentence_type"])
                word_count = int(rec["word_count"])
                blink = rec["blink"]
                if blink not in ("0", "1"):
                    raise ValueError(f"blink must be 0 or 1, got {blink!r}")
                fix = Fixation(
                    trial_id=rec["trial_id"],
                    word_index=int(rec["word_index"]),
                    char_position=float(rec["char_position"]),
                    duration_ms=float(rec["duration_ms"]),
                    seq=int(rec["seq"]),
                    is_blink_or_loss=blink == "1",
                )
            except ValueError as exc:
                raise FixationCsvError(path, lineno, str(exc)) from exc
            sid = rec["subject_id"]
            if sid in subjects and subjects[sid] is not diag:
                raise FixationCsvError(
                    path, lineno,
                    f"subject {sid} has inconsistent diagnosis "
                    f"({subjects[sid].value} then {diag.value})",
                )
            subjects[sid] = diag
            key = (sid, rec["trial_id"])
            group = groups.setdefault(key, {
                "meta": (rec["sentence_id"], word_count, stype), "fixations": [], "line": lineno,
            })
            if group["meta"] != (rec["sentence_id"], word_count, stype):
                raise FixationCsvError(path, lineno, f"trial {key} changes sentence metadata")
            group["fixations"].append(fix)

    trials = []
    for (sid, tid), group in groups.items():
        sentence_id, word_count, stype = group["meta"]
        try:
            trials.append(RawTrial(
                subject_id=sid, trial_id=tid,
                sentence=SentenceMeta(sentence_id, word_count, stype),
                fixations=tuple(group["fixations"]),
            ))
        except ValueError as exc:
            raise FixationCsvError(path, group["line"], str(exc)) from exc
    return [Subject(sid, d) for sid, d in subjects.items()], trials


# Features ------------------------------------------------------------------------

@dataclass
class BuildReport:
    n_trials: int = 0
    too_sparse: List[Tuple[str, str]] = field(default_factory=list)


def build_cohort(raw: RawCohort) -> Tuple[Cohort, BuildReport]:
    """Clean, classify and extract features for every trial.

    Trials left with fewer than two fixations are skipped and listed in the
    report; subjects left without any trial are removed.
    """
    labels = {s.subject_id: s.label for s in raw.subjects}
    report = BuildReport(n_trials=len(raw.trials))
    vectors = []
    for trial in raw.trials:
        cleaned = clean_fixations(trial.fixations, trial.sentence)
        classified = classify_fixations(
            cleaned, trial.sentence, subject_id=trial.subject_id, trial_id=trial.trial_id
        )
        try:
            vectors.append(extract_trial_features(classified, labels[trial.subject_id]))
        except TrialTooSparse:
            report.too_sparse.append((trial.subject_id, trial.trial_id))
    if report.too_sparse:
        logger.info("skipped %d trial(s) with < 2 fixations", len(report.too_sparse))
    present = {v.subject_id for v in vectors}
    subjects = [s for s in raw.subjects if s.subject_id in present]
    return Cohort(subjects, vectors, raw.provenance), report


# Outliers ------------------------------------------------------------------------

@dataclass
class OutlierReport:
    n_in: Dict[int, int]
    n_dropped: Dict[int, int]
    mean: Dict[int, List[float]]
    sd: Dict[int, List[float]]

    def drop_fraction(self, label: int) -> float:
        return self.n_dropped[label] / self.n_in[label]

    @property
    def total_drop_fraction(self) -> float:
        return sum(self.n_dropped.values()) / sum(self.n_in.values())


def outlier_mask(x: np.ndarray, n_sd: float = 2.0) -> np.ndarray:
    """True for rows with any feature further than ``n_sd`` sample SDs from the column mean."""
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    return np.any(np.abs(x - mean) > n_sd * sd, axis=1)


def filter_outliers(
    trials: Sequence[TrialFeatureVector], n_sd: float = 2.0
) -> Tuple[List[TrialFeatureVector], List[TrialFeatureVector], OutlierReport]:
    """Single-pass dropout of trials deviating > n_sd group SDs on any feature.

    Control and AD trials are screened separately against their own group
    statistics. Input order is preserved in both outputs.
    """
    trials = list(trials)
    labels = np.array([t.label for t in trials], dtype=int)
    x = feature_matrix(trials)
    drop = np.zeros(len(trials), dtype=bool)
    report = OutlierReport({}, {}, {}, {})
    for label in (0, 1):
        idx = np.flatnonzero(labels == label)
        if idx.size < 2:
            raise ValueError(f"label group {label} has {idx.size} trial(s); need >= 2")
        group = x[idx]
        drop[idx] = outlier_mask(group, n_sd)
        report.n_in[label] = int(idx.size)
        report.n_dropped[label] = int(drop[idx].sum())
        report.mean[label] = group.mean(axis=0).tolist()
        report.sd[label] = group.std(axis=0, ddof=1).tolist()
    kept = [t for t, d in zip(trials, drop) if not d]
    dropped = [t for t, d in zip(trials, drop) if d]
    return kept, dropped, report


def filter_cohort(cohort: Cohort, n_sd: float = 2.0) -> Tuple[Cohort, List[TrialFeatureVector], OutlierReport]:
    kept, dropped, report = filter_outliers(cohort.trials, n_sd)
    present = {t.subject_id for t in kept}
    subjects = [s for s in cohort.subjects if s.subject_id in present]
    return Cohort(subjects, kept, cohort.provenance), dropped, report


# Splits ------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    test_controls: int = 4
    test_ad: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.test_controls < 1 or self.test_ad < 1:
            raise ValueError("test counts must be >= 1")


def split_by_subject(cohort: Cohort, spec: SplitSpec) -> Tuple[Cohort, Cohort]:
    """Draw test subjects per diagnosis without replacement; all of a subject's trials follow it."""
    rng = np.random.default_rng(spec.seed)
    test_ids = set()
    for diagnosis, n_test in ((Diagnosis.CONTROL, spec.test_controls), (Diagnosis.AD, spec.test_ad)):
        pool = sorted(s.subject_id for s in cohort.subjects if s.diagnosis is diagnosis)
        if n_test > len(pool):
            raise ValueError(
                f"asked for {n_test} {diagnosis.value} test subjects, only {len(pool)} available"
            )
        picked = rng.choice(len(pool), size=n_test, replace=False)
        test_ids.update(pool[i] for i in picked)

    def side(is_test: bool) -> Cohort:
        return Cohort(
            [s for s in cohort.subjects if (s.subject_id in test_ids) == is_test],
            [t for t in cohort.trials if (t.subject_id in test_ids) == is_test],
            cohort.provenance,
        )

    return side(False), side(True)


def write_split_manifest(
    train: Cohort, test: Cohort, spec: SplitSpec, path: Union[str, Path], config_hash: str = ""
) -> None:
    lines = [f"seed {spec.seed}"]
    if config_hash:
        lines.append(f"config_hash {config_hash}")
    lines.append("[train]")
    lines += sorted(s.subject_id for s in train.subjects)
    lines.append("[test]")
    lines += sorted(s.subject_id for s in test.subjects)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_manifest(path: Union[str, Path]) -> Dict[str, List[str]]:
    sides: Dict[str, List[str]] = {"train": [], "test": []}
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line in ("[train]", "[test]"):
            current = line[1:-1]
        elif line and current is not None:
            sides[current].append(line)
    return sides


def subjects_from_features(trials: Iterable[TrialFeatureVector]) -> List[Subject]:
    """Subjects implied by feature rows (diagnosis from label), in first-seen order."""
    seen: Dict[str, int] = OrderedDict()
    for t in trials:
        if seen.setdefault(t.subject_id, t.label) != t.label:
            raise ValueError(f"subject {t.subject_id} has rows with both labels")
    return [Subject(sid, Diagnosis.AD if lab else Diagnosis.CONTROL) for sid, lab in seen.items()]
