"""Evaluation battery: confusion matrix, histograms, voting, severity marker, smoothness.

Confusion matrices are indexed ``[expected][predicted]`` with 0 = Control and
1 = AD. Standard deviations here are population SDs (divide by n).
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist

from .classifier import DeepClassifier, Prediction, classify_at_threshold
from .features import FEATURE_NAMES, TrialFeatureVector, feature_matrix
from .types import Subject

CLASS_NAMES = ("Control", "AD")


@dataclass(frozen=True)
class ConfusionResult:
    matrix: Tuple[Tuple[int, int], Tuple[int, int]]  # [expected][predicted]
    overall_acc: float
    control_acc: Optional[float]  # None when the class is absent
    ad_acc: Optional[float]

    @property
    def n(self) -> int:
        return sum(map(sum, self.matrix))

    def to_dict(self) -> dict:
        return {
            "axes": {"rows": "expected", "columns": "predicted"},
            "labels": list(CLASS_NAMES),
            "matrix": [list(r) for r in self.matrix],
            "overall_acc": self.overall_acc,
            "control_acc": self.control_acc,
            "ad_acc": self.ad_acc,
        }


def confusion_and_accuracy(
    preds: Sequence[Tuple[float, int]], threshold: float = 0.5
) -> ConfusionResult:
    """Threshold each (p_ad, label) pair and tabulate."""
    if len(preds) == 0:
        raise ValueError("no predictions to evaluate")
    m = np.zeros((2, 2), dtype=int)
    for p, label in preds:
        m[int(label), classify_at_threshold(p, threshold)] += 1
    rows = m.sum(axis=1)
    per_class = [float(m[k, k] / rows[k]) if rows[k] else None for k in (0, 1)]
    return ConfusionResult(
        matrix=((int(m[0, 0]), int(m[0, 1])), (int(m[1, 0]), int(m[1, 1]))),
        overall_acc=float(np.trace(m) / m.sum()),
        control_acc=per_class[0],
        ad_acc=per_class[1],
    )


@dataclass(frozen=True)
class Histogram:
    edges: Tuple[float, ...]
    counts: Dict[int, Tuple[int, ...]]  # true label -> per-bin counts


def histogram(preds: Sequence[Tuple[float, int]], bins: int = 10) -> Histogram:
    """Equal-width bins over [0, 1]; the last bin is closed on the right."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = {}
    for label in (0, 1):
        ps = [p for p, lab in preds if lab == label]
        counts[label] = tuple(int(c) for c in np.histogram(ps, bins=edges)[0])
    return Histogram(tuple(float(e) for e in edges), counts)


@dataclass(frozen=True)
class SubjectVote:
    subject_id: str
    label: int
    n_trials: int
    ad_votes: int
    fraction: float
    vote: int

    @property
    def correct(self) -> bool:
        return self.vote == self.label


def majority_vote(
    groups: Mapping[str, Sequence[Tuple[float, int]]], threshold: float = 0.5
) -> List[SubjectVote]:
    """Label each subject by the majority of its thresholded trials; a tie goes to AD."""
    out = []
    for sid in sorted(groups):
        trials = groups[sid]
        if not trials:
            raise ValueError(f"subject {sid} has no evaluated trials")
        labels = {lab for _, lab in trials}
        if len(labels) != 1:
            raise ValueError(f"subject {sid} has trials with conflicting labels")
        ad = sum(classify_at_threshold(p, threshold) for p, _ in trials)
        n = len(trials)
        out.append(SubjectVote(sid, labels.pop(), n, ad, ad / n, int(2 * ad >= n)))
    return out


@dataclass(frozen=True)
class SeverityRow:
    subject_id: str
    n_trials: int
    mean_p: float
    sd_p: float
    clinician_score: Optional[float] = None
    difference: Optional[float] = None


@dataclass(frozen=True)
class SeverityResult:
    rows: List[SeverityRow]
    mean_difference: Optional[float]
    sd_difference: Optional[float]


def _summarize_differences(rows: Sequence[SeverityRow]) -> Tuple[Optional[float], Optional[float]]:
    diffs = np.array([r.difference for r in rows if r.difference is not None])
    if diffs.size == 0:
        return None, None
    return float(diffs.mean()), float(diffs.std())


def severity_marker(
    groups: Mapping[str, Sequence[float]],
    clinician_scores: Mapping[str, Optional[float]],
) -> SeverityResult:
    """Per-subject mean/SD of p_ad against the clinician score, when one exists."""
    rows = []
    for sid in sorted(groups):
        ps = np.asarray(groups[sid], dtype=float)
        if ps.size == 0:
            raise ValueError(f"subject {sid} has no evaluated trials")
        score = clinician_scores.get(sid)
        if score is not None and not 0.0 <= score <= 1.0:
            raise ValueError(f"clinician score for {sid} outside [0, 1]: {score}")
        mean = float(ps.mean())
        rows.append(SeverityRow(
            sid, int(ps.size), mean, float(ps.std()), score,
            None if score is None else abs(mean - score),
        ))
    return SeverityResult(rows, *_summarize_differences(rows))


def severity_from_pairs(pairs: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Mean and SD of |mean - score| over already-aggregated (mean, score) rows."""
    rows = [SeverityRow(str(i), 1, m, 0.0, s, abs(m - s)) for i, (m, s) in enumerate(pairs)]
    mean, sd = _summarize_differences(rows)
    if mean is None:
        raise ValueError("no rows")
    return mean, sd


def misclassification_by_type(
    preds: Sequence[Tuple[str, float, int]], threshold: float = 0.5
) -> Dict[Tuple[str, int], Tuple[int, int]]:
    """(sentence_type, true label) -> (total, misclassified); only populated cells appear."""
    cells: Dict[Tuple[str, int], List[int]] = {}
    for stype, p, label in preds:
        if stype is None or stype == "":
            raise ValueError("every prediction needs a sentence type")
        cell = cells.setdefault((stype, int(label)), [0, 0])
        cell[0] += 1
        cell[1] += int(classify_at_threshold(p, threshold) != label)
    return {k: (v[0], v[1]) for k, v in sorted(cells.items())}


# Encoding smoothness -----------------------------------------------------------

@dataclass(frozen=True)
class SmoothnessReport:
    input_radius: float
    code_radius: float
    n_pairs: int
    max_code_distance: Optional[float]
    violation_fraction: Optional[float]

    @property
    def no_pairs(self) -> bool:
        return self.n_pairs == 0

    def to_dict(self) -> dict:
        return {**asdict(self), "no_pairs": self.no_pairs}


def percentile_radius(x: np.ndarray, q: float) -> float:
    """q-th percentile of pairwise Euclidean distances between rows."""
    d = pdist(np.asarray(x, dtype=float))
    if d.size == 0:
        raise ValueError("need at least two rows")
    return float(np.percentile(d, q))


def stage_codes(model: DeepClassifier, trials: Sequence[TrialFeatureVector]) -> List[np.ndarray]:
    """[standardized inputs, stage-1 code, stage-2 code, ...] for the given trials."""
    x = model.standardizer.transform(feature_matrix(trials))
    return [x] + model.stack.encode_all(x)


def encoding_smoothness(
    model: DeepClassifier,
    trials: Sequence[TrialFeatureVector],
    input_radius: float,
    code_radius: float,
) -> SmoothnessReport:
    """Do inputs that are close (standardized, Euclidean) stay close after encoding?"""
    if len(trials) < 2:
        raise ValueError("encoding_smoothness needs at least two trials")
    if not (input_radius > 0 and code_radius > 0):
        raise ValueError("radii must be positive")
    levels = stage_codes(model, trials)
    din = pdist(levels[0])
    close = din <= input_radius
    n_pairs = int(close.sum())
    if n_pairs == 0:
        return SmoothnessReport(input_radius, code_radius, 0, None, None)
    dcode = pdist(levels[-1])[close]
    return SmoothnessReport(
        input_radius, code_radius, n_pairs,
        float(dcode.max()), float(np.mean(dcode > code_radius)),
    )


def smoothness_columns(model: DeepClassifier) -> List[str]:
    cols = [f"in_{n}" for n in FEATURE_NAMES]
    for s, width in enumerate(model.stack.dims[1:], start=1):
        cols += [f"s{s}_u{j}" for j in range(width)]
    return cols


def write_smoothness_csv(
    model: DeepClassifier, trials: Sequence[TrialFeatureVector], path: Union[str, Path]
) -> None:
    """One row per trial: identity, standardized inputs, then every stage's code."""
    values = np.hstack(stage_codes(model, trials))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "trial_id", "label"] + smoothness_columns(model))
        for t, row in zip(trials, values):
            w.writerow([t.subject_id, t.trial_id, t.label] + [repr(float(v)) for v in row])


# Full report ----------------------------------------------------------------------

@dataclass
class EvaluationReport:
    threshold: float
    confusion: ConfusionResult
    histogram: Histogram
    per_type: Dict[Tuple[str, int], Tuple[int, int]]
    votes: List[SubjectVote]
    severity: SeverityResult
    smoothness: Optional[SmoothnessReport] = None
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def vote_accuracy(self) -> float:
        return sum(v.correct for v in self.votes) / len(self.votes)

    def subject_rows(self) -> List[dict]:
        sev = {r.subject_id: r for r in self.severity.rows}
        return [
            {
                "subject_id": v.subject_id, "label": v.label, "n_trials": v.n_trials,
                "mean_p": sev[v.subject_id].mean_p, "sd_p": sev[v.subject_id].sd_p,
                "ad_fraction": v.fraction, "vote": v.vote,
                "clinician_score": sev[v.subject_id].clinician_score,
                "difference": sev[v.subject_id].difference,
            }
            for v in self.votes
        ]

    def to_dict(self) -> dict:
        return {
            **self.meta,
            "threshold": self.threshold,
            "n_trials": self.confusion.n,
            "confusion": self.confusion.to_dict(),
            "histogram": {
                "edges": list(self.histogram.edges),
                "Control": list(self.histogram.counts[0]),
                "AD": list(self.histogram.counts[1]),
            },
            "per_type": [
                {"sentence_type": t, "label": lab, "total": n, "misclassified": k}
                for (t, lab), (n, k) in self.per_type.items()
            ],
            "subjects": self.subject_rows(),
            "vote_accuracy": self.vote_accuracy,
            "severity": {
                "mean_difference": self.severity.mean_difference,
                "sd_difference": self.severity.sd_difference,
            },
            "smoothness": None if self.smoothness is None else self.smoothness.to_dict(),
        }

    def summary(self) -> str:
        c = self.confusion

        def pct(v):
            return "n/a" if v is None else f"{100 * v:.1f}%"

        (tn, fp), (fn, tp) = c.matrix
        lines = [f"{k}: {v}" for k, v in self.meta.items()]
        lines += [
            f"trials evaluated: {c.n} (threshold {self.threshold})",
            "confusion [expected x predicted]:",
            f"  Control -> Control {tn:5d}   Control -> AD {fp:5d}",
            f"  AD      -> Control {fn:5d}   AD      -> AD {tp:5d}",
            f"accuracy: overall {pct(c.overall_acc)}, Control {pct(c.control_acc)}, AD {pct(c.ad_acc)}",
            f"misclassified trials: {fp + fn}",
            f"majority vote: {sum(v.correct for v in self.votes)}/{len(self.votes)} subjects correct",
            "misclassified by sentence type:",
        ]
        for (t, lab), (n, k) in self.per_type.items():
            lines.append(f"  {t:8s} {CLASS_NAMES[lab]:8s} {k:4d} / {n}")
        lines.append("subjects (mean p_ad, sd, AD fraction, vote, label, score, |diff|):")
        for r in self.subject_rows():
            score = "" if r["clinician_score"] is None else f"{r['clinician_score']:.2f}"
            diff = "" if r["difference"] is None else f"{r['difference']:.2f}"
            lines.append(
                f"  {r['subject_id']:8s} {r['mean_p']:.2f} {r['sd_p']:.2f} {r['ad_fraction']:.2f} "
                f"{r['vote']} {r['label']} {score:>5s} {diff:>5s}"
            )
        if self.severity.mean_difference is not None:
            lines.append(
                f"severity difference: mean {self.severity.mean_difference:.2f} "
                f"(SD {self.severity.sd_difference:.2f})"
            )
        if self.smoothness is not None:
            s = self.smoothness
            if s.no_pairs:
                lines.append(f"smoothness: no input pairs within radius {s.input_radius:.3f}")
            else:
                lines.append(
                    f"smoothness: {s.n_pairs} pairs within {s.input_radius:.3f}, max code distance "
                    f"{s.max_code_distance:.3f}, {100 * s.violation_fraction:.1f}% beyond {s.code_radius:.3f}"
                )
        return "\n".join(lines) + "\n"


def group_by_subject(preds: Iterable[Prediction]) -> Dict[str, List[Prediction]]:
    groups: Dict[str, List[Prediction]] = defaultdict(list)
    for p in preds:
        groups[p.subject_id].append(p)
    return dict(groups)


def evaluate(
    preds: Sequence[Prediction],
    subjects: Sequence[Subject] = (),
    threshold: float = 0.5,
    bins: int = 10,
    smoothness: Optional[SmoothnessReport] = None,
    meta: Optional[Dict[str, object]] = None,
) -> EvaluationReport:
    pairs = [(p.p_ad, p.label) for p in preds]
    groups = group_by_subject(preds)
    scores = {s.subject_id: s.clinician_score for s in subjects}
    return EvaluationReport(
        threshold=threshold,
        confusion=confusion_and_accuracy(pairs, threshold),
        histogram=histogram(pairs, bins),
        per_type=misclassification_by_type([(p.sentence_type, p.p_ad, p.label) for p in preds], threshold),
        votes=majority_vote({k: [(p.p_ad, p.label) for p in v] for k, v in groups.items()}, threshold),
        severity=severity_marker({k: [p.p_ad for p in v] for k, v in groups.items()}, scores),
        smoothness=smoothness,
        meta=dict(meta or {}),
    )


def write_report(report: EvaluationReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """report.json, report.txt, histogram.csv and per_type.csv under ``out_dir``."""
    out = Path(out_dir)
    paths = {name: out / name for name in ("report.json", "report.txt", "histogram.csv", "per_type.csv")}
    paths["report.json"].write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    paths["report.txt"].write_text(report.summary())
    h = report.histogram
    with open(paths["histogram.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "Control", "AD"])
        for i in range(len(h.edges) - 1):
            w.writerow([h.edges[i], h.edges[i + 1], h.counts[0][i], h.counts[1][i]])
    with open(paths["per_type.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sentence_type", "label", "total", "misclassified"])
        for (t, lab), (n, k) in report.per_type.items():
            w.writerow([t, lab, n, k])
    return paths
