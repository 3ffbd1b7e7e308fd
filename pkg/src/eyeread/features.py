"""Trial-wise reading descriptors and z-score standardization."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from .preprocess import ClassifiedTrial, saccade_amplitudes
from .types import FixationClass, SentenceType

FEATURE_NAMES = (
    "nw", "gaze", "sd_gaze", "as", "sd_as", "ntf", "ntm",
    "dfp", "sd_dfp", "fpp", "rf", "nfu", "dfu", "sd_dfu",
)
IDENTITY_NAMES = ("subject_id", "trial_id", "sentence_type", "label")
N_FEATURES = len(FEATURE_NAMES)
_COUNT_FEATURES = {"nw", "ntf", "ntm", "fpp", "rf", "nfu"}


class TrialTooSparse(ValueError):
    """A trial kept fewer than two fixations after cleaning."""


@dataclass(frozen=True)
class TrialFeatureVector:
    nw: int
    gaze: float
    sd_gaze: float
    as_: float
    sd_as: float
    ntf: int
    ntm: int
    dfp: float
    sd_dfp: float
    fpp: int
    rf: int
    nfu: int
    dfu: float
    sd_dfu: float
    subject_id: str = ""
    trial_id: str = ""
    sentence_type: SentenceType = SentenceType.LOW
    label: int = 0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        values = self.values()
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError(f"features must be finite and non-negative: {values}")
        if self.ntf != self.fpp + self.ntm + self.rf + self.nfu:
            raise ValueError(
                f"ntf={self.ntf} != fpp+ntm+rf+nfu="
                f"{self.fpp + self.ntm + self.rf + self.nfu}"
            )

    def values(self) -> np.ndarray:
        """Model inputs in table order; identity fields excluded."""
        return np.array([getattr(self, _attr(n)) for n in FEATURE_NAMES], dtype=float)


def _attr(name: str) -> str:
    return "as_" if name == "as" else name


def _mean_sd(values: Sequence[float]):
    """Mean and sample SD; empty -> (0, 0), single value -> SD 0."""
    if len(values) == 0:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def extract_trial_features(trial: ClassifiedTrial, label: int = 0) -> TrialFeatureVector:
    if trial.n_fixations < 2:
        raise TrialTooSparse(
            f"trial {trial.trial_id} of {trial.subject_id!r} has "
            f"{trial.n_fixations} fixation(s) after cleaning"
        )
    per_word: Dict[int, float] = defaultdict(float)
    for f, _ in trial.fixations:
        per_word[f.word_index] += f.duration_ms
    gaze, sd_gaze = _mean_sd(list(per_word.values()))
    as_, sd_as = _mean_sd(saccade_amplitudes(trial))
    dfp, sd_dfp = _mean_sd(trial.durations(FixationClass.FIRST_PASS))
    dfu, sd_dfu = _mean_sd(trial.durations(FixationClass.UNIQUE))
    counts = trial.class_counts()
    return TrialFeatureVector(
        nw=trial.sentence.word_count,
        gaze=gaze, sd_gaze=sd_gaze,
        as_=as_, sd_as=sd_as,
        ntf=trial.n_fixations,
        ntm=counts[FixationClass.MULTIPLE],
        dfp=dfp, sd_dfp=sd_dfp,
        fpp=counts[FixationClass.FIRST_PASS],
        rf=counts[FixationClass.REFIXATION],
        nfu=counts[FixationClass.UNIQUE],
        dfu=dfu, sd_dfu=sd_dfu,
        subject_id=trial.subject_id,
        trial_id=trial.trial_id,
        sentence_type=trial.sentence.sentence_type,
        label=label,
    )


def feature_matrix(trials: Iterable[TrialFeatureVector]) -> np.ndarray:
    rows = [t.values() for t in trials]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.scale.shape or self.mean.ndim != 1:
            raise ValueError("mean and scale must be 1-D arrays of equal length")
        if np.any(self.scale <= 0):
            raise ValueError("every scale must be positive")

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.mean.size:
            raise ValueError(f"expected {self.mean.size} features, got {x.shape[-1]}")
        return (x - self.mean) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["scale"], dtype=float))


def standardize_fit(
    matrix: Union[Sequence[TrialFeatureVector], np.ndarray]
) -> Standardizer:
    """Per-feature mean and sample SD; constant columns get scale 1."""
    x = matrix if isinstance(matrix, np.ndarray) else feature_matrix(matrix)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("standardize_fit needs at least two rows")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    scale = np.where(sd > 0, sd, 1.0)
    return Standardizer(mean=mean, scale=scale)


def standardize_apply(
    s: Standardizer, v: Union[TrialFeatureVector, np.ndarray]
) -> np.ndarray:
    x = v.values() if isinstance(v, TrialFeatureVector) else v
    return s.transform(x)


def write_feature_csv(trials: Iterable[TrialFeatureVector], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_NAMES + IDENTITY_NAMES)
        for t in trials:
            row = []
            for name in FEATURE_NAMES:
                value = getattr(t, _attr(name))
                row.append(str(int(value)) if name in _COUNT_FEATURES else repr(float(value)))
            row += [t.subject_id, t.trial_id, t.sentence_type.value, str(t.label)]
            writer.writerow(row)


def read_feature_csv(path: Union[str, Path]) -> List[TrialFeatureVector]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(FEATURE_NAMES + IDENTITY_NAMES) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            kwargs = {}
            for name in FEATURE_NAMES:
                kwargs[_attr(name)] = int(row[name]) if name in _COUNT_FEATURES else float(row[name])
            out.append(TrialFeatureVector(
                **kwargs,
                subject_id=row["subject_id"],
                trial_id=row["trial_id"],
                sentence_type=SentenceType(row["sentence_type"]),
                label=int(row["label"]),
            ))
    return out
