"""Fixation cleaning and first-pass / unique / multiple / refixation tagging."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .types import Fixation, FixationClass, SentenceMeta

MIN_DURATION_MS = 51.0
MAX_DURATION_MS = 750.0


@dataclass(frozen=True)
class ClassifiedTrial:
    trial_id: str
    subject_id: str
    sentence: SentenceMeta
    fixations: Tuple[Tuple[Fixation, FixationClass], ...]
    reading_time_ms: float

    def __post_init__(self):
        seqs = [f.seq for f, _ in self.fixations]
        if seqs != sorted(seqs):
            raise ValueError("fixations must be in seq order")
        last = self.sentence.word_count - 1
        for f, _ in self.fixations:
            if f.duration_ms < MIN_DURATION_MS or f.duration_ms > MAX_DURATION_MS:
                raise ValueError(f"uncleaned duration {f.duration_ms} in classified trial")
            if f.word_index == 0 or f.word_index == last:
                raise ValueError("classified trial holds a first/last-word fixation")

    @property
    def n_fixations(self) -> int:
        return len(self.fixations)

    def class_counts(self) -> Dict[FixationClass, int]:
        counts = Counter(c for _, c in self.fixations)
        return {cls: counts.get(cls, 0) for cls in FixationClass}

    def durations(self, cls: FixationClass) -> List[float]:
        return [f.duration_ms for f, c in self.fixations if c is cls]


def clean_fixations(raw: Sequence[Fixation], meta: SentenceMeta) -> List[Fixation]:
    """Drop blinks/track losses, out-of-window durations and edge-word fixations.

    Durations of exactly 51 and 750 ms are kept.
    """
    trial_ids = {f.trial_id for f in raw}
    if len(trial_ids) > 1:
        raise ValueError(f"fixations from several trials: {sorted(trial_ids)}")
    last = meta.word_count - 1
    kept = []
    for f in sorted(raw, key=lambda f: f.seq):
        if f.is_blink_or_loss:
            continue
        if f.duration_ms < MIN_DURATION_MS or f.duration_ms > MAX_DURATION_MS:
            continue
        if f.word_index == 0 or f.word_index == last:
            continue
        kept.append(f)
    return kept


def fixation_classes(words: Sequence[int]) -> List[FixationClass]:
    """Tag each fixation given the chronological sequence of fixated words.

    A word whose first fixation comes after the gaze has already reached a
    later word was skipped in first pass: it is Unique when fixated exactly
    once in the trial, otherwise all its fixations are Refixations. Other
    words get FirstPass for their first fixation, Multiple for the rest of
    that uninterrupted run, and Refixation for every later return.
    """
    totals = Counter(words)
    classes: List[FixationClass] = []
    skipped: Dict[int, bool] = {}
    run_open: Dict[int, bool] = {}
    furthest = -1
    prev = None
    for w in words:
        if w not in skipped:
            skipped[w] = furthest > w
            if skipped[w]:
                classes.append(
                    FixationClass.UNIQUE if totals[w] == 1 else FixationClass.REFIXATION
                )
            else:
                classes.append(FixationClass.FIRST_PASS)
                run_open[w] = True
        elif skipped[w]:
            classes.append(FixationClass.REFIXATION)
        elif run_open.get(w) and prev == w:
            classes.append(FixationClass.MULTIPLE)
        else:
            run_open[w] = False
            classes.append(FixationClass.REFIXATION)
        if prev is not None and prev != w:
            run_open[prev] = False
        prev = w
        furthest = max(furthest, w)
    return classes


def classify_fixations(
    cleaned: Sequence[Fixation],
    meta: SentenceMeta,
    subject_id: str = "",
    trial_id: Optional[str] = None,
) -> ClassifiedTrial:
    ordered = sorted(cleaned, key=lambda f: f.seq)
    classes = fixation_classes([f.word_index for f in ordered])
    if trial_id is None:
        trial_id = ordered[0].trial_id if ordered else ""
    reading_time = _reading_time(ordered)
    return ClassifiedTrial(
        trial_id=trial_id,
        subject_id=subject_id,
        sentence=meta,
        fixations=tuple(zip(ordered, classes)),
        reading_time_ms=reading_time,
    )


def _reading_time(ordered: Sequence[Fixation]) -> float:
    # Fixations carry no onset timestamps; the span is the summed retained dwell.
    return float(sum(f.duration_ms for f in ordered))


def saccade_amplitudes(trial: ClassifiedTrial) -> List[float]:
    positions = np.array([f.char_position for f, _ in trial.fixations], dtype=float)
    if positions.size < 2:
        return []
    return np.abs(np.diff(positions)).tolist()
