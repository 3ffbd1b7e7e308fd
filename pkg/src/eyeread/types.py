"""Domain vocabulary shared by the pipeline stages."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

logger = logging.getLogger(__name__)


class Diagnosis(enum.Enum):
    CONTROL = "Control"
    AD = "AD"


class SentenceType(enum.Enum):
    LOW = "low"
    HIGH = "high"
    PROVERB = "proverb"


class FixationClass(enum.Enum):
    FIRST_PASS = "FirstPass"
    UNIQUE = "Unique"
    MULTIPLE = "Multiple"
    REFIXATION = "Refixation"


MIN_SENTENCE_WORDS = 5
MAX_SENTENCE_WORDS = 14


def encode_label(diagnosis: Diagnosis) -> int:
    """Control -> 0, AD -> 1."""
    if diagnosis is Diagnosis.CONTROL:
        return 0
    if diagnosis is Diagnosis.AD:
        return 1
    raise ValueError(f"not a diagnosis: {diagnosis!r}")


def decode_label(label: int) -> Diagnosis:
    if label == 0:
        return Diagnosis.CONTROL
    if label == 1:
        return Diagnosis.AD
    raise ValueError(f"label must be 0 or 1, got {label!r}")


@dataclass(frozen=True)
class Fixation:
    """One eye-tracker fixation event on a single-line sentence."""

    trial_id: str
    word_index: int
    char_position: float
    duration_ms: float
    seq: int
    is_blink_or_loss: bool = False

    def __post_init__(self):
        if not self.duration_ms > 0:
            raise ValueError(f"duration_ms must be > 0, got {self.duration_ms}")
        if self.word_index < 0:
            raise ValueError(f"word_index must be >= 0, got {self.word_index}")
        if self.seq < 0:
            raise ValueError(f"seq must be >= 0, got {self.seq}")


@dataclass(frozen=True)
class SentenceMeta:
    sentence_id: str
    word_count: int
    sentence_type: SentenceType

    def __post_init__(self):
        if self.word_count < 1:
            raise ValueError(f"word_count must be positive, got {self.word_count}")
        if not MIN_SENTENCE_WORDS <= self.word_count <= MAX_SENTENCE_WORDS:
            logger.warning(
                "sentence %s has %d words, outside [%d, %d]",
                self.sentence_id, self.word_count, MIN_SENTENCE_WORDS, MAX_SENTENCE_WORDS,
            )


@dataclass(frozen=True)
class Subject:
    subject_id: str
    diagnosis: Diagnosis
    clinician_score: Optional[float] = None

    def __post_init__(self):
        if self.clinician_score is not None and not 0.0 <= self.clinician_score <= 1.0:
            raise ValueError(
                f"clinician_score must lie in [0, 1], got {self.clinician_score}"
            )

    @property
    def label(self) -> int:
        return encode_label(self.diagnosis)


@dataclass(frozen=True)
class RawTrial:
    """A subject reading one sentence: the uncleaned fixation stream.

    Fixations are kept in ``seq`` order; ``seq`` must run 0..n-1.
    """

    subject_id: str
    trial_id: str
    sentence: SentenceMeta
    fixations: Tuple[Fixation, ...]

    def __post_init__(self):
        fixations = tuple(sorted(self.fixations, key=lambda f: f.seq))
        object.__setattr__(self, "fixations", fixations)
        if [f.seq for f in fixations] != list(range(len(fixations))):
            raise ValueError(f"trial {self.trial_id}: seq must be contiguous from 0")
        for f in fixations:
            if f.trial_id != self.trial_id:
                raise ValueError(
                    f"fixation of trial {f.trial_id} filed under trial {self.trial_id}"
                )
            if f.word_index >= self.sentence.word_count:
                raise ValueError(
                    f"trial {self.trial_id}: word_index {f.word_index} out of range "
                    f"for {self.sentence.word_count} words"
                )
