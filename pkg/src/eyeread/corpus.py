"""Word-level corpus descriptors: log frequency and half-logit predictability."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union


@dataclass(frozen=True)
class WordDescriptor:
    length: int
    frequency_per_million: float
    predictability: float

    def __post_init__(self):
        if not 1 <= self.length <= 14:
            raise ValueError(f"word length must be in [1, 14], got {self.length}")
        if self.frequency_per_million < 1:
            raise ValueError(f"frequency must be >= 1 per million, got {self.frequency_per_million}")
        if not 0.0 <= self.predictability <= 1.0:
            raise ValueError(f"predictability must be in [0, 1], got {self.predictability}")


def log_frequency(f: float) -> float:
    if f < 1:
        raise ValueError(f"frequency per million must be >= 1, got {f}")
    return math.log10(f)


def logit_predictability(p: float, n_protocols: int) -> float:
    """Half-logit of a cloze predictability.

    0 and 1 are replaced by 1/(2n) and (2n-1)/(2n) for n cloze protocols.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"predictability must be in [0, 1], got {p}")
    if n_protocols < 1:
        raise ValueError(f"n_protocols must be >= 1, got {n_protocols}")
    if p == 0.0:
        p = 1.0 / (2 * n_protocols)
    elif p == 1.0:
        p = (2 * n_protocols - 1) / (2 * n_protocols)
    return 0.5 * math.log(p / (1.0 - p))


def load_corpus_csv(path: Union[str, Path]) -> Dict[Tuple[str, int], WordDescriptor]:
    """Read ``sentence_id,word_index,length,frequency_per_million,predictability``."""
    out: Dict[Tuple[str, int], WordDescriptor] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                key = (row["sentence_id"], int(row["word_index"]))
                out[key] = WordDescriptor(
                    length=int(row["length"]),
                    frequency_per_million=float(row["frequency_per_million"]),
                    predictability=float(row["predictability"]),
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def transform_words(words: List[WordDescriptor], n_protocols: int) -> List[Tuple[float, float]]:
    """(log10 frequency, logit predictability) per word."""
    return [
        (log_frequency(w.frequency_per_million), logit_predictability(w.predictability, n_protocols))
        for w in words
    ]
