import numpy as np
import pytest

from eyeread.types import Fixation, SentenceMeta, SentenceType


def make_meta(word_count=8, stype=SentenceType.LOW, sentence_id="s0"):
    return SentenceMeta(sentence_id, word_count, stype)


def make_fixations(words, durations=None, positions=None, trial_id="t0", blinks=None):
    n = len(words)
    durations = durations if durations is not None else [200.0] * n
    positions = positions if positions is not None else [5.0 * w + 2.0 for w in words]
    blinks = blinks if blinks is not None else [False] * n
    return [
        Fixation(trial_id, int(w), float(p), float(d), i, bool(b))
        for i, (w, d, p, b) in enumerate(zip(words, durations, positions, blinks))
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
