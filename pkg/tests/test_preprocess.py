import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_fixations, make_meta
from oracles import random_words, trace_classes
from eyeread.preprocess import (
    ClassifiedTrial, classify_fixations, clean_fixations, fixation_classes, saccade_amplitudes,
)
from eyeread.types import Fixation, FixationClass

FP, U, M, R = (FixationClass.FIRST_PASS, FixationClass.UNIQUE,
               FixationClass.MULTIPLE, FixationClass.REFIXATION)


def test_short_fixation_removed():
    meta = make_meta(8)
    assert clean_fixations(make_fixations([3], durations=[50.9]), meta) == []


def test_bounds_are_kept():
    meta = make_meta(8)
    fx = make_fixations([2, 3, 4, 5], durations=[51.0, 750.0, 750.1, 50.99])
    assert [f.duration_ms for f in clean_fixations(fx, meta)] == [51.0, 750.0]


def test_edge_words_removed():
    meta = make_meta(8)
    fx = make_fixations([0, 3, 7])
    assert [f.word_index for f in clean_fixations(fx, meta)] == [3]


def test_blinks_removed():
    meta = make_meta(8)
    fx = make_fixations([2, 3], blinks=[True, False])
    assert [f.word_index for f in clean_fixations(fx, meta)] == [3]


def test_mixed_trials_rejected():
    meta = make_meta(8)
    fx = make_fixations([2]) + make_fixations([3], trial_id="other")
    with pytest.raises(ValueError):
        clean_fixations(fx, meta)


def test_clean_matches_predicate_filter(rng):
    meta = make_meta(9)
    for _ in range(200):
        n = 20
        fx = make_fixations(
            rng.integers(0, 9, n).tolist(),
            durations=rng.uniform(1, 900, n).round(1).tolist(),
            blinks=(rng.random(n) < 0.1).tolist(),
        )
        expected = [
            f for f in fx
            if not f.is_blink_or_loss and 51 <= f.duration_ms <= 750 and f.word_index not in (0, 8)
        ]
        assert clean_fixations(fx, meta) == expected


@pytest.mark.parametrize("words, expected", [
    ([1, 2, 3, 4], [FP, FP, FP, FP]),
    ([1, 3, 3, 2], [FP, FP, M, U]),
    ([1, 2, 1], [FP, FP, R]),
    ([1, 3, 2, 2], [FP, FP, R, R]),        # skipped word fixated twice
    ([2, 2, 3, 2, 2], [FP, M, FP, R, R]),  # return after leaving is never Multiple
    ([], []),
])
def test_hand_traced_sequences(words, expected):
    assert fixation_classes(words) == expected


def test_classification_matches_trace_oracle():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        words = random_words(rng)
        assert fixation_classes(words) == trace_classes(words), words


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 8), max_size=25))
def test_partition_and_exclusivity(words):
    classes = fixation_classes(words)
    assert len(classes) == len(words)
    per_word = {}
    for w, c in zip(words, classes):
        per_word.setdefault(w, set()).add(c)
    for tags in per_word.values():
        assert not (FP in tags and U in tags)
        assert sum(t is U for t in tags) <= 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 12), unique=True, max_size=12))
def test_left_to_right_single_pass_is_first_pass(words):
    words = sorted(words)
    assert all(c is FP for c in fixation_classes(words))


def test_classify_empty_trial_is_valid():
    trial = classify_fixations([], make_meta(8), subject_id="s", trial_id="t9")
    assert trial.n_fixations == 0 and trial.trial_id == "t9"
    assert sum(trial.class_counts().values()) == 0


def test_classified_trial_rejects_uncleaned():
    meta = make_meta(8)
    bad = make_fixations([0, 3])
    with pytest.raises(ValueError):
        ClassifiedTrial("t0", "s", meta, tuple((f, FP) for f in bad), 400.0)


def test_classify_is_deterministic(rng):
    meta = make_meta(8)
    fx = make_fixations(random_words(rng, 15, 7), durations=None)
    a = classify_fixations(clean_fixations(fx, meta), meta)
    b = classify_fixations(clean_fixations(fx, meta), meta)
    assert a == b


def test_saccade_amplitudes():
    meta = make_meta(8)
    trial = classify_fixations(make_fixations([2, 4, 3], positions=[10, 17, 13]), meta)
    assert saccade_amplitudes(trial) == [7.0, 4.0]
    single = classify_fixations(make_fixations([2]), meta)
    assert saccade_amplitudes(single) == []


def test_saccade_amplitudes_loop_oracle(rng):
    meta = make_meta(14)
    for _ in range(50):
        pos = rng.uniform(0, 80, 15).tolist()
        trial = classify_fixations(make_fixations(rng.integers(1, 13, 15).tolist(), positions=pos), meta)
        expected = [abs(pos[i + 1] - pos[i]) for i in range(14)]
        assert saccade_amplitudes(trial) == pytest.approx(expected, abs=0)


def test_reading_time_is_retained_dwell():
    meta = make_meta(8)
    trial = classify_fixations(make_fixations([2, 3], durations=[120.0, 180.5]), meta)
    assert trial.reading_time_ms == 300.5
