import numpy as np
import pytest

from oracles import naive_outlier_drop
from eyeread.dataset import (
    FIXATION_COLUMNS, Cohort, FixationCsvError, RawCohort, SplitSpec, build_cohort, filter_outliers,
    load_fixation_csv, read_split_manifest, split_by_subject, write_fixation_csv, write_split_manifest,
)
from eyeread.features import TrialFeatureVector, feature_matrix
from eyeread.synthetic import CohortSpec, generate_cohort
from eyeread.types import Diagnosis, SentenceType, Subject

HEADER = ",".join(FIXATION_COLUMNS)


def _vec(values, label, sid="s", tid="t"):
    """A feature vector whose count fields satisfy the partition identity."""
    v = dict(zip(("nw", "gaze", "sd_gaze", "as_", "sd_as", "dfp", "sd_dfp", "dfu", "sd_dfu"), values))
    return TrialFeatureVector(**v, ntf=3, ntm=1, fpp=2, rf=0, nfu=0,
                              subject_id=sid, trial_id=tid, label=label)


def _random_vectors(rng, n, label, sid_prefix="s"):
    out = []
    for i in range(n):
        vals = np.abs(rng.standard_t(3, 9)) * 10
        counts = rng.integers(0, 4, 4)
        out.append(TrialFeatureVector(
            nw=int(rng.integers(5, 15)), gaze=vals[0], sd_gaze=vals[1], as_=vals[2], sd_as=vals[3],
            ntf=int(counts.sum()), ntm=int(counts[0]), dfp=vals[4], sd_dfp=vals[5],
            fpp=int(counts[1]), rf=int(counts[2]), nfu=int(counts[3]), dfu=vals[6], sd_dfu=vals[7],
            subject_id=f"{sid_prefix}{i % 5}", trial_id=f"t{i}", label=label,
        ))
    return out


def test_csv_two_trials(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text(HEADER + "\n"
                 "a,AD,t1,s1,low,8,0,2,5.0,200,0\n"
                 "a,AD,t1,s1,low,8,1,3,9.5,210,0\n"
                 "a,AD,t2,s2,proverb,9,0,4,15.0,180,1\n")
    subjects, trials = load_fixation_csv(p)
    assert subjects == [Subject("a", Diagnosis.AD)]
    assert [(t.trial_id, len(t.fixations)) for t in trials] == [("t1", 2), ("t2", 1)]
    assert trials[1].sentence.sentence_type is SentenceType.PROVERB
    assert trials[1].fixations[0].is_blink_or_loss


def test_csv_inconsistent_diagnosis_names_subject(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text(HEADER + "\n"
                 "zed,AD,t1,s1,low,8,0,2,5.0,200,0\n"
                 "zed,Control,t2,s1,low,8,0,2,5.0,200,0\n")
    with pytest.raises(FixationCsvError, match="zed") as err:
        load_fixation_csv(p)
    assert err.value.lineno == 3


@pytest.mark.parametrize("row, fragment", [
    ("a,AD,t1,s1,low,8,0,2,five,200,0", ":2:"),
    ("a,AD,t1,s1,medium,8,0,2,5.0,200,0", ":2:"),
    ("a,AD,t1,s1,low,8,0,2,5.0,200,2", "blink"),
    ("a,AD,t1,s1,low,8,0,9,5.0,200,0", "out of range"),
    ("a,AD,t1,s1,low,8,0,2,5.0", "fields"),
])
def test_csv_parse_errors_carry_line_numbers(tmp_path, row, fragment):
    p = tmp_path / "f.csv"
    p.write_text(HEADER + "\n" + row + "\n")
    with pytest.raises(FixationCsvError, match=fragment):
        load_fixation_csv(p)


def test_csv_bad_header(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("subject,diagnosis\n")
    with pytest.raises(FixationCsvError, match=":1:"):
        load_fixation_csv(p)


def test_csv_round_trip(tmp_path):
    raw = generate_cohort(CohortSpec(n_control=3, n_ad=2, trials_per_subject_mean=8,
                                     trials_per_subject_sd=2, seed=5))
    p = tmp_path / "fix.csv"
    write_fixation_csv(raw, p)
    subjects, trials = load_fixation_csv(p)
    assert [(s.subject_id, s.diagnosis) for s in subjects] == [(s.subject_id, s.diagnosis) for s in raw.subjects]
    assert trials == raw.trials
    q = tmp_path / "again.csv"
    write_fixation_csv(RawCohort(subjects, trials), q)
    assert p.read_bytes() == q.read_bytes()


def test_cohort_invariants():
    v = _vec([8, 1, 1, 1, 1, 1, 1, 0, 0], 0, sid="x")
    with pytest.raises(ValueError, match="unknown"):
        Cohort([], [v])
    with pytest.raises(ValueError, match="without trials"):
        Cohort([Subject("x", Diagnosis.CONTROL), Subject("y", Diagnosis.AD)], [v])


def test_build_cohort_skips_sparse_trials():
    raw = generate_cohort(CohortSpec(n_control=2, n_ad=2, trials_per_subject_mean=10,
                                     trials_per_subject_sd=0, seed=1))
    cohort, report = build_cohort(raw)
    assert report.n_trials == len(raw.trials)
    assert len(cohort.trials) + len(report.too_sparse) == len(raw.trials)
    assert all(t.ntf >= 2 for t in cohort.trials)


def test_identical_group_drops_nothing():
    trials = [_vec([8, 200, 10, 5, 1, 180, 9, 0, 0], lab, tid=f"t{i}{lab}") for i in range(5) for lab in (0, 1)]
    kept, dropped, report = filter_outliers(trials)
    assert dropped == [] and len(kept) == 10
    assert report.drop_fraction(0) == 0.0


def test_planted_outlier_is_the_only_drop():
    rng = np.random.default_rng(0)
    base = rng.normal(0, 1, 100)
    base = np.clip(base, -1.9, 1.9)  # keep the bulk inside 2 SD once the plant inflates it
    base[17] = 10.0
    trials = [_vec([8, 300 + b, 1, 1, 1, 1, 1, 0, 0], 0, tid=f"t{i}") for i, b in enumerate(base)]
    trials += [_vec([8, 1, 1, 1, 1, 1, 1, 0, 0], 1, tid=f"u{i}") for i in range(3)]
    kept, dropped, _ = filter_outliers(trials)
    assert [t.trial_id for t in dropped] == ["t17"]


def test_small_group_rejected():
    trials = [_vec([8, 1, 1, 1, 1, 1, 1, 0, 0], 0, tid="a"), _vec([8, 1, 1, 1, 1, 1, 1, 0, 0], 0, tid="b"),
              _vec([8, 1, 1, 1, 1, 1, 1, 0, 0], 1, tid="c")]
    with pytest.raises(ValueError, match="group 1"):
        filter_outliers(trials)


def test_filter_matches_naive_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        trials = _random_vectors(rng, int(rng.integers(3, 40)), 0) + _random_vectors(rng, int(rng.integers(3, 40)), 1)
        kept, dropped, _ = filter_outliers(trials)
        drop = naive_outlier_drop(feature_matrix(trials).tolist(), [t.label for t in trials])
        assert [t for t, d in zip(trials, drop) if not d] == kept
        assert [t for t, d in zip(trials, drop) if d] == dropped


def test_single_pass_only():
    rng = np.random.default_rng(2)
    trials = _random_vectors(rng, 60, 0) + _random_vectors(rng, 60, 1)
    kept, dropped, _ = filter_outliers(trials)
    # a second pass on the survivors generally finds more; the filter must not have iterated
    _, again, _ = filter_outliers(kept)
    assert len(again) > 0
    assert len(kept) + len(dropped) == len(trials)


def _subjects_cohort(n_control, n_ad):
    subjects = [Subject(f"c{i:02d}", Diagnosis.CONTROL) for i in range(n_control)]
    subjects += [Subject(f"a{i:02d}", Diagnosis.AD) for i in range(n_ad)]
    trials = [_vec([8, 1, 1, 1, 1, 1, 1, 0, 0], s.label, sid=s.subject_id, tid=f"t{k}")
              for s in subjects for k in range(2)]
    return Cohort(subjects, trials)


def test_split_sizes():
    train, test = split_by_subject(_subjects_cohort(39, 22), SplitSpec(4, 4, seed=3))
    count = lambda c, d: sum(s.diagnosis is d for s in c.subjects)
    assert (count(train, Diagnosis.CONTROL), count(train, Diagnosis.AD)) == (35, 18)
    assert (count(test, Diagnosis.CONTROL), count(test, Diagnosis.AD)) == (4, 4)
    assert len(train.trials) + len(test.trials) == 2 * 61


def test_split_is_disjoint_and_deterministic():
    cohort = _subjects_cohort(12, 9)
    for seed in range(1000):
        train, test = split_by_subject(cohort, SplitSpec(4, 4, seed))
        tr = {s.subject_id for s in train.subjects}
        te = {s.subject_id for s in test.subjects}
        assert not tr & te
        assert {t.subject_id for t in test.trials} == te
    a = split_by_subject(cohort, SplitSpec(4, 4, 99))
    b = split_by_subject(cohort, SplitSpec(4, 4, 99))
    assert a == b


def test_split_infeasible():
    with pytest.raises(ValueError):
        split_by_subject(_subjects_cohort(3, 9), SplitSpec(4, 4))
    with pytest.raises(ValueError):
        SplitSpec(0, 4)


def test_split_manifest_round_trip(tmp_path):
    spec = SplitSpec(2, 2, 7)
    train, test = split_by_subject(_subjects_cohort(5, 5), spec)
    path = tmp_path / "split.txt"
    write_split_manifest(train, test, spec, path, config_hash="abc")
    text = path.read_text()
    assert "seed 7" in text and "config_hash abc" in text
    sides = read_split_manifest(path)
    assert sides["test"] == sorted(s.subject_id for s in test.subjects)
    assert sides["train"] == sorted(s.subject_id for s in train.subjects)
