"""Seeded two-population reading simulator producing raw fixation cohorts.

This is a test instrument: it reproduces the directional contrasts between
groups (longer fixations, more refixations and regressions, shorter
saccades for AD), not the cognitive dynamics of reading.

Between-subject differences come from a bounded (uniform) latent and the
per-trial event counts are capped, so trial descriptors are light-tailed;
occasional "distracted" trials supply the gross outliers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from .dataset import Provenance, RawCohort
from .types import Diagnosis, Fixation, RawTrial, SentenceMeta, SentenceType, Subject

CORPUS_SIZES = {SentenceType.LOW: 75, SentenceType.HIGH: 45, SentenceType.PROVERB: 64}
WORD_COUNT_RANGE = {SentenceType.LOW: (7, 8), SentenceType.HIGH: (7, 8), SentenceType.PROVERB: (7, 8)}
WORD_LENGTH_RANGE = (3, 6)
DISTRACTION_SLOWDOWN = 3.0


@dataclass(frozen=True)
class PopulationParams:
    """Generative knobs for one population.

    duration_mean/duration_sd give the log-normal duration of a single fixation
    on a 5-letter word;
    refixation_prob is the chance of a second first-pass fixation on a word;
    regression_prob is the chance that a trial contains one short regression
    to the previously fixated word. Distracted trials instead make several
    long regressions, which is where unique fixations on skipped words come from.
    """

    duration_mean: float
    duration_sd: float
    refixation_prob: float
    skip_prob: float
    regression_prob: float
    saccade_amp_mean: float
    saccade_amp_sd: float
    reading_time_factor: float = 1.0

    def __post_init__(self):
        for name in ("refixation_prob", "skip_prob", "regression_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("duration_mean", "duration_sd", "saccade_amp_mean", "reading_time_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.saccade_amp_sd < 0:
            raise ValueError("saccade_amp_sd must be >= 0")


CONTROL_DEFAULTS = PopulationParams(
    duration_mean=215.0, duration_sd=35.0,
    refixation_prob=0.15, skip_prob=0.25, regression_prob=0.35,
    saccade_amp_mean=6.5, saccade_amp_sd=1.0,
)
AD_DEFAULTS = PopulationParams(
    duration_mean=290.0, duration_sd=50.0,
    refixation_prob=0.40, skip_prob=0.10, regression_prob=0.70,
    saccade_amp_mean=5.0, saccade_amp_sd=1.0, reading_time_factor=1.05,
)


@dataclass(frozen=True)
class CohortSpec:
    n_control: int = 43
    n_ad: int = 26
    trials_per_subject_mean: float = 52.0
    trials_per_subject_sd: float = 11.0
    control: PopulationParams = CONTROL_DEFAULTS
    ad: PopulationParams = AD_DEFAULTS
    subject_spread: float = 0.1
    trial_sd: float = 0.03
    severity_range: Tuple[float, float] = (0.6, 1.0)
    distraction_rate: float = 0.06
    noise_rate: float = 0.005
    blink_rate: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.n_control < 1 or self.n_ad < 1:
            raise ValueError("each population needs at least one subject")
        if self.trials_per_subject_mean <= 0 or self.trials_per_subject_sd < 0:
            raise ValueError("trial count parameters must be positive")
        if self.trials_per_subject_mean > sum(CORPUS_SIZES.values()):
            raise ValueError("mean trial count exceeds the sentence corpus")
        lo, hi = self.severity_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("severity_range must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.subject_spread < 1.0:
            raise ValueError("subject_spread must lie in [0, 1)")
        if self.trial_sd < 0:
            raise ValueError("trial_sd must be >= 0")
        for name in ("distraction_rate", "noise_rate", "blink_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["severity_range"] = list(self.severity_range)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CohortSpec":
        doc = dict(doc)
        for key in ("control", "ad"):
            if key in doc:
                doc[key] = PopulationParams(**doc[key])
        if "severity_range" in doc:
            doc["severity_range"] = tuple(doc["severity_range"])
        return cls(**doc)


@dataclass(frozen=True)
class _Sentence:
    meta: SentenceMeta
    starts: np.ndarray  # first character of each word
    lengths: np.ndarray

    @property
    def end(self) -> float:
        return float(self.starts[-1] + self.lengths[-1])

    def word_at(self, pos: float) -> int:
        # the space before a word belongs to that word
        k = int(np.searchsorted(self.starts + self.lengths, pos, side="right"))
        return min(k, len(self.starts) - 1)


def make_corpus(rng: np.random.Generator) -> List[_Sentence]:
    sentences = []
    lo_len, hi_len = WORD_LENGTH_RANGE
    for stype, count in CORPUS_SIZES.items():
        lo, hi = WORD_COUNT_RANGE[stype]
        for i in range(count):
            nw = int(rng.integers(lo, hi + 1))
            lengths = rng.integers(lo_len, hi_len + 1, size=nw).astype(float)
            starts = np.concatenate([[0.0], np.cumsum(lengths + 1.0)[:-1]])
            sentences.append(_Sentence(SentenceMeta(f"{stype.value}{i:02d}", nw, stype), starts, lengths))
    return sentences


def _interpolate(a: PopulationParams, b: PopulationParams, w: float) -> PopulationParams:
    return PopulationParams(**{
        k: getattr(a, k) + w * (getattr(b, k) - getattr(a, k)) for k in asdict(a)
    })


def _subject_params(p: PopulationParams, spread: float, rng: np.random.Generator) -> PopulationParams:
    """Scale a population by one uniform 'slowness' latent."""
    v = spread * rng.uniform(-1.0, 1.0)
    return PopulationParams(
        duration_mean=p.duration_mean * (1.0 + v),
        duration_sd=p.duration_sd * (1.0 + v),
        refixation_prob=min(p.refixation_prob * (1.0 + v), 1.0),
        skip_prob=min(p.skip_prob * (1.0 - v), 1.0),
        regression_prob=min(p.regression_prob * (1.0 + v), 1.0),
        saccade_amp_mean=p.saccade_amp_mean * (1.0 - v / 2.0),
        saccade_amp_sd=p.saccade_amp_sd,
        reading_time_factor=p.reading_time_factor,
    )


DISTRACTED_REGRESSIONS = 8


def _distracted(p: PopulationParams) -> PopulationParams:
    return PopulationParams(
        duration_mean=p.duration_mean * DISTRACTION_SLOWDOWN,
        duration_sd=p.duration_sd * 3.0,
        refixation_prob=0.9,
        skip_prob=min(2.0 * p.skip_prob, 0.6),
        regression_prob=1.0,
        saccade_amp_mean=p.saccade_amp_mean,
        saccade_amp_sd=p.saccade_amp_sd * 3.0,
        reading_time_factor=p.reading_time_factor,
    )


def _quota(p: float, n: int, rng: np.random.Generator) -> int:
    """Randomized rounding of p * n: each of n items is selected with probability p."""
    expected = p * n
    base = math.floor(expected)
    return int(base + (rng.random() < expected - base))


def simulate_trial(
    sentence: _Sentence,
    params: PopulationParams,
    duration_scale: float,
    spec: CohortSpec,
    rng: np.random.Generator,
    subject_id: str,
    trial_id: str,
    max_regressions: int = 1,
    long_regressions: bool = False,
) -> RawTrial:
    """One left-to-right pass over the sentence.

    Skipped and refixated words are drawn as quotas (randomized rounding of
    probability x eligible words, placed uniformly), so every word keeps the
    nominal marginal probability while per-trial counts stay tight.
    """
    base = params.duration_mean * params.reading_time_factor * duration_scale
    # log-normal with the requested mean and SD
    log_sigma = math.sqrt(math.log1p((params.duration_sd / params.duration_mean) ** 2))
    log_mu = math.log(base) - 0.5 * log_sigma ** 2
    n_words = sentence.meta.word_count
    interior = np.arange(1, n_words - 1)
    skip = set(rng.choice(interior, size=_quota(params.skip_prob, interior.size, rng), replace=False).tolist())
    first_pass = [w for w in range(n_words) if w not in skip]
    inner_fixated = [w for w in first_pass if 0 < w < n_words - 1]
    refix = set(rng.choice(inner_fixated, size=_quota(params.refixation_prob, len(inner_fixated), rng), replace=False).tolist()) if inner_fixated else set()
    regress_after = sorted(
        int(rng.integers(2, n_words)) for _ in range(max_regressions)
        if rng.random() < params.regression_prob
    )
    fixations: List[Fixation] = []

    def fixate(pos: float) -> None:
        word = sentence.word_at(pos)
        duration = (0.8 + 0.04 * sentence.lengths[word]) * rng.lognormal(log_mu, log_sigma)
        u = rng.random()
        if u < spec.noise_rate:
            duration = rng.uniform(10.0, 50.0) if u < spec.noise_rate / 2 else rng.uniform(760.0, 1200.0)
        fixations.append(Fixation(
            trial_id=trial_id, word_index=word, char_position=round(pos, 2),
            duration_ms=round(float(duration), 1), seq=len(fixations),
            is_blink_or_loss=bool(rng.random() < spec.blink_rate),
        ))

    def land(word: int, aim: float) -> float:
        start, length = sentence.starts[word], sentence.lengths[word]
        return float(np.clip(aim, start, start + length - 0.5))

    pos = 0.5  # the trial opens on the first letter
    for word in first_pass:
        if word > 0:
            amp = max(1.0, rng.normal(params.saccade_amp_mean, params.saccade_amp_sd))
            pos = land(word, pos + amp)
        fixate(pos)
        if word in refix:
            pos = land(word, pos + rng.uniform(1.0, 3.0))
            fixate(pos)
        while regress_after and word >= regress_after[0]:
            regress_after.pop(0)
            if word < 2:
                continue
            if long_regressions:
                target = int(rng.integers(1, word))
            else:
                earlier = [w for w in first_pass if 1 <= w < word]
                if not earlier:
                    continue
                target = earlier[-1]
            fixate(float(sentence.starts[target] + sentence.lengths[target] / 2.0))
    return RawTrial(subject_id, trial_id, sentence.meta, tuple(fixations))


def generate_cohort(spec: CohortSpec = CohortSpec()) -> RawCohort:
    """Deterministic cohort for ``spec.seed``; each subject draws from its own child stream."""
    root = np.random.SeedSequence(spec.seed)
    corpus_seed, *subject_seeds = root.spawn(1 + spec.n_control + spec.n_ad)
    corpus = make_corpus(np.random.default_rng(corpus_seed))
    subjects: List[Subject] = []
    trials: List[RawTrial] = []
    roster = [Diagnosis.CONTROL] * spec.n_control + [Diagnosis.AD] * spec.n_ad
    for i, (diagnosis, seed) in enumerate(zip(roster, subject_seeds)):
        rng = np.random.default_rng(seed)
        subject_id = f"{'C' if diagnosis is Diagnosis.CONTROL else 'A'}{i + 1:03d}"
        if diagnosis is Diagnosis.AD:
            severity = float(rng.uniform(*spec.severity_range))
            params = _interpolate(spec.control, spec.ad, severity)
            score = round(severity, 1)
        else:
            params, score = spec.control, None
        params = _subject_params(params, spec.subject_spread, rng)
        subjects.append(Subject(subject_id, diagnosis, score))

        n_trials = int(round(rng.normal(spec.trials_per_subject_mean, spec.trials_per_subject_sd)))
        n_trials = int(np.clip(n_trials, 5, len(corpus)))
        chosen = np.sort(rng.choice(len(corpus), size=n_trials, replace=False))
        for j, idx in enumerate(chosen):
            distracted = rng.random() < spec.distraction_rate
            trial_params = _distracted(params) if distracted else params
            scale = math.exp(rng.normal(0.0, spec.trial_sd))
            trials.append(simulate_trial(
                corpus[idx], trial_params, scale, spec, rng, subject_id, f"t{j:03d}",
                max_regressions=DISTRACTED_REGRESSIONS if distracted else 1,
                long_regressions=distracted,
            ))
    return RawCohort(subjects, trials, Provenance.SYNTHETIC)
