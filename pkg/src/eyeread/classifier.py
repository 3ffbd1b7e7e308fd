"""Softmax head on a frozen encoder stack, per-trial P(AD), model documents."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .features import Standardizer, TrialFeatureVector, feature_matrix, standardize_fit
from .nn import (
    Activation,
    CrossEntropy,
    DenseLayer,
    TrainConfig,
    init_layer,
    softmax,
    train,
)
from .sdae import EncoderStack, SparseAEConfig, SparseAutoencoder, stack_train

MODEL_FORMAT = "eyeread-model"
MODEL_FORMAT_VERSION = 1
# the 2-way head is convex in its weights, so it tolerates a larger step
HEAD_DEFAULTS = TrainConfig(learning_rate=0.5, epochs=300)
PREDICTION_COLUMNS = ("subject_id", "trial_id", "sentence_type", "label", "p_ad")


class ModelNotFitted(ValueError):
    pass


@dataclass
class DeepClassifier:
    """Standardizer, encoder stack and a 2-way softmax head.

    Column 1 of the head output is P(AD), column 0 is P(Control).
    """

    standardizer: Standardizer
    stack: EncoderStack
    head: DenseLayer
    fine_tuned: bool = False

    def __post_init__(self):
        if not isinstance(self.standardizer, Standardizer):
            raise ModelNotFitted("classifier has no fitted standardizer")
        if not isinstance(self.stack, EncoderStack):
            raise ModelNotFitted("classifier has no trained encoder stack")
        if not isinstance(self.head, DenseLayer):
            raise ModelNotFitted("classifier has no trained head")
        if self.head.activation is not Activation.SOFTMAX or self.head.n_out != 2:
            raise ValueError("head must be a 2-output softmax layer")
        if self.head.n_in != self.stack.dims[-1]:
            raise ValueError(
                f"head expects {self.head.n_in} inputs, stack emits {self.stack.dims[-1]}"
            )
        if self.standardizer.mean.size != self.stack.dims[0]:
            raise ValueError("standardizer width differs from the stack input width")

    def class_probabilities(self, raw: np.ndarray) -> np.ndarray:
        """(n, 2) rows of [P(Control), P(AD)] for raw (unstandardized) feature rows."""
        x = np.atleast_2d(np.asarray(raw, dtype=float))
        code = self.stack.encode_all(self.standardizer.transform(x))[-1]
        return softmax(code @ self.head.weights.T + self.head.biases)

    def predict_proba(self, raw: np.ndarray) -> np.ndarray:
        return self.class_probabilities(raw)[:, 1]

    def to_dict(self, run: Optional[dict] = None) -> dict:
        """JSON-ready document; ``run`` carries provenance such as config hash and seed."""
        return {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "run": dict(run or {}),
            "fine_tuned": self.fine_tuned,
            "standardizer": self.standardizer.to_dict(),
            "stack": self.stack.to_dict(),
            "head": self.head.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DeepClassifier":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model document (format={doc.get('format')!r})")
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
        return cls(
            Standardizer.from_dict(doc["standardizer"]),
            EncoderStack.from_dict(doc["stack"]),
            DenseLayer.from_dict(doc["head"]),
            bool(doc.get("fine_tuned", False)),
        )


def _check_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D sequence")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 (Control) or 1 (AD)")
    if np.unique(labels).size < 2:
        raise ValueError("training data holds a single class; both labels are required")
    return labels.astype(int)


def _one_hot(labels: np.ndarray) -> np.ndarray:
    return np.eye(2)[labels]


def train_head(
    stack: EncoderStack,
    train_features: np.ndarray,
    labels: Sequence[int],
    cfg: TrainConfig = HEAD_DEFAULTS,
) -> DenseLayer:
    """Cross-entropy softmax on the clean final-stage codes of standardized features.

    The stack is only read, never updated.
    """
    labels = _check_labels(np.asarray(labels))
    x = np.asarray(train_features, dtype=float)
    if x.shape[0] != labels.size:
        raise ValueError(f"{x.shape[0]} feature rows but {labels.size} labels")
    code = stack.encode_all(x)[-1]
    rng = np.random.default_rng([cfg.seed, 0x4EAD])
    head = init_layer(code.shape[1], 2, Activation.SOFTMAX, rng)
    (head,), _ = train([head], code, _one_hot(labels), cfg, CrossEntropy())
    return head


def fine_tune(
    model: DeepClassifier,
    train_features: np.ndarray,
    labels: Sequence[int],
    cfg: TrainConfig,
) -> DeepClassifier:
    """Joint backprop through encoders and head (an optional extra, off by default)."""
    labels = _check_labels(np.asarray(labels))
    net = [layer.copy() for layer in model.stack.encoders] + [model.head.copy()]
    net, _ = train(net, np.asarray(train_features, dtype=float), _one_hot(labels), cfg, CrossEntropy())
    stages = [
        SparseAutoencoder(enc, stage.decoder.copy(), stage.config, list(stage.history))
        for enc, stage in zip(net[:-1], model.stack.stages)
    ]
    return DeepClassifier(model.standardizer, EncoderStack(stages), net[-1], fine_tuned=True)


def fit_classifier(
    raw_features: np.ndarray,
    labels: Sequence[int],
    stage_configs: Sequence[SparseAEConfig],
    head_config: TrainConfig = HEAD_DEFAULTS,
    fine_tune_config: Optional[TrainConfig] = None,
) -> DeepClassifier:
    """Standardize (fit on these rows), greedily train the stack, then the head."""
    labels = _check_labels(np.asarray(labels))
    standardizer = standardize_fit(np.asarray(raw_features, dtype=float))
    x = standardizer.transform(raw_features)
    stack = stack_train(x, stage_configs)
    model = DeepClassifier(standardizer, stack, train_head(stack, x, labels, head_config))
    if fine_tune_config is not None:
        model = fine_tune(model, x, labels, fine_tune_config)
    return model


def predict_trial(model: DeepClassifier, raw_features: TrialFeatureVector) -> float:
    """P(AD) for one trial; P(Control) is one minus this."""
    if not isinstance(model, DeepClassifier):
        raise ModelNotFitted("predict_trial needs a trained DeepClassifier")
    return float(model.predict_proba(raw_features.values())[0])


def classify_at_threshold(p: float, threshold: float = 0.5) -> int:
    """1 (AD) when p >= threshold, else 0 (Control); exactly the threshold counts as AD."""
    return int(p >= threshold)


# Predictions -----------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    subject_id: str
    trial_id: str
    sentence_type: str
    label: int
    p_ad: float


def predict_trials(model: DeepClassifier, trials: Sequence[TrialFeatureVector]) -> List[Prediction]:
    if not trials:
        return []
    p = model.predict_proba(feature_matrix(trials))
    return [
        Prediction(t.subject_id, t.trial_id, t.sentence_type.value, t.label, float(pi))
        for t, pi in zip(trials, p)
    ]


def write_predictions_csv(preds: Iterable[Prediction], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for p in preds:
            writer.writerow([p.subject_id, p.trial_id, p.sentence_type, p.label, repr(p.p_ad)])


def read_predictions_csv(path: Union[str, Path]) -> List[Prediction]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != PREDICTION_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(PREDICTION_COLUMNS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                sid, tid, stype, label, p = row
                rows.append(Prediction(sid, tid, stype, int(label), float(p)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


# Model documents ---------------------------------------------------------------

def save_model(model: DeepClassifier, path: Union[str, Path], run: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(model.to_dict(run), indent=1, sort_keys=True) + "\n")


def load_model(path: Union[str, Path]) -> DeepClassifier:
    return DeepClassifier.from_dict(json.loads(Path(path).read_text()))

