"""Denoising sparse autoencoders and greedy layer-wise stacking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .nn import (
    Activation,
    DenseLayer,
    SparseAE,
    TrainConfig,
    config_from_dict,
    config_to_dict,
    init_layer,
    kl_divergence,
    train,
)


def corrupt(x: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Zero ``round(fraction * dim)`` distinct coordinates of every row.

    Works on a single vector or row-wise on a matrix; the input is not modified.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"corruption fraction must lie in [0, 1), got {fraction}")
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(x).copy()
    n, dim = rows.shape
    k = int(round(fraction * dim))
    if k > 0:
        # argsort of iid uniforms gives an independent random permutation per row
        picked = np.argsort(rng.random((n, dim)), axis=1)[:, :k]
        np.put_along_axis(rows, picked, 0.0, axis=1)
    return rows[0] if x.ndim == 1 else rows


def kl_sparsity(rho: float, rho_hat: np.ndarray) -> float:
    """Sum over hidden units of KL(rho || rho_hat_j), rho_hat clipped away from 0 and 1."""
    return kl_divergence(rho, rho_hat)


@dataclass(frozen=True)
class SparseAEConfig:
    hidden_units: int
    sparsity_target: float = 0.10
    sparsity_weight: float = 3.0
    corruption_fraction: float = 0.25
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not 0.0 < self.sparsity_target < 1.0:
            raise ValueError("sparsity_target must lie in (0, 1)")
        if self.sparsity_weight < 0:
            raise ValueError("sparsity_weight must be >= 0")
        if not 0.0 <= self.corruption_fraction < 1.0:
            raise ValueError("corruption_fraction must lie in [0, 1)")

    def loss(self) -> SparseAE:
        return SparseAE(beta=self.sparsity_weight, rho=self.sparsity_target)

    def to_dict(self) -> dict:
        return {
            "hidden_units": self.hidden_units,
            "sparsity_target": self.sparsity_target,
            "sparsity_weight": self.sparsity_weight,
            "corruption_fraction": self.corruption_fraction,
            "train": config_to_dict(self.train),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SparseAEConfig":
        doc = dict(doc)
        doc["train"] = config_from_dict(doc["train"])
        return cls(**doc)


@dataclass
class SparseAutoencoder:
    encoder: DenseLayer
    decoder: DenseLayer
    config: SparseAEConfig
    history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.encoder.activation is not Activation.SIGMOID:
            raise ValueError("encoder must be sigmoid")
        if self.encoder.n_in != self.decoder.n_out or self.encoder.n_out != self.decoder.n_in:
            raise ValueError(
                f"encoder {self.encoder.n_in}->{self.encoder.n_out} does not mirror "
                f"decoder {self.decoder.n_in}->{self.decoder.n_out}"
            )
        if self.encoder.n_out != self.config.hidden_units:
            raise ValueError("encoder width differs from config.hidden_units")

    def encode(self, x: np.ndarray) -> np.ndarray:
        return _encode_layer(self.encoder, x)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        h = self.encode(x)
        return h @ self.decoder.weights.T + self.decoder.biases

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SparseAutoencoder":
        return cls(
            DenseLayer.from_dict(doc["encoder"]),
            DenseLayer.from_dict(doc["decoder"]),
            SparseAEConfig.from_dict(doc["config"]),
        )


def _encode_layer(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input has {x.shape[-1]} features, encoder expects {layer.n_in}")
    z = x @ layer.weights.T + layer.biases
    return 1.0 / (1.0 + np.exp(-z))


def train_sparse_autoencoder(data: np.ndarray, cfg: SparseAEConfig) -> SparseAutoencoder:
    """Train to reconstruct clean rows from their corrupted copies.

    Loss per batch: mean summed squared reconstruction error against the clean
    input, plus sparsity_weight * KL(sparsity_target || batch-mean hidden
    activation), plus the L2 weight decay from ``cfg.train``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("training data must be a 2-D matrix")
    if data.shape[0] < cfg.train.batch_size:
        raise ValueError(
            f"{data.shape[0]} rows is fewer than batch size {cfg.train.batch_size}"
        )
    rng = np.random.default_rng([cfg.train.seed, 0x5AE])
    n_in = data.shape[1]
    net = [
        init_layer(n_in, cfg.hidden_units, Activation.SIGMOID, rng),
        init_layer(cfg.hidden_units, n_in, Activation.LINEAR, rng),
    ]
    noise = None
    if cfg.corruption_fraction > 0:
        def noise(batch, gen):
            return corrupt(batch, cfg.corruption_fraction, gen)
    net, history = train(net, data, data, cfg.train, cfg.loss(), input_noise=noise)
    return SparseAutoencoder(net[0], net[1], cfg, history)


@dataclass
class EncoderStack:
    stages: List[SparseAutoencoder]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("an encoder stack needs at least one stage")
        for prev, nxt in zip(self.stages, self.stages[1:]):
            if prev.encoder.n_out != nxt.encoder.n_in:
                raise ValueError(
                    f"stage widths do not chain: {prev.encoder.n_out} -> {nxt.encoder.n_in}"
                )

    @property
    def dims(self) -> List[int]:
        return [self.stages[0].encoder.n_in] + [s.encoder.n_out for s in self.stages]

    @property
    def encoders(self) -> List[DenseLayer]:
        return [s.encoder for s in self.stages]

    def encode_all(self, x: np.ndarray) -> List[np.ndarray]:
        """Codes from every stage, in order."""
        codes = []
        h = x
        for stage in self.stages:
            h = stage.encode(h)
            codes.append(h)
        return codes

    def to_dict(self) -> dict:
        return {"dims": self.dims, "stages": [s.to_dict() for s in self.stages]}

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderStack":
        return cls([SparseAutoencoder.from_dict(d) for d in doc["stages"]])


def encode(model, x: np.ndarray) -> np.ndarray:
    """Hidden code of a single autoencoder or the final code of a stack."""
    if isinstance(model, EncoderStack):
        return model.encode_all(x)[-1]
    return model.encode(x)


def stack_train(
    data: np.ndarray,
    configs: Sequence[SparseAEConfig],
    stage_inputs: Optional[List[np.ndarray]] = None,
) -> EncoderStack:
    """Greedy layer-wise training; each stage learns from the clean codes of the previous one.

    If ``stage_inputs`` is given, the matrix each stage trained on is appended to it.
    """
    if not configs:
        raise ValueError("stack_train needs at least one stage config")
    stages = []
    h = np.asarray(data, dtype=float)
    for cfg in configs:
        if stage_inputs is not None:
            stage_inputs.append(h)
        ae = train_sparse_autoencoder(h, cfg)
        stages.append(ae)
        h = ae.encode(h)
    return EncoderStack(stages)


def mean_activation(ae: SparseAutoencoder, data: np.ndarray, batch_size: Optional[int] = None) -> float:
    """Average hidden activation over batches (whole matrix if ``batch_size`` is None)."""
    h = ae.encode(data)
    if batch_size is None:
        return float(h.mean())
    means = [h[i:i + batch_size].mean() for i in range(0, h.shape[0], batch_size)]
    return float(np.mean(means))
