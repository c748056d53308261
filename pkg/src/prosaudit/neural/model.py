"""Model configuration, the named presets A-E, and the assembled network.

A configuration is an ordered layer list ending in a 1-unit sigmoid dense
head. The sequence is reduced to a vector either by the last LSTM (which
does not return sequences) or by a self-attention layer, whichever the
configuration contains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthMismatchError, ShapeMismatchError
from .layers import BatchNorm, Dense, Dropout, Lstm, SelfAttention

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LstmSpec:
    units: int
    dropout: float = 0.2
    return_sequences: bool = False
    kind: str = field(default="lstm", init=False)


@dataclass(frozen=True)
class BatchNormSpec:
    kind: str = field(default="batch_norm", init=False)


@dataclass(frozen=True)
class DenseSpec:
    units: int
    activation: str = "relu"
    kind: str = field(default="dense", init=False)


@dataclass(frozen=True)
class DropoutSpec:
    rate: float = 0.2
    kind: str = field(default="dropout", init=False)


@dataclass(frozen=True)
class SelfAttentionSpec:
    kind: str = field(default="self_attention", init=False)


@dataclass(frozen=True)
class ModelConfig:
    name: str
    layers: tuple
    input_dim: int = 6

    def __post_init__(self):
        last = self.layers[-1]
        if not (isinstance(last, DenseSpec) and last.units == 1
                and last.activation == "sigmoid"):
            raise ValueError("final layer must be Dense(1, sigmoid)")

    @property
    def has_attention(self) -> bool:
        return any(isinstance(s, SelfAttentionSpec) for s in self.layers)

    def to_dict(self) -> dict:
        out = []
        for spec in self.layers:
            if isinstance(spec, LstmSpec):
                out.append({"kind": "lstm", "units": spec.units,
                            "dropout": spec.dropout,
                            "return_sequences": spec.return_sequences})
            elif isinstance(spec, BatchNormSpec):
                out.append({"kind": "batch_norm"})
            elif isinstance(spec, DenseSpec):
                out.append({"kind": "dense", "units": spec.units,
                            "activation": spec.activation})
            elif isinstance(spec, DropoutSpec):
                out.append({"kind": "dropout", "rate": spec.rate})
            else:
                out.append({"kind": "self_attention"})
        return {"name": self.name, "input_dim": self.input_dim, "layers": out}

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        layers = []
        for item in obj["layers"]:
            kind = item["kind"]
            if kind == "lstm":
                layers.append(LstmSpec(item["units"], item["dropout"],
                                       item["return_sequences"]))
            elif kind == "batch_norm":
                layers.append(BatchNormSpec())
            elif kind == "dense":
                layers.append(DenseSpec(item["units"], item["activation"]))
            elif kind == "dropout":
                layers.append(DropoutSpec(item["rate"]))
            elif kind == "self_attention":
                layers.append(SelfAttentionSpec())
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
        return cls(obj["name"], tuple(layers), obj["input_dim"])


def _stack(name, lstm_units, dense_units) -> ModelConfig:
    layers = []
    for i, units in enumerate(lstm_units):
        returning = i < len(lstm_units) - 1
        layers.append(LstmSpec(units, 0.2, returning))
        layers.append(BatchNormSpec())
    layers += [DenseSpec(dense_units, "relu"), DropoutSpec(0.2),
               DenseSpec(1, "sigmoid")]
    return ModelConfig(name, tuple(layers))


PRESETS = {
    "A": _stack("A", (64, 32), 32),
    "B": _stack("B", (100, 50), 50),
    "C": _stack("C", (64, 32, 16, 8), 8),
    "D": _stack("D", (100,), 100),
    "E": _stack("E", (16, 16), 16),
}


def preset(name: str) -> ModelConfig:
    return PRESETS[name.upper()]


def attention_variant(config: ModelConfig) -> ModelConfig:
    """Insert self-attention after the first LSTM block.

    The first LSTM returns sequences and the attention context replaces
    the deeper LSTMs as the sequence reduction; the dense head is kept.
    """
    specs = list(config.layers)
    first_lstm = next(i for i, s in enumerate(specs) if isinstance(s, LstmSpec))
    head_start = next(i for i, s in enumerate(specs) if isinstance(s, DenseSpec))
    kept = [
        LstmSpec(specs[first_lstm].units, specs[first_lstm].dropout, True)
    ]
    if first_lstm + 1 < len(specs) and isinstance(specs[first_lstm + 1], BatchNormSpec):
        kept.append(BatchNormSpec())
    kept.append(SelfAttentionSpec())
    kept.extend(specs[head_start:])
    return ModelConfig(config.name + "+attn", tuple(kept), config.input_dim)


class Model:
    """A built network: layer instances with deterministic seeded weights."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
        self.layers = []
        dim = config.input_dim
        for spec in config.layers:
            if isinstance(spec, LstmSpec):
                layer = Lstm(dim, spec.units, spec.dropout,
                             spec.return_sequences, rng=rng)
                dim = spec.units
            elif isinstance(spec, BatchNormSpec):
                layer = BatchNorm(dim)
            elif isinstance(spec, DenseSpec):
                layer = Dense(dim, spec.units, spec.activation, rng=rng)
                dim = spec.units
            elif isinstance(spec, DropoutSpec):
                layer = Dropout(spec.rate)
            elif isinstance(spec, SelfAttentionSpec):
                layer = SelfAttention(dim, rng=rng)
            else:
                raise ValueError(f"unknown spec {spec!r}")
            self.layers.append(layer)

    # --- forward / backward ---

    def forward(self, batch: np.ndarray, mask: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None,
                return_attention: bool = False):
        """Probabilities (B,) for a scaled padded batch; optionally attention (B, T)."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3 or batch.shape[2] != self.config.input_dim:
            raise ShapeMismatchError(
                f"expected (B, T, {self.config.input_dim}), got {batch.shape}")
        if mask.shape != batch.shape[:2]:
            raise ShapeMismatchError("mask shape must match batch (B, T)")
        if train and rng is None:
            rng = np.random.default_rng(self.seed)
        x, m = batch, mask
        attention = None
        for layer in self.layers:
            x, m = layer.forward(x, m, train=train, rng=rng)
            if isinstance(layer, SelfAttention):
                attention = layer.last_weights
        probs = x[:, 0]
        if return_attention:
            return probs, attention
        return probs

    def backward(self, dprobs: np.ndarray) -> None:
        """Backpropagate d(loss)/d(probability); gradients land in layer.grads."""
        dx = np.asarray(dprobs, dtype=np.float64)[:, None]
        for layer in reversed(self.layers):
            dx = layer.backward(dx)

    # --- parameter access ---

    def parameters(self):
        """(name, layer, key) triples in a stable order."""
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                out.append((f"layer{i}/{key}", layer, key))
        return out

    def get_weights(self) -> dict:
        weights = {name: layer.params[key].copy()
                   for name, layer, key in self.parameters()}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, BatchNorm):
                weights[f"layer{i}/running_mean"] = layer.running_mean.copy()
                weights[f"layer{i}/running_var"] = layer.running_var.copy()
        return weights

    def set_weights(self, weights: dict) -> None:
        for name, layer, key in self.parameters():
            layer.params[key] = np.array(weights[name], dtype=np.float64)
        for i, layer in enumerate(self.layers):
            if isinstance(layer, BatchNorm):
                layer.running_mean = np.array(weights[f"layer{i}/running_mean"])
                layer.running_var = np.array(weights[f"layer{i}/running_var"])

    def zero_weights(self) -> None:
        for _, layer, key in self.parameters():
            layer.params[key] = np.zeros_like(layer.params[key])

    def recalibrate_bn(self, batches) -> None:
        """Re-estimate BatchNorm running statistics from full dataset passes.

        Desk-scale batches make exponential-moving-average statistics a
        poor match for the batch statistics training normalized with; this
        replaces them with exact population moments (dropout off).
        `batches` yields (batch, mask) pairs covering the dataset.
        """
        bns = [layer for layer in self.layers if isinstance(layer, BatchNorm)]
        if not bns:
            return
        for bn in bns:
            bn.start_collect()
        for batch, mask in batches:
            self.forward(batch, mask, train=False)
        for bn in bns:
            bn.finish_collect()


def bce_loss(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise LengthMismatchError(f"probabilities {p.shape} vs labels {y.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_grad(probabilities: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(bce_loss)/d(probabilities); zero where the clamp is active."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise LengthMismatchError(f"probabilities {p.shape} vs labels {y.shape}")
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    grad = (pc - y) / (pc * (1.0 - pc)) / len(p)
    return np.where(inside, grad, 0.0)
