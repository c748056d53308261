"""Attention-based explainability.

For every sample the attention weights mark which time window influenced
the classification the most; collecting the raw (unscaled) jitter,
shimmer and mean-F0 values at those windows per class shows which
prosodic ranges the model keys on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NoAttentionLayerError
from .features import FeatureSequence, apply_scaler, pad_batch
from .neural.train import ModelBundle

EXPLAIN_CSV_HEADER = "utterance_id,label,argmax_window,jitter,shimmer,mean_f0"

_FEATURES = {"jitter": 2, "shimmer": 3, "mean_f0": 0}


def attention_vector(bundle: ModelBundle, seq: FeatureSequence,
                     pad_to: int | None = None) -> np.ndarray:
    """Attention weights over the sample's windows (zeros on any padding).

    The sequence must be unscaled; the bundle's scaler is applied here.
    `pad_to` appends masked zero padding, which must not change the
    result.
    """
    if not bundle.model.config.has_attention:
        raise NoAttentionLayerError(f"model {bundle.model.config.name!r} has no attention")
    scaled = apply_scaler(seq, bundle.scaler)
    batch, mask = pad_batch([scaled])
    if pad_to is not None and pad_to > batch.shape[1]:
        extra = pad_to - batch.shape[1]
        batch = np.pad(batch, ((0, 0), (0, extra), (0, 0)))
        mask = np.pad(mask, ((0, 0), (0, extra)))
    _, weights = bundle.model.forward(batch, mask, train=False, return_attention=True)
    return weights[0]


def most_influential_slice(weights: np.ndarray) -> int:
    """Index of the largest attention weight; ties resolve to the earliest."""
    return int(np.argmax(weights))


@dataclass
class AttentionRow:
    utterance_id: str
    label: str
    argmax_window: int
    jitter: float
    shimmer: float
    mean_f0: float


@dataclass
class AttentionAggregate:
    rows: list
    summary: dict   # class -> feature -> {mean, median, q1, q3, values}

    def to_csv(self) -> str:
        lines = [EXPLAIN_CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.utterance_id},{r.label},{r.argmax_window},"
                         f"{r.jitter!r},{r.shimmer!r},{r.mean_f0!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True)


def aggregate_attention_features(bundle: ModelBundle,
                                 dataset: list[FeatureSequence]) -> AttentionAggregate:
    """Per-class distributions of jitter/shimmer/mean-F0 at each sample's
    most influential window, in raw physical units."""
    rows = []
    for seq in dataset:
        weights = attention_vector(bundle, seq)
        k = most_influential_slice(weights)
        raw = seq.windows[k]
        rows.append(AttentionRow(seq.utterance_id, seq.label, k,
                                 float(raw[_FEATURES["jitter"]]),
                                 float(raw[_FEATURES["shimmer"]]),
                                 float(raw[_FEATURES["mean_f0"]])))

    summary: dict = {}
    for label in sorted({r.label for r in rows}):
        summary[label] = {}
        group = [r for r in rows if r.label == label]
        for feature in _FEATURES:
            values = np.array([getattr(r, feature) for r in group])
            summary[label][feature] = {
                "mean": float(values.mean()),
                "median": float(np.median(values)),
                "q1": float(np.percentile(values, 25)),
                "q3": float(np.percentile(values, 75)),
                "values": values.tolist(),
            }
    return AttentionAggregate(rows, summary)
