"""From-scratch sequence classifier: LSTM/BN/dense/dropout/attention + ADAM."""

from .layers import BatchNorm, Dense, Dropout, Lstm, SelfAttention
from .model import (BatchNormSpec, DenseSpec, DropoutSpec, LstmSpec, Model,
                    ModelConfig, SelfAttentionSpec, attention_variant,
                    bce_grad, bce_loss, preset, PRESETS)
from .optim import adam_init, adam_step
from .train import (LABEL_TO_TARGET, ModelBundle, TrainConfig, TrainResult,
                    predict_file, score_sequences, train)

__all__ = [
    "BatchNorm", "Dense", "Dropout", "Lstm", "SelfAttention",
    "BatchNormSpec", "DenseSpec", "DropoutSpec", "LstmSpec", "Model",
    "ModelConfig", "SelfAttentionSpec", "attention_variant",
    "bce_grad", "bce_loss", "preset", "PRESETS",
    "adam_init", "adam_step",
    "LABEL_TO_TARGET", "ModelBundle", "TrainConfig", "TrainResult",
    "predict_file", "score_sequences", "train",
]
