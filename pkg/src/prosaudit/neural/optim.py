"""ADAM optimizer over named parameter dictionaries."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError


def adam_init(weights: dict) -> dict:
    return {name: {"m": np.zeros_like(w), "v": np.zeros_like(w)}
            for name, w in weights.items()}


def adam_step(weights: dict, gradients: dict, state: dict, t: int, cfg) -> tuple[dict, dict]:
    """One bias-corrected ADAM update; t is the 1-based step counter.

    Arrays are updated in place and returned for convenience.
    """
    if t < 1:
        raise ValueError("step counter t starts at 1")
    b1, b2, eps, lr = cfg.beta1, cfg.beta2, cfg.epsilon, cfg.learning_rate
    for name, w in weights.items():
        g = gradients[name]
        if g.shape != w.shape:
            raise ShapeMismatchError(f"{name}: gradient {g.shape} vs weight {w.shape}")
        s = state[name]
        s["m"] = b1 * s["m"] + (1.0 - b1) * g
        s["v"] = b2 * s["v"] + (1.0 - b2) * (g * g)
        m_hat = s["m"] / (1.0 - b1 ** t)
        v_hat = s["v"] / (1.0 - b2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return weights, state
