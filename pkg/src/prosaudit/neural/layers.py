"""Layer primitives with explicit forward/backward passes in numpy.

Sequence tensors are (B, T, D) with a boolean (B, T) mask; masked steps
never update recurrent state, never enter batch statistics, and produce
exact zeros in sequence outputs, so trailing padding cannot change a
sample's score.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError, StaleCacheError


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


class Lstm:
    """Single LSTM layer, gate order (input, forget, candidate, output).

    `dropout` is applied to the layer inputs in train mode with one mask
    per sample shared across time steps. With return_sequences the output
    is the masked hidden sequence, otherwise the state after the last
    unmasked step.
    """

    def __init__(self, input_dim: int, units: int, dropout: float = 0.0,
                 return_sequences: bool = False, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.input_dim = input_dim
        self.units = units
        self.dropout = dropout
        self.return_sequences = return_sequences
        h = units
        self.params = {
            "Wx": _fan_in_uniform(rng, (input_dim, 4 * h), input_dim),
            "Wh": np.concatenate([_orthogonal(rng, h) for _ in range(4)], axis=1),
            "b": np.zeros(4 * h),
        }
        self.params["b"][h: 2 * h] = 1.0  # forget-gate bias
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def forward(self, x, mask, train=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeMismatchError(
                f"LSTM expects (B, T, {self.input_dim}), got {x.shape}")
        b, t_len, _ = x.shape
        h = self.units
        m = mask.astype(np.float64)[:, :, None]

        if train and self.dropout > 0:
            keep = (rng.random((b, self.input_dim)) >= self.dropout).astype(np.float64)
            drop_scale = keep / (1.0 - self.dropout)
        else:
            drop_scale = np.ones((b, self.input_dim))

        Wx, Wh, bias = self.params["Wx"], self.params["Wh"], self.params["b"]
        h_prev = np.zeros((b, h))
        c_prev = np.zeros((b, h))
        steps = []
        seq = np.zeros((b, t_len, h))
        for t in range(t_len):
            xt = x[:, t, :] * drop_scale
            z = xt @ Wx + h_prev @ Wh + bias
            i = _sigmoid(z[:, :h])
            f = _sigmoid(z[:, h: 2 * h])
            g = np.tanh(z[:, 2 * h: 3 * h])
            o = _sigmoid(z[:, 3 * h:])
            c_new = f * c_prev + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            mt = m[:, t, :]
            h_cur = mt * h_new + (1 - mt) * h_prev
            c_cur = mt * c_new + (1 - mt) * c_prev
            seq[:, t, :] = mt * h_new
            steps.append((xt, h_prev, c_prev, i, f, g, o, tanh_c, mt))
            h_prev, c_prev = h_cur, c_cur

        self._cache = (steps, drop_scale, x.shape)
        if self.return_sequences:
            return seq, mask
        return h_prev, None

    def backward(self, dy):
        if self._cache is None:
            raise StaleCacheError("LSTM backward without cached forward")
        steps, drop_scale, x_shape = self._cache
        b, t_len, _ = x_shape
        h = self.units
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros_like(self.params["b"])
        dx = np.zeros(x_shape)

        if self.return_sequences:
            dh_acc = np.zeros((b, h))
        else:
            dh_acc = dy
        dc_acc = np.zeros((b, h))

        for t in range(t_len - 1, -1, -1):
            xt, h_prev, c_prev, i, f, g, o, tanh_c, mt = steps[t]
            dy_t = dy[:, t, :] if self.return_sequences else 0.0
            g_h_new = mt * (dh_acc + dy_t)
            g_c_new = mt * dc_acc + g_h_new * o * (1.0 - tanh_c ** 2)

            do = g_h_new * tanh_c
            df = g_c_new * c_prev
            di = g_c_new * g
            dg = g_c_new * i

            dz = np.concatenate([
                di * i * (1 - i),
                df * f * (1 - f),
                dg * (1 - g ** 2),
                do * o * (1 - o),
            ], axis=1)

            dWx += xt.T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t, :] = (dz @ Wx.T) * drop_scale
            dh_acc = dz @ Wh.T + (1 - mt) * dh_acc
            dc_acc = g_c_new * f + (1 - mt) * dc_acc

        self.grads["Wx"] = dWx
        self.grads["Wh"] = dWh
        self.grads["b"] = db
        self._cache = None
        return dx


class BatchNorm:
    """Feature-wise batch normalization over batch (and unmasked time) axes.

    Running statistics use momentum 0.9: desk-scale training sees a few
    thousand optimizer steps at most, and slower tracking leaves inference
    statistics stale enough to shift the decision threshold.
    """

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-3):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._cache = None
        self._collecting = False
        self._acc = None

    def start_collect(self):
        """Begin re-estimating running statistics from full-dataset passes."""
        self._collecting = True
        self._acc = [0, np.zeros(self.dim), np.zeros(self.dim)]  # n, sum, sumsq

    def finish_collect(self):
        n, total, total_sq = self._acc
        if n > 0:
            mean = total / n
            self.running_mean = mean
            self.running_var = total_sq / n - mean * mean
        self._collecting = False
        self._acc = None

    def forward(self, x, mask, train=False, rng=None):
        if x.shape[-1] != self.dim:
            raise ShapeMismatchError(f"BatchNorm dim {self.dim}, got {x.shape}")
        is_seq = x.ndim == 3
        if is_seq:
            sel = mask.astype(bool)
            rows = x[sel]                       # (N, dim) unmasked positions
        else:
            sel = None
            rows = x
        if train or self._collecting:
            mean = rows.mean(axis=0)
            var = rows.var(axis=0)
            if self._collecting:
                self._acc[0] += len(rows)
                self._acc[1] += rows.sum(axis=0)
                self._acc[2] += (rows * rows).sum(axis=0)
            else:
                self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
                self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        y = self.params["gamma"] * x_hat + self.params["beta"]
        if is_seq:
            y = y * mask.astype(np.float64)[:, :, None]
        self._cache = (x_hat, inv_std, sel, is_seq, train, len(rows))
        return y, mask

    def backward(self, dy):
        if self._cache is None:
            raise StaleCacheError("BatchNorm backward without cached forward")
        x_hat, inv_std, sel, is_seq, train, n = self._cache
        gamma = self.params["gamma"]
        if is_seq:
            dy = dy * sel[:, :, None]
            d_rows = dy[sel]
            xh_rows = x_hat[sel]
        else:
            d_rows = dy
            xh_rows = x_hat
        self.grads["gamma"] = (d_rows * xh_rows).sum(axis=0)
        self.grads["beta"] = d_rows.sum(axis=0)
        if not train:
            dx = dy * gamma * inv_std
            if is_seq:
                dx = dx * sel[:, :, None]
            self._cache = None
            return dx
        mean_dy = d_rows.mean(axis=0)
        mean_dy_xhat = (d_rows * xh_rows).mean(axis=0)
        dx = gamma * inv_std * (dy - mean_dy - x_hat * mean_dy_xhat)
        if is_seq:
            dx = dx * sel[:, :, None]
        self._cache = None
        return dx


class Dense:
    """Fully connected layer on (B, D) vectors with relu/sigmoid/linear activation."""

    def __init__(self, input_dim: int, units: int, activation: str = "linear",
                 rng: np.random.Generator | None = None):
        if activation not in ("relu", "sigmoid", "linear"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.input_dim = input_dim
        self.units = units
        self.activation = activation
        self.params = {
            "W": _fan_in_uniform(rng, (input_dim, units), input_dim),
            "b": np.zeros(units),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def forward(self, x, mask, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatchError(
                f"Dense expects (B, {self.input_dim}), got {x.shape}")
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            y = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            y = _sigmoid(z)
        else:
            y = z
        self._cache = (x, z, y)
        return y, None

    def backward(self, dy):
        if self._cache is None:
            raise StaleCacheError("Dense backward without cached forward")
        x, z, y = self._cache
        if self.activation == "relu":
            dz = dy * (z > 0)
        elif self.activation == "sigmoid":
            dz = dy * y * (1.0 - y)
        else:
            dz = dy
        self.grads["W"] = x.T @ dz
        self.grads["b"] = dz.sum(axis=0)
        self._cache = None
        return dz @ self.params["W"].T


class Dropout:
    """Inverted dropout; identity at inference."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, mask, train=False, rng=None):
        if train and self.rate > 0:
            keep = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        else:
            keep = np.ones_like(x)
        self._cache = keep
        return x * keep, mask

    def backward(self, dy):
        if self._cache is None:
            raise StaleCacheError("Dropout backward without cached forward")
        keep = self._cache
        self._cache = None
        return dy * keep


class SelfAttention:
    """Additive self-attention pooling a sequence into one context vector.

    Per step: e_t = v . tanh(W h_t + b); weights are the masked softmax of
    e and the context is the weight-averaged hidden sequence. The last
    computed weights stay available for explainability.
    """

    def __init__(self, dim: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.params = {
            "W": _fan_in_uniform(rng, (dim, dim), dim),
            "b": np.zeros(dim),
            "v": _fan_in_uniform(rng, (dim,), dim),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None
        self.last_weights = None

    def forward(self, x, mask, train=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.dim:
            raise ShapeMismatchError(
                f"SelfAttention expects (B, T, {self.dim}), got {x.shape}")
        u = np.tanh(x @ self.params["W"] + self.params["b"])
        e = u @ self.params["v"]
        e = np.where(mask, e, -np.inf)
        e_max = e.max(axis=1, keepdims=True)
        exp = np.exp(e - e_max)
        exp = np.where(mask, exp, 0.0)
        alpha = exp / exp.sum(axis=1, keepdims=True)
        context = np.einsum("bt,bth->bh", alpha, x)
        self._cache = (x, u, alpha)
        self.last_weights = alpha
        return context, None

    def backward(self, dy):
        if self._cache is None:
            raise StaleCacheError("SelfAttention backward without cached forward")
        x, u, alpha = self._cache
        dalpha = np.einsum("bh,bth->bt", dy, x)
        dx = alpha[:, :, None] * dy[:, None, :]
        de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        self.grads["v"] = np.einsum("bt,bta->a", de, u)
        du = de[:, :, None] * self.params["v"][None, None, :]
        dpre = du * (1.0 - u ** 2)
        self.grads["W"] = np.einsum("bth,bta->ha", x, dpre)
        self.grads["b"] = dpre.sum(axis=(0, 1))
        dx += dpre @ self.params["W"].T
        self._cache = None
        return dx
