"""Small differentiable raw-waveform detector used as the attack target.

A fixed windowed-sinc bandpass filterbank (mel-spaced band edges, the
front end used by raw-waveform spoof detectors) feeds trainable strided
1-D convolution blocks, masked global pooling, and a sigmoid head. The
pooling concatenates per-channel mean activations with log mean-squared
activations; the energy branch is what makes low-level noise floors
visible, since band energies add while mean responses are dominated by
the harmonic carrier. Every operation from waveform to score is
differentiable, so input gradients exist everywhere; this is the
counterpart the gradient attack needs (the prosody path has no such
gradient by construction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .errors import EmptyDataError, NotTrainedError, ShapeMismatchError
from .neural.layers import Dense, _fan_in_uniform
from .neural.model import bce_grad, bce_loss
from .neural.optim import adam_init, adam_step
from .neural.train import TrainConfig

SURROGATE_FORMAT_VERSION = 2
SINC_BANDS = 24
SINC_KERNEL = 129
SINC_STRIDE = 16
SINC_FMIN_HZ = 60.0
SINC_FMAX_HZ = 7600.0
SINC_SAMPLE_RATE = 16000
CONV_BLOCKS = ((16, 9, 4), (32, 9, 4))  # (channels, kernel, stride)


def _mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _inv_mel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def _sinc_filters() -> np.ndarray:
    """(SINC_BANDS, SINC_KERNEL) Hamming-windowed bandpass impulse responses."""
    edges_hz = _inv_mel(np.linspace(_mel(SINC_FMIN_HZ), _mel(SINC_FMAX_HZ),
                                    SINC_BANDS + 1))
    m = np.arange(SINC_KERNEL) - (SINC_KERNEL - 1) // 2
    window = np.hamming(SINC_KERNEL)
    safe_m = np.where(m == 0, 1, m)
    filters = np.empty((SINC_BANDS, SINC_KERNEL))
    for c, (lo, hi) in enumerate(zip(edges_hz[:-1], edges_hz[1:])):
        f1, f2 = lo / SINC_SAMPLE_RATE, hi / SINC_SAMPLE_RATE
        high = np.where(m == 0, 2.0 * f2, np.sin(2.0 * np.pi * f2 * m) / (np.pi * safe_m))
        low = np.where(m == 0, 2.0 * f1, np.sin(2.0 * np.pi * f1 * m) / (np.pi * safe_m))
        filters[c] = (high - low) * window
    return filters


class _SincFrontEnd:
    """Fixed filterbank: (B, L) -> (B, SINC_BANDS, L_out), stride 16.

    Computed as a windowed matmul over a strided view: only every 16th
    correlation lag is needed, so the time-domain form does a fraction of
    the work an FFT convolution would.
    """

    def __init__(self):
        self.filters = _sinc_filters()

    def out_length(self, length):
        return np.maximum(0, (length - SINC_KERNEL) // SINC_STRIDE + 1)

    def _windows(self, x: np.ndarray, l_out: int) -> np.ndarray:
        b, l = x.shape
        sb, sl = x.strides
        return np.lib.stride_tricks.as_strided(
            x, shape=(b, l_out, SINC_KERNEL),
            strides=(sb, SINC_STRIDE * sl, sl), writeable=False)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x)
        l_out = int(self.out_length(np.array([x.shape[1]]))[0])
        windows = self._windows(x, l_out)
        self._in_len = x.shape[1]
        return np.matmul(windows, self.filters.T).transpose(0, 2, 1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, c, l_out = dy.shape
        dx = np.zeros((b, self._in_len))
        per_tap = np.matmul(self.filters.T[None, :, :], dy)  # (B, K, L_out)
        for j in range(SINC_KERNEL):
            dx[:, j: j + SINC_STRIDE * l_out: SINC_STRIDE] += per_tap[:, j, :]
        return dx


class _Conv1d:
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 rng: np.random.Generator):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride = kernel, stride
        self.params = {
            "W": _fan_in_uniform(rng, (out_ch, in_ch, kernel), in_ch * kernel),
            "b": np.zeros(out_ch),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def out_length(self, length):
        return np.maximum(0, (length - self.kernel) // self.stride + 1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, l = x.shape
        if c != self.in_ch:
            raise ShapeMismatchError(f"conv expects {self.in_ch} channels, got {c}")
        l_out = (l - self.kernel) // self.stride + 1
        w = self.params["W"]
        y = np.zeros((b, self.out_ch, l_out))
        for j in range(self.kernel):
            xs = x[:, :, j: j + self.stride * l_out: self.stride]
            y += np.matmul(w[:, :, j], xs)
        y += self.params["b"][None, :, None]
        relu = y > 0
        self._cache = (x, relu, l_out)
        return y * relu

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, relu, l_out = self._cache
        dy = dy * relu
        w = self.params["W"]
        dx = np.zeros_like(x)
        dW = np.zeros_like(w)
        for j in range(self.kernel):
            xs = x[:, :, j: j + self.stride * l_out: self.stride]
            dW[:, :, j] = np.matmul(dy, xs.transpose(0, 2, 1)).sum(axis=0)
            dx[:, :, j: j + self.stride * l_out: self.stride] += np.matmul(
                w[:, :, j].T, dy)
        self.grads["W"] = dW
        self.grads["b"] = dy.sum(axis=(0, 2))
        self._cache = None
        return dx


class SurrogateModel:
    """Sinc filterbank -> conv blocks -> masked global pooling -> Dense(1, sigmoid).

    The head sees three pooled groups: per-channel mean and log-energy of
    the conv stack, plus the log-energies of the filterbank bands
    themselves. The band branch carries level cues (noise floors) that
    random conv mixing would bury under the harmonic carrier.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A1]))
        self.front = _SincFrontEnd()
        self.convs = []
        in_ch = SINC_BANDS
        for out_ch, kernel, stride in CONV_BLOCKS:
            self.convs.append(_Conv1d(in_ch, out_ch, kernel, stride, rng))
            in_ch = out_ch
        self.head = Dense(2 * in_ch + SINC_BANDS, 1, "sigmoid", rng=rng)
        self._pool_eps = 1e-12
        # feature standardization constants, set from training data
        self.pool_shift = np.zeros(2 * in_ch + SINC_BANDS)
        self.pool_scale = np.ones(2 * in_ch + SINC_BANDS)
        self._cache = None

    @property
    def min_input_length(self) -> int:
        need = 1
        for _, kernel, stride in reversed(CONV_BLOCKS):
            need = (need - 1) * stride + kernel
        return (need - 1) * SINC_STRIDE + SINC_KERNEL

    def forward(self, batch: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Probabilities (B,) for zero-padded waveforms with valid lengths."""
        if batch.ndim != 2:
            raise ShapeMismatchError(f"expected (B, L) waveforms, got {batch.shape}")
        bands = self.front.forward(np.asarray(batch, dtype=np.float64))
        band_valid = self.front.out_length(np.asarray(lengths, dtype=int))
        return self.forward_bands(bands, band_valid)

    def forward_bands(self, bands: np.ndarray, band_valid: np.ndarray) -> np.ndarray:
        """Forward from precomputed filterbank outputs (training fast path)."""
        x = bands
        valid = np.asarray(band_valid, dtype=int)
        bt = np.arange(bands.shape[2])
        band_mask = (bt[None, :] < valid[:, None])[:, None, :]
        band_sq = ((bands * bands) * band_mask).sum(axis=2) / valid[:, None]

        for conv in self.convs:
            x = conv.forward(x)
            valid = conv.out_length(valid)
        if np.any(valid < 1):
            raise ShapeMismatchError(
                f"waveform shorter than the receptive field ({self.min_input_length})")
        t = np.arange(x.shape[2])
        pool_mask = (t[None, :] < valid[:, None])[:, None, :]
        mean_act = (x * pool_mask).sum(axis=2) / valid[:, None]
        mean_sq = ((x * x) * pool_mask).sum(axis=2) / valid[:, None]
        pooled = np.concatenate([
            mean_act,
            np.log(mean_sq + self._pool_eps),
            np.log(band_sq + self._pool_eps),
        ], axis=1)
        normalized = (pooled - self.pool_shift) / self.pool_scale
        probs, _ = self.head.forward(normalized, None)
        self._cache = (x, pool_mask, valid, mean_sq,
                       bands, band_mask, np.asarray(band_valid, dtype=int), band_sq)
        return probs[:, 0]

    def backward_bands(self, dprobs: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the filterbank outputs (B, C, T)."""
        if self._cache is None:
            raise NotTrainedError("backward without cached forward")
        x, pool_mask, valid, mean_sq, bands, band_mask, band_valid, band_sq = self._cache
        dpooled = self.head.backward(np.asarray(dprobs)[:, None]) / self.pool_scale
        c = x.shape[1]
        d_mean = dpooled[:, :c]
        d_logsq = dpooled[:, c: 2 * c]
        d_band = dpooled[:, 2 * c:]

        dx = (d_mean[:, :, None] * pool_mask) / valid[:, None, None]
        dx += (d_logsq / (mean_sq + self._pool_eps))[:, :, None] * (
            2.0 * x * pool_mask) / valid[:, None, None]
        for conv in reversed(self.convs):
            dx = conv.backward(dx)

        dbands = dx + (d_band / (band_sq + self._pool_eps))[:, :, None] * (
            2.0 * bands * band_mask) / band_valid[:, None, None]
        self._cache = None
        return dbands

    def backward(self, dprobs: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the input waveforms (B, L)."""
        return self.front.backward(self.backward_bands(dprobs))

    def pooled_raw(self, bands: np.ndarray, band_valid: np.ndarray) -> np.ndarray:
        """Unnormalized pooled feature vectors (stats pass for standardization)."""
        x = bands
        valid = np.asarray(band_valid, dtype=int)
        bt = np.arange(bands.shape[2])
        band_mask = (bt[None, :] < valid[:, None])[:, None, :]
        band_sq = ((bands * bands) * band_mask).sum(axis=2) / valid[:, None]
        for conv in self.convs:
            x = conv.forward(x)
            valid = conv.out_length(valid)
        t = np.arange(x.shape[2])
        pool_mask = (t[None, :] < valid[:, None])[:, None, :]
        mean_act = (x * pool_mask).sum(axis=2) / valid[:, None]
        mean_sq = ((x * x) * pool_mask).sum(axis=2) / valid[:, None]
        for conv in self.convs:
            conv._cache = None
        return np.concatenate([
            mean_act,
            np.log(mean_sq + self._pool_eps),
            np.log(band_sq + self._pool_eps),
        ], axis=1)

    def parameters(self):
        out = []
        for i, conv in enumerate(self.convs):
            for key in sorted(conv.params):
                out.append((f"conv{i}/{key}", conv, key))
        for key in sorted(self.head.params):
            out.append((f"head/{key}", self.head, key))
        return out

    def get_weights(self) -> dict:
        return {name: layer.params[key].copy() for name, layer, key in self.parameters()}

    def set_weights(self, weights: dict) -> None:
        for name, layer, key in self.parameters():
            layer.params[key] = np.array(weights[name], dtype=np.float64)


@dataclass
class SurrogateBundle:
    """Trained surrogate with its seed and held-out accuracy."""

    model: SurrogateModel
    seed: int
    heldout_accuracy: float = float("nan")
    trained: bool = False

    def score(self, samples: np.ndarray) -> float:
        x = np.asarray(samples, dtype=np.float64)[None, :]
        prob = float(self.model.forward(x, np.array([x.shape[1]]))[0])
        self.model._cache = None
        return prob

    def predict(self, samples: np.ndarray) -> int:
        return int(self.score(samples) >= 0.5)

    def to_json(self) -> str:
        weights = {name: {"shape": list(w.shape), "data": w.ravel().tolist()}
                   for name, w in self.model.get_weights().items()}
        return json.dumps({
            "format_version": SURROGATE_FORMAT_VERSION,
            "conv_blocks": [list(b) for b in CONV_BLOCKS],
            "sinc": {"bands": SINC_BANDS, "kernel": SINC_KERNEL,
                     "stride": SINC_STRIDE},
            "weights": weights,
            "pool_shift": self.model.pool_shift.tolist(),
            "pool_scale": self.model.pool_scale.tolist(),
            "seed": self.seed,
            "heldout_accuracy": self.heldout_accuracy,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SurrogateBundle":
        doc = json.loads(text)
        if doc.get("format_version") != SURROGATE_FORMAT_VERSION:
            raise ValueError("unsupported surrogate bundle version")
        if [tuple(b) for b in doc["conv_blocks"]] != list(CONV_BLOCKS):
            raise ValueError("conv architecture mismatch")
        model = SurrogateModel(seed=doc["seed"])
        model.set_weights({name: np.array(item["data"]).reshape(item["shape"])
                           for name, item in doc["weights"].items()})
        model.pool_shift = np.array(doc["pool_shift"], dtype=np.float64)
        model.pool_scale = np.array(doc["pool_scale"], dtype=np.float64)
        return cls(model, doc["seed"], doc["heldout_accuracy"], trained=True)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "SurrogateBundle":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


_LABEL_TARGET = {"bonafide": 0.0, "deepfake": 1.0}


def _pad_bands(items: list[tuple[np.ndarray, int]]):
    """Stack per-clip (C, T) filterbank outputs with trailing zero padding."""
    valid = np.array([v for _, v in items])
    t_max = int(valid.max())
    batch = np.zeros((len(items), items[0][0].shape[0], t_max))
    for i, (bands, v) in enumerate(items):
        batch[i, :, :v] = bands[:, :v]
    return batch, valid


def train_surrogate(corpus: list[tuple[AudioBuffer, str]],
                    tc: TrainConfig | None = None,
                    heldout_fraction: float = 0.2) -> SurrogateBundle:
    """Seeded ADAM training on raw waveforms with a stratified held-out split.

    The filterbank is fixed, so its outputs are precomputed once per clip
    and training iterates over the trainable stack only.
    """
    tc = tc or TrainConfig(epochs=10, learning_rate=0.001, batch_size=16)
    if not corpus:
        raise EmptyDataError("surrogate training corpus is empty")

    rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 0x5A2]))
    by_class: dict[str, list] = {}
    for item in corpus:
        by_class.setdefault(item[1], []).append(item)
    train_items, held_items = [], []
    for label in sorted(by_class):
        items = by_class[label]
        order = rng.permutation(len(items))
        cut = max(1, int(round(len(items) * heldout_fraction)))
        held_items += [items[i] for i in order[:cut]]
        train_items += [items[i] for i in order[cut:]]
    if not train_items or not held_items:
        raise EmptyDataError("corpus too small for a held-out split")

    model = SurrogateModel(seed=tc.seed)

    def bands_of(buffer: AudioBuffer):
        out = model.front.forward(np.asarray(buffer.samples)[None, :])[0]
        return out, int(model.front.out_length(np.array([len(buffer.samples)]))[0])

    train_bands = [bands_of(b) for b, _ in train_items]
    held_bands = [bands_of(b) for b, _ in held_items]

    stats_batch, stats_valid = _pad_bands(train_bands)
    pooled = model.pooled_raw(stats_batch, stats_valid)
    model.pool_shift = pooled.mean(axis=0)
    model.pool_scale = pooled.std(axis=0) + 1e-6

    weights = {name: layer.params[key] for name, layer, key in model.parameters()}
    state = adam_init(weights)
    targets = np.array([_LABEL_TARGET[label] for _, label in train_items])

    step = 0
    for _ in range(tc.epochs):
        perm = rng.permutation(len(train_items))
        for start in range(0, len(train_items), tc.batch_size):
            idx = perm[start: start + tc.batch_size]
            batch, valid = _pad_bands([train_bands[i] for i in idx])
            probs = model.forward_bands(batch, valid)
            model.backward_bands(bce_grad(probs, targets[idx]))
            grads = {name: layer.grads[key] for name, layer, key in model.parameters()}
            step += 1
            adam_step(weights, grads, state, step, tc)

    batch, valid = _pad_bands(held_bands)
    held_probs = model.forward_bands(batch, valid)
    model._cache = None
    held_targets = np.array([_LABEL_TARGET[label] for _, label in held_items])
    accuracy = float(np.mean((held_probs >= 0.5) == (held_targets == 1.0)))
    return SurrogateBundle(model, tc.seed, heldout_accuracy=accuracy, trained=True)


def score_and_gradient(bundle: SurrogateBundle, samples: np.ndarray,
                       target: float) -> tuple[float, np.ndarray]:
    """Score plus the loss gradient toward `target`, from one forward pass."""
    if not bundle.trained:
        raise NotTrainedError("surrogate must be trained before taking gradients")
    x = np.asarray(samples, dtype=np.float64)[None, :]
    lengths = np.array([x.shape[1]])
    probs = bundle.model.forward(x, lengths)
    grad = bce_grad(probs, np.array([target]))
    return float(probs[0]), bundle.model.backward(grad)[0]


def input_gradient(bundle: SurrogateBundle, samples: np.ndarray,
                   target: float) -> np.ndarray:
    """Gradient of the binary cross-entropy toward `target` w.r.t. the waveform."""
    return score_and_gradient(bundle, samples, target)[1]


def surrogate_loss(bundle: SurrogateBundle, samples: np.ndarray, target: float) -> float:
    x = np.asarray(samples, dtype=np.float64)[None, :]
    probs = bundle.model.forward(x, np.array([x.shape[1]]))
    bundle.model._cache = None
    return bce_loss(probs, np.array([target]))
