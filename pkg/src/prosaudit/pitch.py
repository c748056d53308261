"""Autocorrelation pitch tracking with dynamic-programming path finding.

Per frame, candidate periods come from local maxima of the lag-normalized
autocorrelation of the windowed signal, refined by parabolic interpolation.
A Viterbi pass then picks the per-frame candidate (voiced frequency or the
unvoiced candidate) that maximizes total candidate strength minus octave-jump
and voiced/unvoiced transition costs. The path step is deliberately discrete:
no gradient flows from the input waveform to the chosen F0 sequence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .audio_io import AudioBuffer
from .errors import BufferTooShortError, EmptyInputError

_ENERGY_FLOOR = 1e-30


@dataclass(frozen=True)
class PitchParams:
    """Analysis parameters for F0 extraction.

    min_f0/max_f0 bound the search range in Hz. The four costs/thresholds
    (silence_threshold, octave_cost, octave_jump_cost, voiced_unvoiced_cost)
    are the searched parameters and must lie in (0, 1).
    """

    min_f0: float = 75.0
    max_f0: float = 500.0
    time_step: float = 0.01
    silence_threshold: float = 0.03
    voicing_threshold: float = 0.45
    octave_cost: float = 0.01
    octave_jump_cost: float = 0.35
    voiced_unvoiced_cost: float = 0.14
    max_candidates: int = 15

    def __post_init__(self):
        if not 0 < self.min_f0 < self.max_f0:
            raise ValueError("need 0 < min_f0 < max_f0")
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        for name in ("silence_threshold", "octave_cost",
                     "octave_jump_cost", "voiced_unvoiced_cost"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.max_candidates < 2:
            raise ValueError("max_candidates must be at least 2")

    @property
    def window_seconds(self) -> float:
        """Analysis window covers three periods of the lowest pitch."""
        return 3.0 / self.min_f0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PitchParams":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class PitchCandidate:
    """One per-frame hypothesis: frequency in Hz (0 = unvoiced) and strength."""

    frequency: float
    strength: float


@dataclass(frozen=True)
class PitchTrack:
    """Chosen F0 per frame (0 encodes unvoiced) plus the full candidate lattice."""

    frame_times: np.ndarray
    frames: list
    path: np.ndarray
    f0: np.ndarray

    def __post_init__(self):
        n = len(self.frame_times)
        if not (len(self.frames) == len(self.path) == len(self.f0) == n):
            raise ValueError("frame_times, frames, path and f0 must align")

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0


def _frame_grid(n_samples: int, sample_rate: int, params: PitchParams):
    """Mid-centered frame grid: centers in seconds, full windows only."""
    duration = n_samples / sample_rate
    window = params.window_seconds
    if duration < window:
        raise BufferTooShortError(
            f"buffer of {duration:.4f}s shorter than the {window:.4f}s analysis window"
        )
    n_frames = int(math.floor((duration - window) / params.time_step)) + 1
    t0 = (duration - (n_frames - 1) * params.time_step) / 2.0
    return t0 + params.time_step * np.arange(n_frames)


def _window_autocorrelation(window: np.ndarray, n_fft: int, max_lag: int) -> np.ndarray:
    spec = np.fft.rfft(window, n_fft)
    acf = np.fft.irfft(spec * np.conj(spec), n_fft)[: max_lag + 2]
    return acf / acf[0]


def frame_candidates(buffer: AudioBuffer, params: PitchParams):
    """Per-frame pitch candidates from short-term autocorrelation.

    Returns (frame_times, frames) where frames[t] is a list of
    PitchCandidate sorted strongest first. Each frame always contains the
    unvoiced candidate, whose strength grows as the frame's local peak
    falls below silence_threshold relative to the signal's global peak.
    """
    samples = np.asarray(buffer.samples, dtype=np.float64)
    fs = buffer.sample_rate
    frame_times = _frame_grid(len(samples), fs, params)

    win_len = int(round(params.window_seconds * fs))
    win_len = min(win_len, len(samples))
    lag_min = max(2, int(math.floor(fs / params.max_f0)))
    lag_max = int(math.ceil(fs / params.min_f0))
    lag_max = min(lag_max, win_len - 2)
    n_fft = 1 << int(np.ceil(np.log2(win_len + lag_max + 2)))

    window = np.hanning(win_len)
    r_w = _window_autocorrelation(window, n_fft, lag_max)

    starts = np.round(frame_times * fs - win_len / 2.0).astype(int)
    starts = np.clip(starts, 0, len(samples) - win_len)
    rows = samples[starts[:, None] + np.arange(win_len)[None, :]]
    rows = rows - rows.mean(axis=1, keepdims=True)
    local_peaks = np.max(np.abs(rows), axis=1)

    spec = np.fft.rfft(rows * window, n_fft)
    acf = np.fft.irfft(spec * np.conj(spec), n_fft)[:, : lag_max + 2]

    global_peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    silence_ref = params.silence_threshold / (1.0 + params.voicing_threshold)

    frames = []
    for i in range(len(frame_times)):
        a0 = acf[i, 0]
        peak_ratio = local_peaks[i] / global_peak if global_peak > 0 else 0.0
        unvoiced_strength = params.voicing_threshold + max(
            0.0, 2.0 - peak_ratio / silence_ref
        )
        candidates = [PitchCandidate(0.0, unvoiced_strength)]
        if a0 > _ENERGY_FLOOR and local_peaks[i] > 0:
            r = (acf[i] / a0) / r_w
            candidates.extend(_voiced_candidates(r, lag_min, lag_max, fs, params))
        candidates.sort(key=lambda c: -c.strength)
        if len(candidates) > params.max_candidates:
            kept = candidates[: params.max_candidates]
            if all(c.frequency != 0.0 for c in kept):
                # The unvoiced candidate must survive truncation.
                kept[-1] = next(c for c in candidates if c.frequency == 0.0)
                kept.sort(key=lambda c: -c.strength)
            candidates = kept
        frames.append(candidates)
    return frame_times, frames


def _voiced_candidates(r, lag_min, lag_max, fs, params):
    out = []
    lo = max(lag_min, 2)
    for lag in range(lo, lag_max + 1):
        if r[lag] > r[lag - 1] and r[lag] >= r[lag + 1]:
            denom = r[lag - 1] - 2.0 * r[lag] + r[lag + 1]
            if denom < 0:
                shift = 0.5 * (r[lag - 1] - r[lag + 1]) / denom
                shift = float(np.clip(shift, -0.5, 0.5))
            else:
                shift = 0.0
            refined_lag = lag + shift
            refined_r = r[lag] - 0.25 * (r[lag - 1] - r[lag + 1]) * shift
            if refined_r <= 0:
                continue
            freq = fs / refined_lag
            freq = min(max(freq, params.min_f0), params.max_f0)
            strength = refined_r - params.octave_cost * math.log2(
                params.min_f0 * refined_lag / fs
            )
            out.append(PitchCandidate(float(freq), float(strength)))
    return out


def _transition_cost(prev: PitchCandidate, cur: PitchCandidate, params: PitchParams) -> float:
    prev_voiced = prev.frequency > 0
    cur_voiced = cur.frequency > 0
    if prev_voiced and cur_voiced:
        return params.octave_jump_cost * abs(math.log2(prev.frequency / cur.frequency))
    if prev_voiced != cur_voiced:
        return params.voiced_unvoiced_cost
    return 0.0


def viterbi_path(frames, params: PitchParams, time_step: float | None = None) -> np.ndarray:
    """Globally optimal candidate index per frame.

    Maximizes the sum of candidate strengths minus transition costs:
    voiced_unvoiced_cost for a voiced/unvoiced change,
    octave_jump_cost * |log2(f_prev/f_cur)| between voiced candidates, and
    zero between unvoiced ones. Score ties resolve to the lower candidate
    index (candidates are sorted strongest first).
    """
    if not frames:
        raise EmptyInputError("viterbi_path needs at least one frame")
    for t, cands in enumerate(frames):
        if not cands:
            raise EmptyInputError(f"frame {t} has no candidates")

    score = np.array([c.strength for c in frames[0]], dtype=np.float64)
    back: list[np.ndarray] = []
    for t in range(1, len(frames)):
        prev_cands = frames[t - 1]
        cur_cands = frames[t]
        new_score = np.empty(len(cur_cands))
        pointers = np.empty(len(cur_cands), dtype=int)
        for j, cur in enumerate(cur_cands):
            best_i = 0
            best = -np.inf
            for i, prev in enumerate(prev_cands):
                total = score[i] - _transition_cost(prev, cur, params)
                if total > best:
                    best = total
                    best_i = i
            new_score[j] = best + cur.strength
            pointers[j] = best_i
        score = new_score
        back.append(pointers)

    path = np.empty(len(frames), dtype=int)
    path[-1] = int(np.argmax(score))
    for t in range(len(frames) - 2, -1, -1):
        path[t] = back[t][path[t + 1]]
    return path


def track_pitch(buffer: AudioBuffer, params: PitchParams | None = None) -> PitchTrack:
    """Full pitch analysis: candidate generation plus Viterbi path selection."""
    params = params or PitchParams()
    frame_times, frames = frame_candidates(buffer, params)
    path = viterbi_path(frames, params, params.time_step)
    f0 = np.array([frames[t][path[t]].frequency for t in range(len(frames))])
    return PitchTrack(frame_times=frame_times, frames=frames, path=path, f0=f0)
