"""Glottal pulse extraction and voice-quality measures.

Jitter and shimmer operate on the point process of pulse times/amplitudes;
harmonicity (HNR) comes from the peak of a cross-correlation-normalized
autocorrelation, one period per window. The scalar formulas are written as
plain ascending loops so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .errors import FrameTooShortError, InsufficientPeriodsError
from .pitch import PitchParams, PitchTrack, _frame_grid

_R_CEIL = 1.0 - 1e-9
_R_FLOOR = 1e-15


@dataclass(frozen=True)
class PointProcess:
    """Glottal pulse instants (seconds, strictly increasing) and |amplitude| at each."""

    pulse_times: np.ndarray
    pulse_amplitudes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.pulse_times, dtype=np.float64)
        a = np.asarray(self.pulse_amplitudes, dtype=np.float64)
        if len(t) != len(a):
            raise ValueError("pulse_times and pulse_amplitudes must align")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("pulse_times must be strictly increasing")
        object.__setattr__(self, "pulse_times", t)
        object.__setattr__(self, "pulse_amplitudes", a)

    def __len__(self) -> int:
        return len(self.pulse_times)


@dataclass(frozen=True)
class HarmonicityTrack:
    """Per-frame HNR in dB for voiced frames on the pitch analysis grid."""

    frame_times: np.ndarray
    hnr_db: np.ndarray

    def __post_init__(self):
        if len(self.frame_times) != len(self.hnr_db):
            raise ValueError("frame_times and hnr_db must align")
        if len(self.hnr_db) and not np.all(np.isfinite(self.hnr_db)):
            raise ValueError("hnr_db must be finite")


def _voiced_runs(track: PitchTrack):
    runs = []
    start = None
    for i, f in enumerate(track.f0):
        if f > 0 and start is None:
            start = i
        elif f <= 0 and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(track.f0) - 1))
    return runs


def _peak_index(samples: np.ndarray, fs: int, t_lo: float, t_hi: float,
                polarity: float = 0.0) -> int | None:
    """Index of the extremum in [t_lo, t_hi]; signed when polarity is set."""
    lo = max(0, int(math.ceil(t_lo * fs)))
    hi = min(len(samples) - 1, int(math.floor(t_hi * fs)))
    if hi < lo:
        return None
    seg = samples[lo: hi + 1]
    if polarity:
        return lo + int(np.argmax(polarity * seg))
    return lo + int(np.argmax(np.abs(seg)))


def extract_pulses(buffer: AudioBuffer, track: PitchTrack) -> PointProcess:
    """Place one pulse per glottal cycle by F0-guided peak picking.

    Within each maximal voiced run the first pulse seeds at the absolute
    peak of one local period around the run's first frame; subsequent
    pulses sit at the extremum of the seed's polarity inside a window of
    width 1.25/f0 centered one local period away from the previous pulse,
    marching both directions. Keeping the seed polarity pins one pulse per
    cycle (plain |x| peaks would alternate between crests and troughs of
    symmetric waveforms). No voiced frames yields an empty point process.
    """
    samples = np.asarray(buffer.samples, dtype=np.float64)
    fs = buffer.sample_rate
    duration = len(samples) / fs
    half_step = track.frame_times[1] - track.frame_times[0] if len(track.frame_times) > 1 else 0.01
    half_step /= 2.0

    all_indices: list[int] = []
    for first, last in _voiced_runs(track):
        run_times = track.frame_times[first: last + 1]
        run_f0 = track.f0[first: last + 1]
        t_start = max(0.0, run_times[0] - half_step)
        t_end = min(duration, run_times[-1] + half_step)

        def local_period(t: float) -> float:
            return 1.0 / float(np.interp(t, run_times, run_f0))

        seed_T = 1.0 / run_f0[0]
        seed = _peak_index(samples, fs, run_times[0] - seed_T / 2, run_times[0] + seed_T / 2)
        if seed is None:
            continue
        polarity = 1.0 if samples[seed] >= 0 else -1.0
        run_indices = [seed]

        for direction in (+1, -1):
            t = seed / fs
            while True:
                T = local_period(t)
                center = t + direction * T
                if not (t_start <= center <= t_end):
                    break
                idx = _peak_index(samples, fs, center - 0.625 * T, center + 0.625 * T,
                                  polarity)
                if idx is None:
                    break
                if direction > 0:
                    run_indices.append(idx)
                else:
                    run_indices.insert(0, idx)
                t = idx / fs

        all_indices.extend(run_indices)

    if not all_indices:
        return PointProcess(np.empty(0), np.empty(0))
    order = np.array(sorted(set(all_indices)), dtype=int)
    times = order / fs + _subsample_shift(samples, order) / fs
    return PointProcess(times, np.abs(samples[order]))


def _subsample_shift(samples: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Parabolic peak-time refinement; keeps period jitter below the sample grid."""
    shifts = np.zeros(len(indices))
    for k, i in enumerate(indices):
        if 0 < i < len(samples) - 1:
            a, b, c = samples[i - 1], samples[i], samples[i + 1]
            denom = a - 2.0 * b + c
            if denom != 0.0:
                shifts[k] = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return shifts


def period_runs(pp: PointProcess, min_f0: float, max_f0: float,
                max_period_factor: float = 1.3) -> list[np.ndarray]:
    """Runs of consecutive retained period indices.

    Period i spans pulses i..i+1. Periods outside [1/max_f0, 1/min_f0]
    are dropped; a retained period pair whose duration ratio exceeds
    max_period_factor splits its run, so the pair never forms a jitter
    interval.
    """
    if len(pp) < 2:
        return []
    durations = np.diff(pp.pulse_times)
    in_range = (durations >= 1.0 / max_f0) & (durations <= 1.0 / min_f0)
    runs: list[list[int]] = []
    current: list[int] = []
    for i, ok in enumerate(in_range):
        if not ok:
            if current:
                runs.append(current)
                current = []
            continue
        if current:
            prev = durations[current[-1]]
            ratio = max(prev, durations[i]) / min(prev, durations[i])
            if current[-1] != i - 1 or ratio > max_period_factor:
                runs.append(current)
                current = []
        current.append(i)
    if current:
        runs.append(current)
    return [np.array(r, dtype=int) for r in runs]


def periods(pp: PointProcess, min_f0: float, max_f0: float,
            max_period_factor: float = 1.3) -> list[np.ndarray]:
    """Retained period durations T_i, grouped into runs of consecutive periods."""
    return [np.diff(pp.pulse_times)[run] for run in
            period_runs(pp, min_f0, max_f0, max_period_factor)]


def jitter_local_absolute(period_seq) -> float:
    """Mean absolute difference between consecutive periods, in seconds."""
    t = [float(x) for x in period_seq]
    n = len(t)
    if n < 2:
        raise InsufficientPeriodsError("jitter needs at least two periods")
    total = 0.0
    for i in range(n - 1):
        total += abs(t[i] - t[i + 1])
    return total / (n - 1)


def jitter_local(period_seq) -> float:
    """Mean absolute consecutive-period difference over the mean period, in percent."""
    t = [float(x) for x in period_seq]
    n = len(t)
    if n < 2:
        raise InsufficientPeriodsError("jitter needs at least two periods")
    mean = 0.0
    for x in t:
        mean += x
    mean /= n
    return jitter_local_absolute(t) / mean * 100.0


def shimmer_local(amplitude_seq) -> float:
    """Mean absolute consecutive-amplitude difference over the mean amplitude, percent."""
    a = [float(x) for x in amplitude_seq]
    n = len(a)
    if n < 2:
        raise InsufficientPeriodsError("shimmer needs at least two amplitudes")
    diff = 0.0
    for i in range(n - 1):
        diff += abs(a[i] - a[i + 1])
    diff /= (n - 1)
    mean = 0.0
    for x in a:
        mean += x
    mean /= n
    return diff / mean * 100.0


def hnr_frame(frame: np.ndarray, min_f0: float, max_f0: float, sample_rate: int,
              voicing_threshold: float = 0.45) -> float | None:
    """Harmonics-to-noise ratio of one frame in dB, or None when unvoiced.

    r is the peak of the lag-normalized autocorrelation over the candidate
    period range (cross-correlation style: each lag normalized by the
    energies of the two overlapping segments), parabolic-refined and
    clamped into (0, 1). The periodic share of the energy is r, the noise
    share 1 - r, so HNR = 10*log10(r / (1 - r)).
    """
    x = np.asarray(frame, dtype=np.float64)
    fs = sample_rate
    min_len = int(math.ceil(2.0 / min_f0 * fs))
    if len(x) < min_len:
        raise FrameTooShortError(
            f"harmonicity frame needs {min_len} samples, got {len(x)}"
        )
    x = x - x.mean()
    energy = np.cumsum(x * x)
    total = energy[-1]
    if total <= 0:
        return None

    lag_lo = max(1, int(math.floor(fs / max_f0)))
    lag_hi = min(len(x) - 2, int(math.ceil(fs / min_f0)))
    n_fft = 1 << int(np.ceil(np.log2(len(x) + lag_hi + 2)))
    spec = np.fft.rfft(x, n_fft)
    acf = np.fft.irfft(spec * np.conj(spec), n_fft)[: lag_hi + 2]

    lags = np.arange(lag_lo, lag_hi + 2)
    head = energy[len(x) - lags - 1]          # energy of x[0 .. L-1-lag]
    tail = total - energy[lags - 1]           # energy of x[lag .. L-1]
    denom = np.sqrt(np.maximum(head * tail, _R_FLOOR))
    r = acf[lag_lo: lag_hi + 2] / denom

    k = int(np.argmax(r[: lag_hi + 1 - lag_lo]))
    lag = lag_lo + k
    r_best = r[k]
    if lag_lo < lag < lag_hi:
        rm, r0, rp = r[k - 1], r[k], r[k + 1]
        curv = rm - 2.0 * r0 + rp
        if curv < 0:
            shift = float(np.clip(0.5 * (rm - rp) / curv, -0.5, 0.5))
            r_best = r0 - 0.25 * (rm - rp) * shift
    r_best = float(np.clip(r_best, _R_FLOOR, _R_CEIL))
    if r_best < voicing_threshold:
        return None
    return 10.0 * math.log10(r_best / (1.0 - r_best))


def hnr_track(buffer: AudioBuffer, params: PitchParams | None = None) -> HarmonicityTrack:
    """HNR per frame on the pitch analysis grid; unvoiced frames carry no value."""
    params = params or PitchParams()
    samples = np.asarray(buffer.samples, dtype=np.float64)
    fs = buffer.sample_rate
    grid = _frame_grid(len(samples), fs, params)
    frame_len = int(math.ceil(2.0 / params.min_f0 * fs))

    times = []
    values = []
    for t in grid:
        start = int(round(t * fs - frame_len / 2.0))
        if start < 0 or start + frame_len > len(samples):
            continue
        value = hnr_frame(samples[start: start + frame_len], params.min_f0,
                          params.max_f0, fs, params.voicing_threshold)
        if value is not None:
            times.append(float(t))
            values.append(value)
    return HarmonicityTrack(np.array(times), np.array(values))


def dump_track_csv(path: str, track: PitchTrack, harmonicity: HarmonicityTrack) -> None:
    """Per-frame diagnostics: time, chosen f0, HNR (empty when unvoiced)."""
    hnr_at = {round(t, 9): v for t, v in zip(harmonicity.frame_times, harmonicity.hnr_db)}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("time,f0,hnr_db\n")
        for t, f0 in zip(track.frame_times, track.f0):
            hnr = hnr_at.get(round(float(t), 9))
            fh.write(f"{float(t)!r},{float(f0)!r},{'' if hnr is None else repr(hnr)}\n")
