"""Model-ready prosody features: windowed 6-vectors, scaling, batching, protocols.

Each non-overlapping window yields (mean F0, std F0, local jitter %, local
shimmer %, mean HNR, std HNR) computed from the file-level pitch track,
point process, and harmonicity track. Windows without voiced support are
all zeros, as are individual statistics with insufficient support.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .audio_io import AudioBuffer
from .errors import (
    EmptyInputError,
    EmptyTrainingSetError,
    MixedWindowSizesError,
    NotFittedError,
    ProtocolParseError,
    UnknownLabelError,
)
from .pitch import PitchParams, track_pitch
from .voice_quality import extract_pulses, hnr_track, period_runs

WINDOW_MS_CHOICES = (50, 100, 200, 500)
DEFAULT_WINDOW_MS = 100
FEATURE_NAMES = ("mean_f0", "std_f0", "jitter", "shimmer", "mean_hnr", "std_hnr")
N_FEATURES = len(FEATURE_NAMES)

FEATURE_CSV_HEADER = "window_index,mean_f0,std_f0,jitter,shimmer,mean_hnr,std_hnr"


class ProsodyWindowVector(NamedTuple):
    mean_f0: float
    std_f0: float
    jitter_local: float
    shimmer_local: float
    mean_hnr: float
    std_hnr: float


@dataclass(frozen=True)
class FeatureSequence:
    """Ordered per-window feature vectors for one utterance."""

    utterance_id: str
    label: str                  # bonafide | deepfake | unknown
    windows: np.ndarray         # (n_windows, 6) float64
    window_ms: int

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64).reshape(-1, N_FEATURES)
        object.__setattr__(self, "windows", w)
        if self.window_ms not in WINDOW_MS_CHOICES:
            raise ValueError(f"window_ms must be one of {WINDOW_MS_CHOICES}")
        if self.label not in ("bonafide", "deepfake", "unknown"):
            raise ValueError(f"unknown label {self.label!r}")

    def __len__(self) -> int:
        return len(self.windows)

    def window_vectors(self):
        return [ProsodyWindowVector(*row) for row in self.windows]


@dataclass(frozen=True)
class ProtocolEntry:
    utterance_id: str
    path: str
    label: str


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature min/max fitted on training windows only."""

    mins: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    maxs: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    fitted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=np.float64))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=np.float64))
        if self.fitted and np.any(self.maxs < self.mins):
            raise ValueError("max must be >= min per feature")

    def to_json(self) -> str:
        return json.dumps({"mins": self.mins.tolist(), "maxs": self.maxs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        obj = json.loads(text)
        return cls(np.array(obj["mins"]), np.array(obj["maxs"]), fitted=True)


def _window_stats(values: np.ndarray) -> tuple[float, float]:
    if len(values) == 0:
        return 0.0, 0.0
    # population std: a single value has spread 0
    return float(np.mean(values)), float(np.std(values))


def extract_features(buffer: AudioBuffer, params: PitchParams | None = None,
                     window_ms: int = DEFAULT_WINDOW_MS,
                     label: str = "unknown") -> FeatureSequence:
    """Windowed prosody features for one utterance.

    Pitch, pulses and HNR are computed once per file. Per window: F0 stats
    over voiced pitch frames whose center falls in the window; jitter and
    shimmer over retained periods whose starting pulse falls in the window
    (consecutive pairs never cross run boundaries); HNR stats over voiced
    harmonicity frames in the window.
    """
    params = params or PitchParams()
    if window_ms not in WINDOW_MS_CHOICES:
        raise ValueError(f"window_ms must be one of {WINDOW_MS_CHOICES}")
    track = track_pitch(buffer, params)
    pulses = extract_pulses(buffer, track)
    harm = hnr_track(buffer, params)
    runs = period_runs(pulses, params.min_f0, params.max_f0)

    window_s = window_ms / 1000.0
    n_windows = int(math.ceil(buffer.duration / window_s))
    rows = np.zeros((n_windows, N_FEATURES))

    voiced = track.f0 > 0
    pitch_windows = np.floor(track.frame_times / window_s).astype(int)
    harm_windows = np.floor(harm.frame_times / window_s).astype(int) if len(harm.frame_times) else np.empty(0, int)

    durations = np.diff(pulses.pulse_times) if len(pulses) > 1 else np.empty(0)
    run_window: list[np.ndarray] = []
    for run in runs:
        run_window.append(np.floor(pulses.pulse_times[run] / window_s).astype(int))

    for w in range(n_windows):
        f0_here = track.f0[voiced & (pitch_windows == w)]
        rows[w, 0], rows[w, 1] = _window_stats(f0_here)

        periods_here: list[np.ndarray] = []
        amps_here: list[np.ndarray] = []
        for run, run_w in zip(runs, run_window):
            inside = run[run_w == w]
            if len(inside):
                periods_here.append(durations[inside])
                amps_here.append(pulses.pulse_amplitudes[inside])
        rows[w, 2] = _multi_run_jitter(periods_here)
        rows[w, 3] = _multi_run_shimmer(amps_here)

        hnr_here = harm.hnr_db[harm_windows == w] if len(harm_windows) else np.empty(0)
        rows[w, 4], rows[w, 5] = _window_stats(hnr_here)

    return FeatureSequence(buffer.source_id, label, rows, window_ms)


def _multi_run_jitter(period_runs_: list[np.ndarray]) -> float:
    diffs = 0.0
    pairs = 0
    total = 0.0
    count = 0
    for run in period_runs_:
        for i in range(len(run) - 1):
            diffs += abs(float(run[i]) - float(run[i + 1]))
            pairs += 1
        for x in run:
            total += float(x)
            count += 1
    if pairs == 0 or count == 0 or total == 0.0:
        return 0.0
    return (diffs / pairs) / (total / count) * 100.0


def _multi_run_shimmer(amp_runs: list[np.ndarray]) -> float:
    diffs = 0.0
    pairs = 0
    total = 0.0
    count = 0
    for run in amp_runs:
        for i in range(len(run) - 1):
            diffs += abs(float(run[i]) - float(run[i + 1]))
            pairs += 1
        for x in run:
            total += float(x)
            count += 1
    if pairs == 0 or count == 0 or total == 0.0:
        return 0.0
    return (diffs / pairs) / (total / count) * 100.0


def fit_scaler(train: Iterable[FeatureSequence]) -> ScalerParams:
    """Per-feature min/max over every window of the training sequences."""
    stacks = [seq.windows for seq in train if len(seq)]
    if not stacks:
        raise EmptyTrainingSetError("no training windows to fit the scaler on")
    allw = np.vstack(stacks)
    return ScalerParams(allw.min(axis=0), allw.max(axis=0), fitted=True)


def apply_scaler(seq: FeatureSequence, sp: ScalerParams) -> FeatureSequence:
    """Min-max scale into [0, 1]; degenerate features map to 0, outliers clamp."""
    if not sp.fitted:
        raise NotFittedError("scaler must be fitted before apply")
    span = sp.maxs - sp.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (seq.windows - sp.mins) / safe
    scaled = np.where(span > 0, scaled, 0.0)
    scaled = np.clip(scaled, 0.0, 1.0)
    return replace(seq, windows=scaled)


def pad_batch(seqs: list[FeatureSequence]):
    """Stack sequences into (B, T_max, 6) with trailing zero padding and a mask."""
    if not seqs:
        raise EmptyInputError("pad_batch needs at least one sequence")
    sizes = {seq.window_ms for seq in seqs}
    if len(sizes) > 1:
        raise MixedWindowSizesError(f"mixed window sizes in batch: {sorted(sizes)}")
    t_max = max(len(seq) for seq in seqs)
    batch = np.zeros((len(seqs), t_max, N_FEATURES))
    mask = np.zeros((len(seqs), t_max), dtype=bool)
    for i, seq in enumerate(seqs):
        batch[i, : len(seq)] = seq.windows
        mask[i, : len(seq)] = True
    return batch, mask


_LABEL_MAP = {"bonafide": "bonafide", "spoof": "deepfake"}


def load_protocol(path: str) -> list[ProtocolEntry]:
    """Parse `utterance_id relative_path label` lines; labels bonafide|spoof."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ProtocolParseError(f"expected 3 fields, got {len(parts)}", lineno)
            uid, rel, label = parts
            if label not in _LABEL_MAP:
                raise UnknownLabelError(f"line {lineno}: label {label!r}")
            entries.append(ProtocolEntry(uid, rel, _LABEL_MAP[label]))
    return entries


def write_feature_csv(path: str, seq: FeatureSequence) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(FEATURE_CSV_HEADER + "\n")
        for i, row in enumerate(seq.windows):
            fh.write(str(i) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_feature_csv(path: str, utterance_id: str, label: str,
                     window_ms: int) -> FeatureSequence:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != FEATURE_CSV_HEADER:
            raise ProtocolParseError(f"bad feature header {header!r}", 1)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != N_FEATURES + 1:
                continue
            rows.append([float(v) for v in parts[1:]])
    windows = np.array(rows) if rows else np.zeros((0, N_FEATURES))
    return FeatureSequence(utterance_id, label, windows, window_ms)


def save_feature_dir(out_dir: str, seqs: list[FeatureSequence]) -> None:
    """Feature cache: one CSV per utterance plus an index with labels."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "index.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("utterance_id,label,window_ms,file\n")
        for seq in seqs:
            name = f"{seq.utterance_id}.csv"
            write_feature_csv(os.path.join(out_dir, name), seq)
            fh.write(f"{seq.utterance_id},{seq.label},{seq.window_ms},{name}\n")


def load_feature_dir(feature_dir: str) -> list[FeatureSequence]:
    seqs = []
    with open(os.path.join(feature_dir, "index.csv"), "r", encoding="utf-8") as fh:
        header = fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 4:
                continue
            uid, label, window_ms, name = parts
            seqs.append(read_feature_csv(os.path.join(feature_dir, name),
                                         uid, label, int(window_ms)))
    return seqs
