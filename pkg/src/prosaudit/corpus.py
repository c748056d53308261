"""Deterministic synthetic speech-like corpus for desk-scale experiments.

Two classes are synthesized cycle by cycle so the ground truth of the
prosody features is controlled directly:

* bonafide-like: wandering F0 contour, per-cycle period jitter around
  0.5-1%, amplitude shimmer around 2-5%, audible breath noise.
* deepfake-like: flat F0 contour, near-zero cycle jitter and shimmer,
  nearly clean signal (much higher HNR).

Utterances alternate voiced syllables and low-level gaps, which gives the
windowed features voiced/unvoiced variety and keeps the amplitude
distribution speech-like enough for blind SNR estimation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer, write_wav

PEAK_LEVEL = 0.85
_F0_LOW, _F0_HIGH = 85.0, 320.0

_SPLITS = ("train", "val", "eval")
_CLASSES = ("bonafide", "deepfake")
_PROTOCOL_LABEL = {"bonafide": "bonafide", "deepfake": "spoof"}


@dataclass(frozen=True)
class CorpusSpec:
    """Counts per class and split, plus clip duration range and sample rate."""

    train_per_class: int = 200
    val_per_class: int = 50
    eval_per_class: int = 50
    duration_range: tuple[float, float] = (1.0, 1.8)
    sample_rate: int = 16000

    def count(self, split: str) -> int:
        return {"train": self.train_per_class, "val": self.val_per_class,
                "eval": self.eval_per_class}[split]


@dataclass(frozen=True)
class UtteranceProfile:
    duration: float
    f0_start: float
    walk_sigma: float        # Hz drift per cycle
    jitter_frac: float       # per-cycle period perturbation
    shimmer_frac: float      # per-cycle amplitude perturbation
    noise_snr_db: float      # voiced rms over breath-noise rms
    harmonic_rolloff: float
    n_harmonics: int


def _sample_profile(rng: np.random.Generator, klass: str,
                    duration_range: tuple[float, float]) -> UtteranceProfile:
    duration = float(rng.uniform(*duration_range))
    f0_start = float(rng.uniform(95.0, 260.0))
    if klass == "bonafide":
        return UtteranceProfile(
            duration=duration, f0_start=f0_start,
            walk_sigma=float(rng.uniform(1.5, 3.5)),
            jitter_frac=float(rng.uniform(0.005, 0.010)),
            shimmer_frac=float(rng.uniform(0.02, 0.05)),
            noise_snr_db=float(rng.uniform(32.0, 38.0)),
            harmonic_rolloff=float(rng.uniform(0.6, 1.1)),
            n_harmonics=int(rng.integers(5, 8)),
        )
    return UtteranceProfile(
        duration=duration, f0_start=f0_start,
        walk_sigma=float(rng.uniform(0.0, 0.3)),
        jitter_frac=float(rng.uniform(0.0, 0.0005)),
        shimmer_frac=float(rng.uniform(0.0, 0.005)),
        noise_snr_db=float(rng.uniform(42.0, 48.0)),
        harmonic_rolloff=float(rng.uniform(0.6, 1.1)),
        n_harmonics=int(rng.integers(5, 8)),
    )


def _synth_syllable(rng: np.random.Generator, profile: UtteranceProfile,
                    f0: float, n_samples: int, fs: int,
                    weights: np.ndarray, phases: np.ndarray):
    """One voiced stretch, cycle by cycle. Returns (samples, final f0)."""
    # plan glottal cycles covering the stretch
    periods = []
    amps = []
    t = 0.0
    while t < n_samples / fs:
        z = float(np.clip(rng.standard_normal(), -2.5, 2.5))
        period = (1.0 / f0) * (1.0 + profile.jitter_frac * z)
        za = float(np.clip(rng.standard_normal(), -2.5, 2.5))
        amps.append(1.0 + profile.shimmer_frac * za)
        periods.append(period)
        t += period
        f0 = float(np.clip(f0 + rng.normal(0.0, profile.walk_sigma), _F0_LOW, _F0_HIGH))

    starts = np.concatenate([[0.0], np.cumsum(periods)[:-1]])
    tt = np.arange(n_samples) / fs
    cycle = np.searchsorted(starts, tt, side="right") - 1
    local_phase = (tt - starts[cycle]) / np.asarray(periods)[cycle]
    amp = np.asarray(amps)[cycle]

    h = np.arange(1, profile.n_harmonics + 1)
    wave = (weights[None, :] * np.sin(2.0 * np.pi * local_phase[:, None] * h[None, :]
                                      + phases[None, :])).sum(axis=1)
    wave *= amp

    # raised-cosine onset/offset plus a slow loudness wobble
    attack = min(n_samples // 3, int(rng.uniform(0.02, 0.04) * fs))
    release = min(n_samples // 3, int(rng.uniform(0.03, 0.06) * fs))
    env = np.ones(n_samples)
    if attack > 0:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release > 0:
        env[n_samples - release:] = 0.5 + 0.5 * np.cos(
            np.pi * np.arange(release) / release)
    wobble_hz = rng.uniform(1.5, 4.0)
    wobble_phase = rng.uniform(0.0, 2.0 * np.pi)
    env *= 1.0 + 0.06 * np.sin(2.0 * np.pi * wobble_hz * tt + wobble_phase)
    return wave * env, f0


def synthesize_utterance(profile: UtteranceProfile, sample_rate: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Full clip: syllables separated by gaps, plus breath noise, peak 0.85."""
    fs = sample_rate
    n_total = int(round(profile.duration * fs))
    signal = np.zeros(n_total)

    h = np.arange(1, profile.n_harmonics + 1, dtype=float)
    weights = h ** (-profile.harmonic_rolloff)
    weights /= np.abs(weights).sum()
    phases = rng.uniform(0.0, 2.0 * np.pi, size=profile.n_harmonics)

    f0 = profile.f0_start
    pos = int(rng.uniform(0.02, 0.06) * fs)
    while pos < n_total - int(0.10 * fs):
        syl_len = int(rng.uniform(0.15, 0.35) * fs)
        syl_len = min(syl_len, n_total - pos)
        chunk, f0 = _synth_syllable(rng, profile, f0, syl_len, fs, weights, phases)
        signal[pos: pos + syl_len] = chunk
        pos += syl_len + int(rng.uniform(0.05, 0.12) * fs)

    voiced = signal[np.abs(signal) > 0]
    voiced_rms = float(np.sqrt(np.mean(voiced ** 2))) if len(voiced) else 1.0
    noise_rms = voiced_rms * 10.0 ** (-profile.noise_snr_db / 20.0)
    signal = signal + rng.normal(0.0, noise_rms, size=n_total)

    peak = float(np.max(np.abs(signal)))
    return signal * (PEAK_LEVEL / peak) if peak > 0 else signal


def _utterance_rng(seed: int, split: str, klass: str, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, _SPLITS.index(split) + 1,
                               _CLASSES.index(klass) + 1, index])
    )


def generate_buffers(spec: CorpusSpec, seed: int):
    """In-memory corpus: {split: [(AudioBuffer, label), ...]}, fully seeded."""
    out = {}
    for split in _SPLITS:
        items = []
        for klass in _CLASSES:
            for i in range(spec.count(split)):
                rng = _utterance_rng(seed, split, klass, i)
                profile = _sample_profile(rng, klass, spec.duration_range)
                samples = synthesize_utterance(profile, spec.sample_rate, rng)
                uid = f"{split}_{klass}_{i:04d}"
                items.append((AudioBuffer(samples, spec.sample_rate, uid), klass))
        out[split] = items
    return out


def generate_corpus(spec: CorpusSpec, seed: int, out_dir: str) -> dict:
    """Write WAVs and per-split protocol files; byte-identical per seed.

    Returns {split: protocol_path}. Protocol lines use the on-disk label
    vocabulary (bonafide / spoof).
    """
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    protocols = {}
    for split, items in generate_buffers(spec, seed).items():
        proto_path = os.path.join(out_dir, f"protocol_{split}.txt")
        with open(proto_path, "w", encoding="utf-8", newline="") as fh:
            for buffer, klass in items:
                rel = f"wav/{buffer.source_id}.wav"
                write_wav(os.path.join(out_dir, rel), buffer)
                fh.write(f"{buffer.source_id} {rel} {_PROTOCOL_LABEL[klass]}\n")
        protocols[split] = proto_path
    return protocols
