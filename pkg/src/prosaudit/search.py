"""Randomized search over the four pitch-analysis cost parameters.

Stage one sweeps a coarse grid over (silence_threshold, octave_cost,
octave_jump_cost, voiced_unvoiced_cost) and flags cells whose feature
extraction misbehaves (errors, non-finite values, or no voiced content at
all). Stage two samples uniform random points inside the surviving cells,
trains the 64/32/32 reference model per point, and returns the point with
the lowest validation EER.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import AudioBuffer
from .errors import EmptyDataError, NoValidRegionError, ProsauditError
from .features import extract_features
from .neural import TrainConfig, preset, train
from .pitch import PitchParams

SEARCHED = ("silence_threshold", "octave_cost", "octave_jump_cost",
            "voiced_unvoiced_cost")

TRIAL_CSV_HEADER = ("trial,silence_threshold,octave_cost,octave_jump_cost,"
                    "voiced_unvoiced_cost,eer")


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    silence_threshold: float
    octave_cost: float
    octave_jump_cost: float
    voiced_unvoiced_cost: float
    eer: float


def trial_log_csv(records) -> str:
    lines = [TRIAL_CSV_HEADER]
    for r in records:
        lines.append(f"{r.trial},{r.silence_threshold!r},{r.octave_cost!r},"
                     f"{r.octave_jump_cost!r},{r.voiced_unvoiced_cost!r},{r.eer!r}")
    return "\n".join(lines) + "\n"


def _with_point(base: PitchParams, point: dict) -> PitchParams:
    return replace(base, **point)


def _cell_is_valid(corpus, params: PitchParams, window_ms: int) -> bool:
    any_voiced = False
    for buffer, _ in corpus:
        try:
            seq = extract_features(buffer, params, window_ms)
        except ProsauditError:
            return False
        if not np.all(np.isfinite(seq.windows)):
            return False
        if len(seq) and np.any(seq.windows[:, 0] > 0):
            any_voiced = True
    return any_voiced


def _split_corpus(corpus, rng: np.random.Generator):
    by_class: dict[str, list] = {}
    for item in corpus:
        by_class.setdefault(item[1], []).append(item)
    if len(by_class) < 2:
        raise EmptyDataError("parameter search needs both classes")
    train_items, val_items = [], []
    for label in sorted(by_class):
        items = by_class[label]
        order = rng.permutation(len(items))
        half = max(1, len(items) // 2)
        train_items += [items[i] for i in order[half:]]
        val_items += [items[i] for i in order[:half]]
    return train_items, val_items


def parameter_search(corpus: list[tuple[AudioBuffer, str]], bounds: dict,
                     budget: int, seed: int, *, grid_points: int = 4,
                     train_config: TrainConfig | None = None,
                     window_ms: int = 100,
                     base_params: PitchParams | None = None):
    """Best PitchParams by validation EER, plus the full trial log.

    `bounds` maps each searched parameter name to its (lo, hi) range.
    Deterministic for a given seed: the grid, the sampled points, the
    train/validation split and every trial's training are all seeded.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    missing = [k for k in SEARCHED if k not in bounds]
    if missing:
        raise ValueError(f"bounds missing {missing}")
    base = base_params or PitchParams()
    tc = train_config or TrainConfig(epochs=40, learning_rate=0.001, batch_size=16)

    lows = np.array([bounds[k][0] for k in SEARCHED])
    highs = np.array([bounds[k][1] for k in SEARCHED])

    # stage 1: flag invalid grid cells (probed at cell centers)
    axes = [lows[d] + (np.arange(grid_points) + 0.5) * (highs[d] - lows[d]) / grid_points
            for d in range(len(SEARCHED))]
    valid_cells = set()
    for cell in itertools.product(range(grid_points), repeat=len(SEARCHED)):
        point = {k: float(axes[d][cell[d]]) for d, k in enumerate(SEARCHED)}
        if _cell_is_valid(corpus, _with_point(base, point), window_ms):
            valid_cells.add(cell)
    if not valid_cells:
        raise NoValidRegionError("every grid cell produced invalid features")

    # stage 2: uniform random points inside the valid region
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EA]))
    train_items, val_items = _split_corpus(corpus, rng)
    records = []
    best = None
    trial = 0
    draws = 0
    while trial < budget:
        draws += 1
        if draws > 100000:
            raise NoValidRegionError("rejection sampling failed to hit valid cells")
        u = rng.uniform(lows, highs)
        cell = tuple(np.minimum(((u - lows) / (highs - lows) * grid_points).astype(int),
                                grid_points - 1))
        if cell not in valid_cells:
            continue
        point = {k: float(u[d]) for d, k in enumerate(SEARCHED)}
        params = _with_point(base, point)
        train_seqs = [extract_features(b, params, window_ms, label=l)
                      for b, l in train_items]
        val_seqs = [extract_features(b, params, window_ms, label=l)
                    for b, l in val_items]
        result = train(preset("A"), train_seqs, val_seqs,
                       replace(tc, seed=np.random.SeedSequence([seed, trial]).generate_state(1)[0] % (2**31)),
                       window_ms=window_ms)
        eer_value = min(h["val_eer"] for h in result.history)
        records.append(TrialRecord(trial, point["silence_threshold"],
                                   point["octave_cost"], point["octave_jump_cost"],
                                   point["voiced_unvoiced_cost"], float(eer_value)))
        if best is None or eer_value < best[0]:
            best = (eer_value, params)
        trial += 1
    return best[1], records
