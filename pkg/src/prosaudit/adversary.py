"""Iterative least-likely L-inf attacks and the robustness cross-evaluation.

The attack descends the surrogate's loss toward a target label with
fixed-size sign steps, clipping every iterate to the epsilon ball around
the original waveform and to [-1, 1]. The prosody model never yields an
input gradient (Viterbi path finding and pulse peak picking are discrete),
so it can only be evaluated on, not attacked with, these samples; the
cross-evaluation measures exactly that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .errors import NotTrainedError
from .neural.train import ModelBundle, predict_file
from .pitch import PitchParams
from .surrogate import SurrogateBundle, score_and_gradient
from .wada import wada_snr

DEFAULT_EPSILONS = (0.001, 0.0015, 0.002, 0.0025, 0.005)

ROBUSTNESS_CSV_HEADER = (
    "epsilon,n,surrogate_acc,prosody_acc,mean_steps,success_rate,mean_wada_snr_db"
)


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float = 0.001
    max_steps: int = 100

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.epsilon > 0 and self.alpha > self.epsilon:
            raise ValueError("alpha must not exceed epsilon")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class AttackEntry:
    adversarial: np.ndarray
    steps: int
    success: bool
    linf: float
    wada_snr_db: float


@dataclass
class AttackResult:
    entries: list[AttackEntry] = field(default_factory=list)

    @property
    def mean_steps(self) -> float:
        return float(np.mean([e.steps for e in self.entries]))

    @property
    def success_rate(self) -> float:
        return float(np.mean([e.success for e in self.entries]))


def illm_attack(surrogate: SurrogateBundle, samples: np.ndarray,
                cfg: AttackConfig, target: int | None = None,
                sample_rate: int = 16000) -> AttackEntry:
    """Attack one waveform; target defaults to the least-likely class.

    For a binary head the least-likely class is the opposite of the
    current hard prediction. Success means the surrogate's decision equals
    the target, checked before the first step and after each one; a failed
    attack reports max_steps. Each step moves the score toward the target
    (loss descent), then clips to the epsilon ball and to [-1, 1].
    """
    if not surrogate.trained:
        raise NotTrainedError("surrogate must be trained before attacking")
    x0 = np.asarray(samples, dtype=np.float64)
    if target is None:
        target = 1 - surrogate.predict(x0)
    lo = np.maximum(x0 - cfg.epsilon, -1.0)
    hi = np.minimum(x0 + cfg.epsilon, 1.0)

    x = x0.copy()
    steps = 0
    success = False
    while steps < cfg.max_steps:
        prob, grad = score_and_gradient(surrogate, x, float(target))
        if int(prob >= 0.5) == target:
            success = True
            break
        stepped = np.clip(x - cfg.alpha * np.sign(grad), lo, hi)
        steps += 1
        if np.array_equal(stepped, x):
            # exact fixed point: every further iterate is identical, so the
            # outcome equals running out the step budget
            steps = cfg.max_steps
            break
        x = stepped
    if not success:
        success = surrogate.predict(x) == target

    return AttackEntry(
        adversarial=x,
        steps=steps,
        success=bool(success),
        linf=float(np.max(np.abs(x - x0))) if len(x) else 0.0,
        wada_snr_db=wada_snr(AudioBuffer(x, sample_rate, "adv")),
    )


def fgsm_step(surrogate: SurrogateBundle, samples: np.ndarray, label: float,
              epsilon: float) -> np.ndarray:
    """Single ascent step of size epsilon on the loss at `label`, clipped to [-1, 1]."""
    if not surrogate.trained:
        raise NotTrainedError("surrogate must be trained before attacking")
    x = np.asarray(samples, dtype=np.float64)
    grad = input_gradient(surrogate, x, float(label))
    return np.clip(x + epsilon * np.sign(grad), -1.0, 1.0)


@dataclass
class RobustnessRow:
    epsilon: float
    n: int
    surrogate_acc: float
    prosody_acc: float
    mean_steps: float
    success_rate: float
    mean_wada_snr_db: float

    def to_csv(self) -> str:
        return ",".join([
            repr(self.epsilon), str(self.n), repr(self.surrogate_acc),
            repr(self.prosody_acc), repr(self.mean_steps),
            repr(self.success_rate), repr(self.mean_wada_snr_db),
        ])


@dataclass
class RobustnessReport:
    rows: list[RobustnessRow]
    adversarial: dict          # epsilon -> list[(AudioBuffer, label)]
    clean_surrogate_acc: float
    clean_prosody_acc: float

    def to_csv(self) -> str:
        return ROBUSTNESS_CSV_HEADER + "\n" + "".join(
            row.to_csv() + "\n" for row in self.rows)


_LABEL_TARGET = {"bonafide": 0, "deepfake": 1}


def cross_evaluate(prosody_bundle: ModelBundle, surrogate: SurrogateBundle,
                   clean_set: list[tuple[AudioBuffer, str]],
                   epsilons=DEFAULT_EPSILONS, alpha: float = 0.001,
                   max_steps: int = 100,
                   pitch_params: PitchParams | None = None) -> RobustnessReport:
    """Attack the surrogate per epsilon, then score both models on the results.

    Attack targets flip the true label (the adversarial goal of making the
    detector wrong); for correctly classified clips this coincides with
    the least-likely class. Accuracies are measured against the true
    labels on the identical adversarial waveforms.
    """
    pitch_params = pitch_params or PitchParams()
    truths = np.array([_LABEL_TARGET[label] for _, label in clean_set])

    sur_clean = np.array([surrogate.predict(b.samples) for b, _ in clean_set])
    pros_clean = np.array([
        1 if predict_file(prosody_bundle, b, pitch_params)[0] >= 0.5 else 0
        for b, _ in clean_set
    ])
    clean_surrogate_acc = float(np.mean(sur_clean == truths))
    clean_prosody_acc = float(np.mean(pros_clean == truths))

    rows = []
    adversarial = {}
    for eps in epsilons:
        cfg = AttackConfig(epsilon=float(eps), alpha=min(alpha, eps) if eps > 0 else alpha,
                           max_steps=max_steps)
        entries = []
        adv_buffers = []
        for (buffer, label), truth in zip(clean_set, truths):
            entry = illm_attack(surrogate, buffer.samples, cfg,
                                target=1 - int(truth), sample_rate=buffer.sample_rate)
            entries.append(entry)
            adv_buffers.append((AudioBuffer(entry.adversarial, buffer.sample_rate,
                                            buffer.source_id), label))
        sur_pred = np.array([surrogate.predict(b.samples) for b, _ in adv_buffers])
        pros_pred = np.array([
            1 if predict_file(prosody_bundle, b, pitch_params)[0] >= 0.5 else 0
            for b, _ in adv_buffers
        ])
        rows.append(RobustnessRow(
            epsilon=float(eps),
            n=len(entries),
            surrogate_acc=float(np.mean(sur_pred == truths)),
            prosody_acc=float(np.mean(pros_pred == truths)),
            mean_steps=float(np.mean([e.steps for e in entries])),
            success_rate=float(np.mean([e.success for e in entries])),
            mean_wada_snr_db=float(np.mean([e.wada_snr_db for e in entries])),
        ))
        adversarial[float(eps)] = adv_buffers
    return RobustnessReport(rows, adversarial, clean_surrogate_acc, clean_prosody_acc)
