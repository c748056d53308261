"""Prosody-based audio deepfake detection toolkit.

Six classical prosody features (mean/std F0, local jitter, local shimmer,
mean/std HNR) feed small LSTM classifiers; the pitch path is discrete by
construction, which is what the adversarial experiments probe.
"""

__version__ = "0.1.0"

from .audio_io import AudioBuffer, peak_normalize, read_wav, write_wav
from .pitch import (PitchCandidate, PitchParams, PitchTrack, frame_candidates,
                    track_pitch, viterbi_path)
from .voice_quality import (HarmonicityTrack, PointProcess, extract_pulses,
                            hnr_frame, hnr_track, jitter_local,
                            jitter_local_absolute, periods, shimmer_local)
from .features import (FeatureSequence, ProsodyWindowVector, ProtocolEntry,
                       ScalerParams, apply_scaler, extract_features,
                       fit_scaler, load_protocol, pad_batch)
from .corpus import CorpusSpec, generate_buffers, generate_corpus
from .metrics import MetricsReport, ScoredTrial, auroc, confusion_metrics, eer, evaluate
from .neural import (ModelBundle, ModelConfig, TrainConfig, attention_variant,
                     bce_loss, predict_file, preset, train)
