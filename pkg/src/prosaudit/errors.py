"""Exception taxonomy shared across the package.

Every error raised by prosaudit derives from :class:`ProsauditError`, so
callers (and the CLI) can distinguish data problems from genuine bugs.
"""


class ProsauditError(Exception):
    """Base class for all prosaudit errors."""


# --- audio I/O ---

class UnsupportedFormatError(ProsauditError):
    """WAV file is not 16-bit integer or 32-bit float PCM."""


class CorruptHeaderError(ProsauditError):
    """File is not a parseable RIFF/WAVE container."""


class SampleOutOfRangeError(ProsauditError):
    """A sample lies outside [-1, 1] where the contract forbids it."""


# --- pitch tracking ---

class BufferTooShortError(ProsauditError):
    """Signal shorter than one analysis window."""


class EmptyInputError(ProsauditError):
    """An operation received an empty sequence."""


class NoValidRegionError(ProsauditError):
    """Every grid cell in the parameter search produced invalid features."""


# --- voice quality ---

class InsufficientPeriodsError(ProsauditError):
    """Fewer than two periods; jitter/shimmer undefined."""


class FrameTooShortError(ProsauditError):
    """Frame shorter than the harmonicity analysis minimum."""


# --- feature pipeline ---

class EmptyTrainingSetError(ProsauditError):
    """Scaler fit requested on an empty collection."""


class NotFittedError(ProsauditError):
    """Scaler used before fitting."""


class MixedWindowSizesError(ProsauditError):
    """Batch assembly over sequences with differing window sizes."""


class ProtocolParseError(ProsauditError):
    """Malformed protocol line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnknownLabelError(ProsauditError):
    """Protocol label outside {bonafide, spoof}."""


# --- neural engine ---

class ShapeMismatchError(ProsauditError):
    """Tensor shapes inconsistent with the model configuration."""


class LengthMismatchError(ProsauditError):
    """Paired sequences of different lengths."""


class StaleCacheError(ProsauditError):
    """Backward called without a matching forward pass."""


class EmptyDataError(ProsauditError):
    """Training requested on an empty dataset."""


# --- metrics ---

class EmptyTrialsError(ProsauditError):
    """No scored trials to evaluate."""


class SingleClassError(ProsauditError):
    """EER/AUROC need both classes present."""


# --- explainability ---

class NoAttentionLayerError(ProsauditError):
    """Attention weights requested from a model without a SelfAttention layer."""


# --- adversary ---

class NotTrainedError(ProsauditError):
    """Attack requested against an untrained surrogate."""


class SilentInputError(ProsauditError):
    """WADA-SNR requested on an (effectively) all-zero signal."""
