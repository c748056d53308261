"""WAV decoding/encoding and the canonical in-memory audio form.

Only RIFF/WAVE PCM is handled: 16-bit little-endian integers and 32-bit
little-endian floats on read, 16-bit PCM mono on write. Multi-channel
input is averaged down to mono; samples always live in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptHeaderError, SampleOutOfRangeError, UnsupportedFormatError

_PCM_SCALE = 32768.0

_FORMAT_PCM = 0x0001
_FORMAT_IEEE_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signal with its sample rate and an opaque utterance id.

    Samples are float64 in [-1, 1]. `clipped_zero` flags a buffer that an
    operation (peak_normalize) passed through unchanged because it was all
    zeros.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""
    clipped_zero: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        self.samples.setflags(write=False)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path: str) -> AudioBuffer:
    """Decode a PCM WAV file into a mono AudioBuffer.

    16-bit samples are divided by 32768; 32-bit float samples are taken
    as-is. Multi-channel files are averaged across channels.

    Raises FileNotFoundError, CorruptHeaderError or UnsupportedFormatError.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeaderError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise CorruptHeaderError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise CorruptHeaderError(f"{path}: truncated data chunk")
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)
    if fmt is None or payload is None:
        raise CorruptHeaderError(f"{path}: missing fmt or data chunk")

    format_tag, n_channels, sample_rate, _, _, bits = fmt
    if format_tag == _FORMAT_EXTENSIBLE:
        # WAVE_FORMAT_EXTENSIBLE carries the real tag in the SubFormat GUID.
        raise UnsupportedFormatError(f"{path}: extensible WAV not supported")
    if n_channels < 1 or sample_rate <= 0:
        raise CorruptHeaderError(f"{path}: invalid channel count or rate")

    if format_tag == _FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / _PCM_SCALE
    elif format_tag == _FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: format tag {format_tag} / {bits}-bit not supported"
        )

    if n_channels > 1:
        usable = (len(samples) // n_channels) * n_channels
        samples = samples[:usable].reshape(-1, n_channels).mean(axis=1)
    return AudioBuffer(samples=samples, sample_rate=int(sample_rate), source_id=str(path))


def write_wav(path: str, buffer: AudioBuffer) -> None:
    """Write a buffer as 16-bit PCM mono WAV.

    Round-trip error per sample is bounded by 1/32768. Raises
    SampleOutOfRangeError if any |sample| > 1.
    """
    samples = np.asarray(buffer.samples, dtype=np.float64)
    if samples.size and np.max(np.abs(samples)) > 1.0:
        raise SampleOutOfRangeError(f"{path}: sample magnitude exceeds 1.0")
    ints = np.clip(np.round(samples * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, _FORMAT_PCM, 1, buffer.sample_rate,
        buffer.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def peak_normalize(buffer: AudioBuffer) -> AudioBuffer:
    """Scale so the largest |sample| is exactly 1; all-zero input passes through.

    The zero passthrough is flagged on the returned buffer (clipped_zero).
    """
    peak = float(np.max(np.abs(buffer.samples))) if len(buffer.samples) else 0.0
    if peak == 0.0:
        return AudioBuffer(buffer.samples, buffer.sample_rate, buffer.source_id,
                           clipped_zero=True)
    return AudioBuffer(buffer.samples / peak, buffer.sample_rate, buffer.source_id)
