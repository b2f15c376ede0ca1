"""Mono waveforms and 16-bit PCM WAV files.

The reader parses RIFF chunks directly so that format problems surface as
distinct, testable errors: a malformed container, an unsupported encoding
(anything but mono 16-bit PCM), or a data chunk that runs past the end of
the file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioClip",
    "WavError",
    "WavHeaderError",
    "WavEncodingError",
    "WavTruncationError",
    "read_wav",
    "write_wav",
]

_INT16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform: float64 samples (nominally in [-1, 1]) plus a sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.isfinite(samples).all():
            raise ValueError("samples contain non-finite values")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


class WavError(Exception):
    """Base class for WAV parsing problems."""


class WavHeaderError(WavError):
    """The RIFF/WAVE container is malformed."""


class WavEncodingError(WavError):
    """The file is valid WAV but not mono 16-bit PCM."""


class WavTruncationError(WavError):
    """The data chunk declares more bytes than the file contains."""


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file; samples are scaled by 1/32768."""
    with open(path, "rb") as fh:
        blob = fh.read()

    if len(blob) < 12:
        raise WavHeaderError(f"file is only {len(blob)} bytes, too short for a RIFF header")
    if blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavHeaderError("missing RIFF/WAVE signature")

    fmt = None
    data_off = data_size = None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body + 16 > len(blob):
                raise WavHeaderError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", blob, body)
        elif chunk_id == b"data":
            data_off, data_size = body, chunk_size
        # chunks are word-aligned: odd sizes carry one pad byte
        pos = body + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise WavHeaderError("no fmt chunk found")
    if data_off is None:
        raise WavHeaderError("no data chunk found")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise WavEncodingError(f"unsupported format code {audio_format}, only PCM (1) is handled")
    if channels != 1:
        raise WavEncodingError(f"unsupported channel count {channels}, only mono is handled")
    if bits != 16:
        raise WavEncodingError(f"unsupported bit depth {bits}, only 16-bit is handled")

    end = data_off + data_size
    if end > len(blob):
        raise WavTruncationError(
            f"data chunk at offset {data_off} declares {data_size} bytes "
            f"(ends at {end}) but file ends at {len(blob)}"
        )
    if data_size == 0:
        raise WavHeaderError("data chunk is empty")
    if data_size % 2:
        raise WavHeaderError(f"data chunk size {data_size} is not a multiple of the sample width")

    raw = np.frombuffer(blob[data_off:end], dtype="<i2")
    return AudioClip(raw.astype(np.float64) / _INT16_SCALE, sample_rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as mono 16-bit PCM; samples are clamped to the int16 range."""
    ints = np.clip(np.rint(clip.samples * _INT16_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, clip.sample_rate_hz,
        clip.sample_rate_hz * 2, 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
