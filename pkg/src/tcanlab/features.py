"""Log mel-filterbank features: 32 ms / 16 ms framing, 512-point FFT, 40 channels.

A 2-second crop of a 16 kHz clip yields a 124 x 40 matrix. Channels are
mean/variance normalized per clip by default so absolute level carries no
class information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip

__all__ = [
    "FRAME_MS",
    "HOP_MS",
    "FFT_SIZE",
    "N_FILTERS",
    "CROP_SECONDS",
    "LOG_FLOOR",
    "FeatureMatrix",
    "frame_signal",
    "hann_window",
    "power_spectrum",
    "mel_from_hz",
    "hz_from_mel",
    "mel_filterbank_matrix",
    "extract_features",
]

FRAME_MS = 32
HOP_MS = 16
FFT_SIZE = 512
N_FILTERS = 40
CROP_SECONDS = 2.0
LOG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Frames x channels log-filterbank matrix plus the framing metadata."""

    data: np.ndarray
    frame_ms: int = FRAME_MS
    hop_ms: int = HOP_MS
    fft_size: int = FFT_SIZE

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]


def frame_signal(clip: AudioClip, window_samples: int, hop_samples: int) -> np.ndarray:
    """Slice into overlapping frames [j*S, j*S + W); trailing samples are dropped."""
    if window_samples <= 0 or hop_samples <= 0:
        raise ValueError("window and hop must be positive")
    x = clip.samples
    n = x.size
    if n < window_samples:
        raise ValueError(f"clip of {n} samples is shorter than one window ({window_samples})")
    n_frames = (n - window_samples) // hop_samples + 1
    frames = np.empty((n_frames, window_samples))
    for j in range(n_frames):
        start = j * hop_samples
        frames[j] = x[start:start + window_samples]
    return frames


def hann_window(n: int) -> np.ndarray:
    # periodic form: a cosine at an exact bin frequency stays confined to
    # three DFT bins when the frame length equals the FFT size
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def power_spectrum(frame: np.ndarray, fft_size: int = FFT_SIZE) -> np.ndarray:
    """Hann-window, zero-pad to ``fft_size``, and return squared rfft magnitudes."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or frame.size > fft_size:
        raise ValueError(f"frame must be 1-D with at most {fft_size} samples")
    spectrum = np.fft.rfft(frame * hann_window(frame.size), n=fft_size)
    return (spectrum.real ** 2 + spectrum.imag ** 2)


def mel_from_hz(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def hz_from_mel(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank_matrix(n_filters: int = N_FILTERS, f_low: float = 0.0,
                          f_high: float = 8000.0, fft_size: int = FFT_SIZE,
                          sample_rate: int = 16000) -> np.ndarray:
    """Triangular filters with peaks equally spaced on the mel scale.

    Rows are filters, columns the fft_size//2 + 1 non-negative frequency
    bins; every filter's support lies strictly inside (f_low, f_high).
    """
    if not 0 <= f_low < f_high <= sample_rate / 2:
        raise ValueError(f"need 0 <= f_low < f_high <= Nyquist, got [{f_low}, {f_high}]")
    corners = hz_from_mel(np.linspace(mel_from_hz(f_low), mel_from_hz(f_high), n_filters + 2))
    # pin the outermost corners: the mel round-trip is off by ~1e-12 Hz,
    # which would leak a stray epsilon weight onto the band-edge bins
    corners[0] = f_low
    corners[-1] = f_high
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    fb = np.zeros((n_filters, bin_hz.size))
    for j in range(n_filters):
        lo, center, hi = corners[j], corners[j + 1], corners[j + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[j] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def extract_features(clip: AudioClip, normalize: bool = True) -> FeatureMatrix:
    """Convert the first 2 seconds of a clip into a frames x 40 log-filterbank matrix.

    Raises ValueError for clips shorter than 2 seconds. With ``normalize``
    (the default) each channel is shifted/scaled to zero mean and unit
    variance over the clip; constant channels are only centered.
    """
    sr = clip.sample_rate_hz
    need = round(CROP_SECONDS * sr)
    if clip.samples.size < need:
        raise ValueError(
            f"clip too short: {clip.samples.size} samples < {need} ({CROP_SECONDS:g} s at {sr} Hz)"
        )
    window = round(FRAME_MS * sr / 1000)
    hop = round(HOP_MS * sr / 1000)
    cropped = AudioClip(clip.samples[:need], sr)
    frames = frame_signal(cropped, window, hop)

    fb = mel_filterbank_matrix(f_high=sr / 2.0, sample_rate=sr)
    feats = np.empty((frames.shape[0], fb.shape[0]))
    for j in range(frames.shape[0]):
        feats[j] = np.log(fb @ power_spectrum(frames[j]) + LOG_FLOOR)

    if normalize:
        feats -= feats.mean(axis=0)
        std = feats.std(axis=0)
        std[std == 0.0] = 1.0
        feats /= std
    return FeatureMatrix(feats)
