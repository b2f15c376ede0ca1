"""Synthetic speech-surrogate corpus and its manifest.

Clips are a sawtooth glottal source with a wandering pitch contour, shaped
by three seeded second-order resonators (formant stand-ins) and a slow
amplitude envelope, then peak-normalized to 0.5. A manifest line records
enough to rebuild each clip exactly: synthetic entries regenerate from
their seed, file entries re-read their WAV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lfilter

from .audio import AudioClip, read_wav

__all__ = [
    "MIN_CLIP_SECONDS",
    "ManifestError",
    "ManifestEntry",
    "CorpusManifest",
    "synth_clip",
    "build_corpus",
    "save_manifest",
    "load_manifest",
    "load_corpus",
]

MIN_CLIP_SECONDS = 2.5
MANIFEST_FIELDS = ("id", "source", "split", "duration_s", "sample_rate")


class ManifestError(Exception):
    """A manifest file or entry is invalid."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    source: str  # "synth:<seed>" or a WAV path relative to the manifest
    split: str  # "train" or "test"
    duration_s: float
    sample_rate: int


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate clip ids in manifest")
        for e in self.entries:
            if e.split not in ("train", "test"):
                raise ManifestError(f"{e.id}: unknown split {e.split!r}")
            if e.duration_s < MIN_CLIP_SECONDS:
                raise ManifestError(
                    f"{e.id}: duration {e.duration_s} s is below the "
                    f"{MIN_CLIP_SECONDS} s minimum"
                )

    def split_ids(self, split: str) -> list[str]:
        return [e.id for e in self.entries if e.split == split]


def synth_clip(seed: int, duration_s: float = 3.0, sample_rate: int = 16000) -> AudioClip:
    """Deterministic speech-like clip for a seed; peak amplitude exactly 0.5."""
    if duration_s < MIN_CLIP_SECONDS:
        raise ValueError(f"duration must be >= {MIN_CLIP_SECONDS} s, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = round(duration_s * sample_rate)
    t_index = np.arange(n)

    # pitch contour: spline through knots roughly every half second
    n_pitch_knots = max(4, int(duration_s / 0.5) + 2)
    knots = np.linspace(0.0, n - 1.0, n_pitch_knots)
    f0 = CubicSpline(knots, rng.uniform(80.0, 250.0, n_pitch_knots))(t_index)
    f0 = np.clip(f0, 80.0, 250.0)
    phase = np.cumsum(f0) / sample_rate
    signal = 2.0 * (phase % 1.0) - 1.0

    # three resonant second-order filters standing in for formants
    for _ in range(3):
        center_hz = rng.uniform(300.0, 3500.0)
        bandwidth_hz = rng.uniform(80.0, 400.0)
        radius = np.exp(-np.pi * bandwidth_hz / sample_rate)
        theta = 2.0 * np.pi * center_hz / sample_rate
        signal = lfilter(
            [1.0 - radius], [1.0, -2.0 * radius * np.cos(theta), radius * radius], signal
        )

    # slow amplitude envelope
    n_env_knots = max(4, int(duration_s / 0.3) + 2)
    env_knots = np.linspace(0.0, n - 1.0, n_env_knots)
    envelope = CubicSpline(env_knots, rng.uniform(0.3, 1.0, n_env_knots))(t_index)
    signal = signal * np.clip(envelope, 0.05, None)

    signal *= 0.5 / np.abs(signal).max()
    return AudioClip(signal, sample_rate)


def build_corpus(n_train: int = 500, n_test: int = 100, seed: int = 0,
                 duration_s: float = 3.0,
                 sample_rate: int = 16000) -> tuple[CorpusManifest, dict[str, AudioClip]]:
    """Generate train/test clips from disjoint contiguous seed ranges."""
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    entries = []
    clips = {}
    for split, count, offset in (("train", n_train, 0), ("test", n_test, n_train)):
        width = len(str(max(n_train, n_test) - 1))
        for i in range(count):
            clip_seed = seed + offset + i
            clip_id = f"{split}-{i:0{width}d}"
            entries.append(ManifestEntry(
                id=clip_id,
                source=f"synth:{clip_seed}",
                split=split,
                duration_s=duration_s,
                sample_rate=sample_rate,
            ))
            clips[clip_id] = synth_clip(clip_seed, duration_s, sample_rate)
    return CorpusManifest(entries), clips


def save_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for e in manifest.entries:
            writer.writerow([e.id, e.source, e.split, repr(e.duration_s), e.sample_rate])


def load_manifest(path) -> CorpusManifest:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(MANIFEST_FIELDS):
                raise ManifestError(f"bad manifest header: {header}")
            entries = []
            for row in reader:
                if len(row) != len(MANIFEST_FIELDS):
                    raise ManifestError(f"bad manifest row: {row}")
                entries.append(ManifestEntry(
                    id=row[0], source=row[1], split=row[2],
                    duration_s=float(row[3]), sample_rate=int(row[4]),
                ))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"bad manifest field: {exc}") from exc
    return CorpusManifest(entries)


def load_corpus(manifest: CorpusManifest, base_dir=".") -> dict[str, AudioClip]:
    """Materialize every manifest entry: regenerate synth clips, read WAV files."""
    base = Path(base_dir)
    clips = {}
    for e in manifest.entries:
        if e.source.startswith("synth:"):
            try:
                clip_seed = int(e.source.split(":", 1)[1])
            except ValueError:
                raise ManifestError(f"{e.id}: bad synthetic source {e.source!r}") from None
            clips[e.id] = synth_clip(clip_seed, e.duration_s, e.sample_rate)
        else:
            wav_path = base / e.source
            if not wav_path.exists():
                raise ManifestError(f"{e.id}: missing audio file {wav_path}")
            clips[e.id] = read_wav(wav_path)
    return clips
