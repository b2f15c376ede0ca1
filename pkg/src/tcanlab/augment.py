"""Waveform-domain distortions and exact SNR calibration.

Five anomaly classes, each a pure function of (input, params, seed) and
each preserving length. SNR is defined uniformly for all classes by
treating the residual y - x as the noise term; ``calibrate_to_snr`` then
rescales that residual so the measured SNR hits the target exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.interpolate import CubicSpline

from .audio import AudioClip

__all__ = [
    "DistortionClass",
    "DistortionSpec",
    "CalibrationError",
    "SNR_CAP_DB",
    "DEFAULT_DISTORTION_PARAMS",
    "time_warp",
    "pool_series",
    "dropout_series",
    "drift_series",
    "add_gaussian_noise",
    "measure_snr",
    "calibrate_to_snr",
    "apply_distortion",
]

SNR_CAP_DB = 300.0


class DistortionClass(IntEnum):
    """The five anomaly classes; the integer codes double as training labels."""

    TIME_WARP = 1
    POOLING = 2
    DROPOUT = 3
    DRIFT = 4
    GAUSSIAN_NOISE = 5


# Raw (pre-calibration) parameters, strong enough that residual blending
# typically attenuates (alpha <= 1) even at a 5 dB target.
DEFAULT_DISTORTION_PARAMS: dict[DistortionClass, dict] = {
    DistortionClass.TIME_WARP: {"n_speed_changes": 3, "max_speed_ratio": 3.0},
    DistortionClass.POOLING: {"pool_size": 8},
    DistortionClass.DROPOUT: {"drop_fraction": 0.1},
    DistortionClass.DRIFT: {"max_drift": 0.5, "n_knots": 6},
    DistortionClass.GAUSSIAN_NOISE: {"sigma": 0.1},
}


class CalibrationError(Exception):
    """The corrupted clip equals the clean clip, so no scaling can reach the target SNR."""


@dataclass(frozen=True)
class DistortionSpec:
    """Everything that determines one corruption: class, params, target SNR, seed."""

    distortion: DistortionClass
    target_snr_db: float
    seed: int
    params: dict = field(default_factory=dict)


def time_warp(clip: AudioClip, n_speed_changes: int, max_speed_ratio: float,
              seed: int) -> AudioClip:
    """Resample along a random piecewise-linear monotonic time map.

    The map fixes both endpoints, has ``n_speed_changes`` interior
    breakpoints at sorted uniform positions, and segment speeds drawn
    log-uniformly so their max/min ratio never exceeds ``max_speed_ratio``.
    """
    if n_speed_changes < 1:
        raise ValueError("n_speed_changes must be >= 1")
    if max_speed_ratio < 1:
        raise ValueError(f"max_speed_ratio must be >= 1, got {max_speed_ratio}")
    x = clip.samples
    n = x.size
    if max_speed_ratio == 1 or n < 3:
        # equal segment speeds renormalize to the identity map
        return AudioClip(x.copy(), clip.sample_rate_hz)

    rng = np.random.default_rng(seed)
    positions = np.empty(n_speed_changes + 2)
    positions[0] = 0.0
    positions[-1] = n - 1.0
    positions[1:-1] = np.sort(rng.uniform(0.0, n - 1.0, n_speed_changes))
    half_span = 0.5 * np.log(max_speed_ratio)
    speeds = np.exp(rng.uniform(-half_span, half_span, n_speed_changes + 1))

    values = np.concatenate(([0.0], np.cumsum(speeds * np.diff(positions))))
    values *= (n - 1.0) / values[-1]
    values[-1] = n - 1.0
    tau = np.interp(np.arange(n), positions, values)
    return AudioClip(np.interp(tau, np.arange(n), x), clip.sample_rate_hz)


def pool_series(clip: AudioClip, pool_size: int) -> AudioClip:
    """Replace each block of ``pool_size`` samples by its mean (last partial block too)."""
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    x = clip.samples
    if pool_size == 1:
        return AudioClip(x.copy(), clip.sample_rate_hz)
    n = x.size
    n_full = n // pool_size
    y = np.empty_like(x)
    if n_full:
        blocks = x[: n_full * pool_size].reshape(n_full, pool_size)
        y[: n_full * pool_size] = np.repeat(blocks.mean(axis=1), pool_size)
    if n_full * pool_size < n:
        y[n_full * pool_size:] = x[n_full * pool_size:].mean()
    return AudioClip(y, clip.sample_rate_hz)


def dropout_series(clip: AudioClip, drop_fraction: float, seed: int) -> AudioClip:
    """Zero out exactly floor(drop_fraction * N) distinct sample positions."""
    if not 0.0 <= drop_fraction <= 1.0:
        raise ValueError(f"drop_fraction must be in [0, 1], got {drop_fraction}")
    x = clip.samples
    n = x.size
    n_drop = int(np.floor(drop_fraction * n))
    y = x.copy()
    if n_drop:
        rng = np.random.default_rng(seed)
        y[rng.choice(n, size=n_drop, replace=False)] = 0.0
    return AudioClip(y, clip.sample_rate_hz)


def drift_series(clip: AudioClip, max_drift: float, n_knots: int, seed: int) -> AudioClip:
    """Add a smooth random curve (cubic spline through random knots) peaking at max_drift."""
    if max_drift < 0:
        raise ValueError("max_drift must be >= 0")
    if n_knots < 2:
        raise ValueError("n_knots must be >= 2")
    x = clip.samples
    n = x.size
    if max_drift == 0:
        return AudioClip(x.copy(), clip.sample_rate_hz)
    if n < n_knots:
        raise ValueError(f"clip of {n} samples is too short for {n_knots} knots")

    rng = np.random.default_rng(seed)
    knot_pos = np.linspace(0.0, n - 1.0, n_knots)
    knot_val = rng.uniform(-1.0, 1.0, n_knots)
    curve = CubicSpline(knot_pos, knot_val)(np.arange(n))
    peak = np.abs(curve).max()
    if peak == 0.0:
        return AudioClip(x.copy(), clip.sample_rate_hz)
    return AudioClip(x + curve * (max_drift / peak), clip.sample_rate_hz)


def add_gaussian_noise(clip: AudioClip, sigma: float, seed: int) -> AudioClip:
    """Add i.i.d. zero-mean Gaussian noise with standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = clip.samples
    if sigma == 0:
        return AudioClip(x.copy(), clip.sample_rate_hz)
    rng = np.random.default_rng(seed)
    return AudioClip(x + rng.normal(0.0, sigma, x.size), clip.sample_rate_hz)


def measure_snr(clean: AudioClip, corrupted: AudioClip) -> float:
    """10*log10 of clean power over residual power, capped at +300 dB for a zero residual."""
    x = clean.samples
    y = corrupted.samples
    if x.size != y.size:
        raise ValueError(f"length mismatch: clean {x.size} vs corrupted {y.size}")
    p_signal = np.mean(x * x)
    if p_signal == 0.0:
        raise ValueError("clean signal is silent, SNR undefined")
    r = y - x
    p_residual = np.mean(r * r)
    if p_residual == 0.0:
        return SNR_CAP_DB
    return 10.0 * np.log10(p_signal / p_residual)


def calibrate_to_snr(clean: AudioClip, raw_corrupted: AudioClip,
                     target_snr_db: float) -> AudioClip:
    """Blend the residual so measure_snr(clean, result) == target_snr_db.

    Returns x + alpha * (raw - x) with alpha = sqrt(P_x / (P_r * 10^(target/10))).
    """
    x = clean.samples
    y = raw_corrupted.samples
    if x.size != y.size:
        raise ValueError(f"length mismatch: clean {x.size} vs corrupted {y.size}")
    p_signal = np.mean(x * x)
    if p_signal == 0.0:
        raise ValueError("clean signal is silent, SNR undefined")
    r = y - x
    p_residual = np.mean(r * r)
    if p_residual == 0.0:
        raise CalibrationError(
            "corrupted clip equals the clean clip; re-draw with stronger parameters"
        )
    alpha = np.sqrt(p_signal / (p_residual * 10.0 ** (target_snr_db / 10.0)))
    return AudioClip(x + alpha * r, clean.sample_rate_hz)


def apply_distortion(clip: AudioClip, spec: DistortionSpec) -> tuple[AudioClip, int]:
    """Run one seeded distortion and calibrate it to the spec's target SNR.

    Returns (corrupted clip, integer class label).
    """
    cls = DistortionClass(spec.distortion)
    params = dict(DEFAULT_DISTORTION_PARAMS[cls])
    unknown = set(spec.params) - set(params)
    if unknown:
        raise ValueError(f"unknown {cls.name} parameters: {sorted(unknown)}")
    params.update(spec.params)

    if cls is DistortionClass.TIME_WARP:
        raw = time_warp(clip, seed=spec.seed, **params)
    elif cls is DistortionClass.POOLING:
        raw = pool_series(clip, **params)
    elif cls is DistortionClass.DROPOUT:
        raw = dropout_series(clip, seed=spec.seed, **params)
    elif cls is DistortionClass.DRIFT:
        raw = drift_series(clip, seed=spec.seed, **params)
    else:
        raw = add_gaussian_noise(clip, seed=spec.seed, **params)

    calibrated = calibrate_to_snr(clip, raw, spec.target_snr_db)
    return calibrated, int(cls)
