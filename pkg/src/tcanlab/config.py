"""Experiment configuration: one YAML file, strict keys, CLI overrides on top.

Precedence is CLI flag > config file > built-in default; the global seed
additionally falls back to the TCANLAB_SEED environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .augment import DEFAULT_DISTORTION_PARAMS, DistortionClass
from .model import TcanConfig
from .trainer import TrainHyper

__all__ = ["ConfigError", "CorpusSection", "ExperimentConfig", "load_config", "resolve_seed"]

DEFAULT_SNRS = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

_DISTORTION_KEYS = {
    "time_warp": DistortionClass.TIME_WARP,
    "pooling": DistortionClass.POOLING,
    "dropout": DistortionClass.DROPOUT,
    "drift": DistortionClass.DRIFT,
    "gaussian_noise": DistortionClass.GAUSSIAN_NOISE,
}

_MODEL_KEYS = {
    "input_dim": "input_dim",
    "channels": "channels",
    "kernel_size": "kernel_size",
    "dilations": "dilations",
    "attention": "attention_enabled",
    "attention_reduced_dim": "attention_reduced_dim",
    "classifier_hidden": "classifier_hidden",
    "n_classes": "n_classes",
}

_TRAIN_KEYS = ("initial_lr", "lr_decay", "epochs", "batch_size")


class ConfigError(ValueError):
    """The config file is unreadable, has unknown keys, or invalid values."""


@dataclass(frozen=True)
class CorpusSection:
    n_train: int = 500
    n_test: int = 100
    duration_s: float = 3.0
    sample_rate: int = 16000
    manifest: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int | None = None
    out_dir: str | None = None
    snrs: tuple[float, ...] = DEFAULT_SNRS
    corpus: CorpusSection = field(default_factory=CorpusSection)
    distortion: dict = field(default_factory=dict)
    model: TcanConfig = field(default_factory=TcanConfig)
    train: TrainHyper = field(default_factory=TrainHyper)

    def distortion_params(self) -> dict[DistortionClass, dict]:
        merged = {cls: dict(params) for cls, params in DEFAULT_DISTORTION_PARAMS.items()}
        for cls, overrides in self.distortion.items():
            merged[cls].update(overrides)
        return merged


def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = _require_mapping(raw, "config")
    _reject_unknown(raw, ("seed", "out_dir", "snrs", "corpus", "distortion", "model", "train"),
                    "config")

    corpus_raw = _require_mapping(raw.get("corpus"), "corpus")
    _reject_unknown(corpus_raw, ("n_train", "n_test", "duration_s", "sample_rate", "manifest"),
                    "corpus")
    corpus = CorpusSection(**corpus_raw)

    distortion_raw = _require_mapping(raw.get("distortion"), "distortion")
    _reject_unknown(distortion_raw, _DISTORTION_KEYS, "distortion")
    distortion = {}
    for key, params in distortion_raw.items():
        cls = _DISTORTION_KEYS[key]
        params = _require_mapping(params, f"distortion.{key}")
        _reject_unknown(params, DEFAULT_DISTORTION_PARAMS[cls], f"distortion.{key}")
        distortion[cls] = dict(params)

    model_raw = _require_mapping(raw.get("model"), "model")
    _reject_unknown(model_raw, _MODEL_KEYS, "model")
    try:
        model = TcanConfig(**{_MODEL_KEYS[k]: v for k, v in model_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc

    train_raw = _require_mapping(raw.get("train"), "train")
    _reject_unknown(train_raw, _TRAIN_KEYS, "train")

    snrs = raw.get("snrs", DEFAULT_SNRS)
    if not isinstance(snrs, (list, tuple)) or not snrs:
        raise ConfigError("snrs: expected a non-empty list of dB values")

    seed = raw.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")

    try:
        return ExperimentConfig(
            seed=seed,
            out_dir=raw.get("out_dir"),
            snrs=tuple(float(s) for s in snrs),
            corpus=corpus,
            distortion=distortion,
            model=model,
            train=TrainHyper(**train_raw),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    """Parse a YAML experiment config; with no path, return the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return config_from_dict(raw or {})


def resolve_seed(cli_seed: int | None, config: ExperimentConfig) -> int:
    """CLI flag > config file > TCANLAB_SEED environment variable > 0."""
    if cli_seed is not None:
        return cli_seed
    if config.seed is not None:
        return config.seed
    env = os.environ.get("TCANLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"TCANLAB_SEED must be an integer, got {env!r}") from None
    return 0
