"""TCAN lab: audio distortion classification with a from-scratch autodiff engine."""

from .audio import AudioClip, read_wav, write_wav
from .augment import (
    DistortionClass,
    DistortionSpec,
    apply_distortion,
    calibrate_to_snr,
    measure_snr,
)
from .autodiff import Tensor, backward
from .corpus import build_corpus, synth_clip
from .features import FeatureMatrix, extract_features
from .model import (
    TcanConfig,
    init_params,
    load_checkpoint,
    receptive_field,
    save_checkpoint,
    tcan_forward,
)
from .optim import AdamState, adam_step
from .trainer import TrainHyper, TrainReport, build_dataset, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "read_wav",
    "write_wav",
    "DistortionClass",
    "DistortionSpec",
    "apply_distortion",
    "calibrate_to_snr",
    "measure_snr",
    "Tensor",
    "backward",
    "build_corpus",
    "synth_clip",
    "FeatureMatrix",
    "extract_features",
    "TcanConfig",
    "init_params",
    "load_checkpoint",
    "receptive_field",
    "save_checkpoint",
    "tcan_forward",
    "AdamState",
    "adam_step",
    "TrainHyper",
    "TrainReport",
    "build_dataset",
    "evaluate",
    "train",
    "__version__",
]
