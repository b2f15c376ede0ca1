"""Dataset assembly, the training loop, and evaluation.

Everything downstream of the corpus is a pure function of (seed, config,
data): class assignment is round-robin, per-clip distortion seeds are
derived from the dataset seed, batches are shuffled by a dedicated
generator, and gradients are accumulated in sample-index order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augment import CalibrationError, DistortionClass, DistortionSpec, apply_distortion
from .autodiff import NonFiniteError, Tensor, add, backward, cross_entropy, scale
from .features import extract_features
from .model import TcanConfig, config_hash, tcan_forward
from .optim import AdamState, adam_step, zero_grads

__all__ = [
    "TrainHyper",
    "Sample",
    "ConfusionMatrix",
    "EpochStats",
    "TrainReport",
    "TrainingDivergedError",
    "derive_seed",
    "build_dataset",
    "train",
    "evaluate",
]


def derive_seed(base: int, *tags: int) -> int:
    """Stable 64-bit child seed for (base, tags); independent draws per tag path."""
    return int(np.random.SeedSequence([int(base), *map(int, tags)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrainHyper:
    initial_lr: float = 0.001
    lr_decay: float = 0.95
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0 or self.lr_decay <= 0:
            raise ValueError("initial_lr and lr_decay must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr * self.lr_decay ** epoch


@dataclass(frozen=True, eq=False)
class Sample:
    """One training item: frames x channels features and a class label (1..5)."""

    features: np.ndarray
    label: int


class ConfusionMatrix:
    """Rows are true classes, columns predictions, both 0-indexed internally."""

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")
        self.counts = counts

    @classmethod
    def zeros(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    def record(self, true_index: int, predicted_index: int) -> None:
        self.counts[true_index, predicted_index] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    test_accuracy: float


@dataclass
class TrainReport:
    seed: int
    config_hash: str
    attention_enabled: bool
    snr_db: float
    hyper: TrainHyper
    epoch_stats: list[EpochStats] = field(default_factory=list)
    confusion: ConfusionMatrix | None = None
    final_train_accuracy: float = 0.0
    final_test_accuracy: float = 0.0
    wall_clock_s: float = 0.0


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries where it happened and how large params got."""

    def __init__(self, epoch: int, batch: int, max_abs_param: float):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} "
            f"(max |param| = {max_abs_param:.3e})"
        )
        self.epoch = epoch
        self.batch = batch
        self.max_abs_param = max_abs_param


def build_dataset(corpus, snr_db: float, seed: int,
                  class_params: dict[DistortionClass, dict] | None = None) -> list[Sample]:
    """Distort and featurize a corpus at one SNR, labels round-robin over the 5 classes."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    classes = list(DistortionClass)
    samples = []
    for i, clip in enumerate(corpus):
        cls = classes[i % len(classes)]
        spec = DistortionSpec(
            distortion=cls,
            target_snr_db=snr_db,
            seed=derive_seed(seed, i),
            params=(class_params or {}).get(cls, {}),
        )
        try:
            corrupted, label = apply_distortion(clip, spec)
        except CalibrationError as exc:
            raise CalibrationError(f"clip {i}: {exc}") from exc
        samples.append(Sample(extract_features(corrupted).data, label))
    return samples


def evaluate(params: dict[str, Tensor], config: TcanConfig,
             dataset: list[Sample]) -> tuple[float, ConfusionMatrix]:
    """Argmax predictions (ties go to the lowest class index) and the count matrix."""
    if not dataset:
        raise ValueError("dataset is empty")
    cm = ConfusionMatrix.zeros(config.n_classes)
    for sample in dataset:
        logits = tcan_forward(sample.features, config, params)
        cm.record(sample.label - 1, int(np.argmax(logits.data)))
    return cm.accuracy, cm


def train(params: dict[str, Tensor], config: TcanConfig, train_set: list[Sample],
          test_set: list[Sample], hyper: TrainHyper, snr_db: float = float("nan")) -> TrainReport:
    """Adam with per-epoch lr decay on shuffled mini-batches of mean cross-entropy."""
    if not train_set or not test_set:
        raise ValueError("train and test sets must be non-empty")
    rng = np.random.default_rng(hyper.seed)
    param_list = list(params.values())
    state = AdamState.for_params(param_list)
    report = TrainReport(
        seed=hyper.seed,
        config_hash=config_hash(config),
        attention_enabled=config.attention_enabled,
        snr_db=snr_db,
        hyper=hyper,
    )

    t_start = time.perf_counter()
    n = len(train_set)
    for epoch in range(hyper.epochs):
        lr = hyper.lr_at(epoch)
        order = rng.permutation(n)
        loss_weighted_sum = 0.0
        for batch_index, start in enumerate(range(0, n, hyper.batch_size)):
            batch = order[start:start + hyper.batch_size]
            zero_grads(param_list)
            try:
                total = None
                for idx in batch:
                    sample = train_set[idx]
                    logits = tcan_forward(sample.features, config, params)
                    loss_i = cross_entropy(logits, sample.label - 1)
                    total = loss_i if total is None else add(total, loss_i)
                mean_loss = scale(total, 1.0 / batch.size)
                loss_value = float(mean_loss.data)
            except NonFiniteError:
                loss_value = float("nan")  # overflow surfaced inside the graph
            if not np.isfinite(loss_value):
                max_abs = max(float(np.abs(p.data).max()) for p in param_list)
                raise TrainingDivergedError(epoch, batch_index, max_abs)
            backward(mean_loss)
            adam_step(param_list, [p.grad for p in param_list], state, lr)
            loss_weighted_sum += loss_value * batch.size

        try:
            train_acc, _ = evaluate(params, config, train_set)
            test_acc, test_cm = evaluate(params, config, test_set)
        except NonFiniteError:
            max_abs = max(float(np.abs(p.data).max()) for p in param_list)
            raise TrainingDivergedError(epoch, batch_index, max_abs) from None
        report.epoch_stats.append(
            EpochStats(epoch, lr, loss_weighted_sum / n, train_acc, test_acc)
        )
        report.final_train_accuracy = train_acc
        report.final_test_accuracy = test_acc
        report.confusion = test_cm

    report.wall_clock_s = time.perf_counter() - t_start
    return report
