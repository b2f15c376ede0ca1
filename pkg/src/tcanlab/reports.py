"""Training-report serialization and figure rendering.

Reports are a small versioned text format (key/value header, per-epoch
table, confusion matrix table) that parses back losslessly; floats are
written with repr so reruns with the same seed produce identical bytes
apart from the wall-clock line. Figures are matplotlib renderings saved
as SVG next to the delimited output.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .trainer import ConfusionMatrix, EpochStats, TrainHyper, TrainReport

__all__ = [
    "ReportFormatError",
    "write_report",
    "parse_report",
    "write_confusion_csv",
    "read_confusion_csv",
    "write_sweep_csv",
    "render_confusion_svg",
    "render_accuracy_vs_snr_svg",
    "render_training_curves_svg",
]

REPORT_MAGIC = "tcanlab-report 1"

_EPOCH_COLUMNS = ("epoch", "lr", "train_loss", "train_accuracy", "test_accuracy")


class ReportFormatError(ValueError):
    """A report file does not match the expected layout."""


def class_names(n: int) -> list[str]:
    return [f"C{i + 1}" for i in range(n)]


def write_report(report: TrainReport, path) -> None:
    m = report.confusion.counts.shape[0]
    names = class_names(m)
    lines = [
        REPORT_MAGIC,
        f"seed: {report.seed}",
        f"snr_db: {report.snr_db!r}",
        f"config_hash: {report.config_hash}",
        f"attention: {str(report.attention_enabled).lower()}",
        f"initial_lr: {report.hyper.initial_lr!r}",
        f"lr_decay: {report.hyper.lr_decay!r}",
        f"epochs: {report.hyper.epochs}",
        f"batch_size: {report.hyper.batch_size}",
        f"final_train_accuracy: {report.final_train_accuracy!r}",
        f"final_test_accuracy: {report.final_test_accuracy!r}",
        f"wall_clock_s: {report.wall_clock_s!r}",
        "",
        "[epochs]",
        "\t".join(_EPOCH_COLUMNS),
    ]
    for es in report.epoch_stats:
        lines.append(
            f"{es.epoch}\t{es.lr!r}\t{es.train_loss!r}\t{es.train_accuracy!r}\t{es.test_accuracy!r}"
        )
    lines += ["", "[confusion rows=true cols=predicted]", "\t".join(["class"] + names)]
    for i in range(m):
        lines.append("\t".join([names[i]] + [str(c) for c in report.confusion.counts[i]]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_report(path) -> TrainReport:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ReportFormatError(f"cannot read report: {exc}") from exc
    if not lines or lines[0] != REPORT_MAGIC:
        raise ReportFormatError(f"missing '{REPORT_MAGIC}' header line")

    fields = {}
    idx = 1
    while idx < len(lines) and lines[idx]:
        if ": " not in lines[idx]:
            raise ReportFormatError(f"bad header line: {lines[idx]!r}")
        key, value = lines[idx].split(": ", 1)
        fields[key] = value
        idx += 1

    required = ("seed", "snr_db", "config_hash", "attention", "initial_lr", "lr_decay",
                "epochs", "batch_size", "final_train_accuracy", "final_test_accuracy",
                "wall_clock_s")
    missing = [k for k in required if k not in fields]
    if missing:
        raise ReportFormatError(f"missing header fields: {missing}")

    def _expect(header: str) -> None:
        nonlocal idx
        while idx < len(lines) and not lines[idx]:
            idx += 1
        if idx >= len(lines) or lines[idx] != header:
            got = lines[idx] if idx < len(lines) else "<eof>"
            raise ReportFormatError(f"expected {header!r}, got {got!r}")
        idx += 1

    try:
        hyper = TrainHyper(
            initial_lr=float(fields["initial_lr"]),
            lr_decay=float(fields["lr_decay"]),
            epochs=int(fields["epochs"]),
            batch_size=int(fields["batch_size"]),
            seed=int(fields["seed"]),
        )

        _expect("[epochs]")
        _expect("\t".join(_EPOCH_COLUMNS))
        stats = []
        while idx < len(lines) and lines[idx]:
            parts = lines[idx].split("\t")
            if len(parts) != len(_EPOCH_COLUMNS):
                raise ReportFormatError(f"bad epoch row: {lines[idx]!r}")
            stats.append(EpochStats(int(parts[0]), float(parts[1]), float(parts[2]),
                                    float(parts[3]), float(parts[4])))
            idx += 1

        _expect("[confusion rows=true cols=predicted]")
        header = lines[idx].split("\t") if idx < len(lines) else []
        if not header or header[0] != "class":
            raise ReportFormatError("missing confusion table header")
        m = len(header) - 1
        idx += 1
        rows = []
        for i in range(m):
            if idx >= len(lines):
                raise ReportFormatError("confusion table truncated")
            parts = lines[idx].split("\t")
            if len(parts) != m + 1:
                raise ReportFormatError(f"bad confusion row: {lines[idx]!r}")
            rows.append([int(c) for c in parts[1:]])
            idx += 1

        return TrainReport(
            seed=int(fields["seed"]),
            config_hash=fields["config_hash"],
            attention_enabled=fields["attention"] == "true",
            snr_db=float(fields["snr_db"]),
            hyper=hyper,
            epoch_stats=stats,
            confusion=ConfusionMatrix(np.array(rows)),
            final_train_accuracy=float(fields["final_train_accuracy"]),
            final_test_accuracy=float(fields["final_test_accuracy"]),
            wall_clock_s=float(fields["wall_clock_s"]),
        )
    except (ValueError, ReportFormatError) as exc:
        if isinstance(exc, ReportFormatError):
            raise
        raise ReportFormatError(f"bad field value: {exc}") from exc


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    names = class_names(cm.counts.shape[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class"] + names)
        for name, row in zip(names, cm.counts):
            writer.writerow([name] + [int(c) for c in row])


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["class"]:
        raise ReportFormatError("missing confusion CSV header")
    m = len(rows[0]) - 1
    if len(rows) != m + 1:
        raise ReportFormatError(f"expected {m} data rows, got {len(rows) - 1}")
    try:
        return ConfusionMatrix(np.array([[int(c) for c in row[1:]] for row in rows[1:]]))
    except ValueError as exc:
        raise ReportFormatError(f"bad confusion CSV: {exc}") from exc


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "test_accuracy", "status"])
        for row in rows:
            acc = row["test_accuracy"]
            writer.writerow([
                repr(float(row["snr_db"])),
                "" if acc is None else repr(float(acc)),
                row["status"],
            ])


def render_confusion_svg(cm: ConfusionMatrix, path, title: str = "Confusion matrix") -> None:
    """Heatmap with one gid-tagged rectangle per cell (countable in the SVG)."""
    counts = cm.counts
    m = counts.shape[0]
    names = class_names(m)
    peak = counts.max() if counts.max() > 0 else 1
    cmap = plt.get_cmap("Blues")

    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    for i in range(m):
        for j in range(m):
            level = counts[i, j] / peak
            cell = Rectangle((j, m - 1 - i), 1, 1, facecolor=cmap(0.15 + 0.85 * level),
                             edgecolor="white")
            cell.set_gid(f"cm-cell-{i}-{j}")
            ax.add_patch(cell)
            ax.text(j + 0.5, m - 1 - i + 0.5, str(counts[i, j]), ha="center", va="center",
                    fontsize=9, color="black" if level < 0.6 else "white")
    ax.set_xlim(0, m)
    ax.set_ylim(0, m)
    ax.set_xticks(np.arange(m) + 0.5, names)
    ax.set_yticks(np.arange(m) + 0.5, names[::-1])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_accuracy_vs_snr_svg(snrs, accuracies, path,
                               title: str = "Test accuracy vs SNR") -> None:
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.plot(snrs, accuracies, marker="o")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_training_curves_svg(report: TrainReport, path) -> None:
    epochs = [es.epoch for es in report.epoch_stats]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.plot(epochs, [es.train_loss for es in report.epoch_stats], marker=".")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(True, alpha=0.3)
    ax2.plot(epochs, [es.train_accuracy for es in report.epoch_stats], marker=".",
             label="train")
    ax2.plot(epochs, [es.test_accuracy for es in report.epoch_stats], marker=".",
             label="test")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.05)
    ax2.legend()
    ax2.grid(True, alpha=0.3)
    fig.suptitle(f"SNR {report.snr_db:g} dB, seed {report.seed}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
