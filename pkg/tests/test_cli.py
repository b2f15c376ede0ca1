import time
import xml.etree.ElementTree as ET

import numpy as np
import numpy.testing as npt
import pytest

from tcanlab.cli import main
from tcanlab.model import load_checkpoint
from tcanlab.reports import parse_report, read_confusion_csv

TINY_YAML = """
seed: 11
corpus:
  n_train: 10
  n_test: 5
model:
  channels: 8
  kernel_size: 3
  dilations: [1, 2]
  attention_reduced_dim: 2
  classifier_hidden: 16
train:
  epochs: 2
  batch_size: 8
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML)
    return path


def strip_wall_clock(path):
    return [line for line in path.read_text().splitlines()
            if not line.startswith("wall_clock_s:")]


# ---------------------------------------------------------------------------
# gen-data


def test_gen_data_writes_clips_and_manifest(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-data", "--out", str(out), "--seed", "3",
                 "--n-train", "4", "--n-test", "2"]) == 0
    wavs = sorted(p.name for p in out.glob("*.wav"))
    assert len(wavs) == 6
    assert (out / "manifest.csv").exists()


def test_gen_data_is_idempotent(tmp_path):
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    for out in (out1, out2):
        assert main(["gen-data", "--out", str(out), "--seed", "3",
                     "--n-train", "3", "--n-test", "2"]) == 0
    assert (out1 / "manifest.csv").read_bytes() == (out2 / "manifest.csv").read_bytes()
    assert (out1 / "train-0.wav").read_bytes() == (out2 / "train-0.wav").read_bytes()


def test_gen_data_rejects_zero_train_before_io(tmp_path):
    out = tmp_path / "nope"
    assert main(["gen-data", "--out", str(out), "--n-train", "0", "--n-test", "2"]) == 2
    assert not out.exists()


# ---------------------------------------------------------------------------
# train


def test_train_writes_artifacts(tmp_path, tiny_config):
    out = tmp_path / "run"
    assert main(["train", "--config", str(tiny_config), "--snr", "5",
                 "--out", str(out)]) == 0
    assert (out / "checkpoint.tcan").exists()
    assert (out / "confusion.csv").exists()
    assert (out / "training_curves.svg").exists()
    report = parse_report(out / "report.txt")
    assert len(report.epoch_stats) == 2  # one row per epoch
    assert report.seed == 11
    assert report.snr_db == 5.0
    params, config, meta = load_checkpoint(out / "checkpoint.tcan")
    assert config.channels == 8
    assert meta["seed"] == 11
    assert meta["final_lr"] == pytest.approx(0.001 * 0.95)


def test_train_reports_are_deterministic(tmp_path, tiny_config):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        assert main(["train", "--config", str(tiny_config), "--snr", "10",
                     "--out", str(out)]) == 0
    assert strip_wall_clock(out1 / "report.txt") == strip_wall_clock(out2 / "report.txt")
    assert (out1 / "confusion.csv").read_bytes() == (out2 / "confusion.csv").read_bytes()
    assert (out1 / "checkpoint.tcan").read_bytes() == (out2 / "checkpoint.tcan").read_bytes()


def test_train_attention_flag_switches_to_plain_tcn(tmp_path, tiny_config):
    out = tmp_path / "tcn"
    assert main(["train", "--config", str(tiny_config), "--snr", "5",
                 "--attention", "off", "--out", str(out)]) == 0
    report = parse_report(out / "report.txt")
    assert report.attention_enabled is False
    _, config, _ = load_checkpoint(out / "checkpoint.tcan")
    assert config.attention_enabled is False
    assert config.channels == 8


def test_train_from_generated_manifest(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--seed", "5",
                 "--n-train", "6", "--n-test", "4"]) == 0
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(TINY_YAML.replace(
        "corpus:\n  n_train: 10\n  n_test: 5",
        f"corpus:\n  manifest: {data / 'manifest.csv'}"))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--snr", "5", "--out", str(out)]) == 0
    report = parse_report(out / "report.txt")
    assert report.confusion.total == 4  # the manifest's test split


def test_train_from_wav_manifest(tmp_path):
    # ingestion path for real recordings: manifest entries point at WAV files
    import csv

    from tcanlab.audio import write_wav
    from tcanlab.corpus import synth_clip

    data = tmp_path / "wavs"
    data.mkdir()
    rows = []
    for i in range(6):
        split = "train" if i < 4 else "test"
        name = f"clip{i}.wav"
        write_wav(synth_clip(200 + i), data / name)
        rows.append([f"c{i}", name, split, "3.0", "16000"])
    with open(data / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "source", "split", "duration_s", "sample_rate"])
        writer.writerows(rows)

    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(TINY_YAML.replace(
        "corpus:\n  n_train: 10\n  n_test: 5",
        f"corpus:\n  manifest: {data / 'manifest.csv'}"))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--snr", "10", "--out", str(out)]) == 0
    report = parse_report(out / "report.txt")
    assert report.confusion.total == 2


def test_train_missing_manifest_is_data_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("corpus:\n  manifest: does-not-exist.csv\n")
    assert main(["train", "--config", str(cfg), "--snr", "5",
                 "--out", str(tmp_path / "x")]) == 3


def test_train_divergence_is_numeric_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(TINY_YAML + "\n")
    cfg.write_text(cfg.read_text().replace("epochs: 2", "epochs: 2\n  initial_lr: 1.0e+200"))
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["train", "--config", str(cfg), "--snr", "5",
                     "--out", str(tmp_path / "x")]) == 4


def test_unknown_config_key_is_config_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("bogus: 1\n")
    assert main(["train", "--config", str(cfg), "--snr", "5",
                 "--out", str(tmp_path / "x")]) == 2


def test_env_seed_fallback(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(TINY_YAML.replace("seed: 11\n", ""))
    monkeypatch.setenv("TCANLAB_SEED", "29")
    out = tmp_path / "envrun"
    assert main(["train", "--config", str(cfg), "--snr", "5", "--out", str(out)]) == 0
    assert parse_report(out / "report.txt").seed == 29


# ---------------------------------------------------------------------------
# sweep-snr


def test_sweep_matches_single_runs_and_emits_artifacts(tmp_path, tiny_config):
    sweep_out = tmp_path / "sweep"
    assert main(["sweep-snr", "--config", str(tiny_config), "--snrs", "5,30",
                 "--out", str(sweep_out)]) == 0

    csv_lines = (sweep_out / "accuracy_vs_snr.csv").read_text().splitlines()
    assert csv_lines[0] == "snr_db,test_accuracy,status"
    assert len(csv_lines) == 3  # one row per requested SNR

    svg_root = ET.parse(sweep_out / "accuracy_vs_snr.svg").getroot()
    assert svg_root.tag.endswith("svg")

    single_out = tmp_path / "single"
    assert main(["train", "--config", str(tiny_config), "--snr", "30",
                 "--out", str(single_out)]) == 0
    assert (strip_wall_clock(sweep_out / "snr30" / "report.txt")
            == strip_wall_clock(single_out / "report.txt"))


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_tiny_passes_within_budget(capsys):
    start = time.perf_counter()
    assert main(["gradcheck", "--size", "tiny"]) == 0
    assert time.perf_counter() - start < 10.0
    out = capsys.readouterr().out
    assert "full_network" in out


def test_gradcheck_corrupted_op_exits_5(capsys):
    assert main(["gradcheck", "--size", "tiny", "--corrupt-op", "relu"]) == 5
    captured = capsys.readouterr()
    assert "relu" in captured.err


# ---------------------------------------------------------------------------
# plot-confusion


def test_plot_confusion_renders_cells_and_csv(tmp_path, tiny_config):
    run = tmp_path / "run"
    assert main(["train", "--config", str(tiny_config), "--snr", "5",
                 "--out", str(run)]) == 0
    out = tmp_path / "cm"
    assert main(["plot-confusion", "--report", str(run / "report.txt"),
                 "--out", str(out)]) == 0

    root = ET.parse(out / "confusion.svg").getroot()
    cells = [e for e in root.iter() if e.get("id", "").startswith("cm-cell-")]
    assert len(cells) == 25

    report = parse_report(run / "report.txt")
    csv_cm = read_confusion_csv(out / "confusion.csv")
    npt.assert_array_equal(csv_cm.counts, report.confusion.counts)
    npt.assert_array_equal(csv_cm.row_sums(), report.confusion.row_sums())


def test_plot_confusion_malformed_report(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a report\n")
    assert main(["plot-confusion", "--report", str(bad),
                 "--out", str(tmp_path / "cm")]) == 3


def test_plot_confusion_diagonal_input(tmp_path):
    # a hand-written report with an identity confusion matrix round-trips
    from tcanlab.reports import write_report
    from tcanlab.trainer import ConfusionMatrix, EpochStats, TrainHyper, TrainReport
    report = TrainReport(
        seed=1, config_hash="x" * 64, attention_enabled=True, snr_db=5.0,
        hyper=TrainHyper(epochs=1),
        epoch_stats=[EpochStats(0, 0.001, 1.0, 0.9, 0.8)],
        confusion=ConfusionMatrix(np.eye(5, dtype=int) * 7),
        final_train_accuracy=0.9, final_test_accuracy=0.8, wall_clock_s=1.0,
    )
    path = tmp_path / "report.txt"
    write_report(report, path)
    out = tmp_path / "cm"
    assert main(["plot-confusion", "--report", str(path), "--out", str(out)]) == 0
    cm = read_confusion_csv(out / "confusion.csv")
    npt.assert_array_equal(cm.counts, np.eye(5, dtype=int) * 7)
