"""Command-line surface.

Exit codes: 0 success, 1 unexpected error or partial sweep failure,
2 invalid arguments/config, 3 data problem (corpus, WAV, manifest,
calibration), 4 numeric failure during training, 5 gradient check above
threshold.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from .augment import CalibrationError
from .audio import WavError, write_wav
from .config import ConfigError, ExperimentConfig, load_config, resolve_seed
from .corpus import ManifestError, build_corpus, load_corpus, load_manifest, save_manifest
from .gradcheck import GRADCHECK_THRESHOLD, OP_KINDS, run_suite
from .model import CheckpointError, init_params, save_checkpoint
from .reports import (
    ReportFormatError,
    parse_report,
    render_accuracy_vs_snr_svg,
    render_confusion_svg,
    render_training_curves_svg,
    write_confusion_csv,
    write_report,
    write_sweep_csv,
)
from .trainer import TrainingDivergedError, build_dataset, derive_seed, train

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5

_DATA_ERRORS = (WavError, ManifestError, CalibrationError, CheckpointError, ReportFormatError,
                FileNotFoundError)

# seed-derivation tags: corpus clips, train-set distortions, test-set
# distortions, weight init, batch shuffling
_TAG_CORPUS, _TAG_TRAIN_DATA, _TAG_TEST_DATA, _TAG_INIT, _TAG_SHUFFLE = range(5)


def _corpus_clips(cfg: ExperimentConfig, seed: int):
    """Materialize train/test clip lists from a manifest or synthetically."""
    if cfg.corpus.manifest:
        manifest = load_manifest(cfg.corpus.manifest)
        clips = load_corpus(manifest, Path(cfg.corpus.manifest).parent)
        train_clips = [clips[i] for i in manifest.split_ids("train")]
        test_clips = [clips[i] for i in manifest.split_ids("test")]
        if not train_clips or not test_clips:
            raise ManifestError("manifest must contain both train and test entries")
    else:
        manifest, clips = build_corpus(
            n_train=cfg.corpus.n_train,
            n_test=cfg.corpus.n_test,
            seed=derive_seed(seed, _TAG_CORPUS),
            duration_s=cfg.corpus.duration_s,
            sample_rate=cfg.corpus.sample_rate,
        )
        train_clips = [clips[i] for i in manifest.split_ids("train")]
        test_clips = [clips[i] for i in manifest.split_ids("test")]
    return train_clips, test_clips


def _train_once(cfg: ExperimentConfig, seed: int, snr_db: float, out_dir: Path):
    """Shared train path for the train and sweep-snr commands."""
    model_cfg = cfg.model
    train_clips, test_clips = _corpus_clips(cfg, seed)
    class_params = cfg.distortion_params()
    train_set = build_dataset(train_clips, snr_db, derive_seed(seed, _TAG_TRAIN_DATA),
                              class_params)
    test_set = build_dataset(test_clips, snr_db, derive_seed(seed, _TAG_TEST_DATA),
                             class_params)
    params = init_params(model_cfg, derive_seed(seed, _TAG_INIT))
    hyper = dataclasses.replace(cfg.train, seed=derive_seed(seed, _TAG_SHUFFLE))
    report = train(params, model_cfg, train_set, test_set, hyper, snr_db=snr_db)
    # the report's seed field holds the user-facing experiment seed
    report.seed = seed

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.tcan", params, model_cfg, metadata={
        "epoch": hyper.epochs - 1,
        "seed": seed,
        "final_lr": hyper.lr_at(hyper.epochs - 1),
        "snr_db": snr_db,
    })
    write_report(report, out_dir / "report.txt")
    write_confusion_csv(report.confusion, out_dir / "confusion.csv")
    render_training_curves_svg(report, out_dir / "training_curves.svg")
    return report


def cmd_gen_data(args) -> int:
    if args.n_train < 1 or args.n_test < 1:
        print("gen-data: --n-train and --n-test must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest, clips = build_corpus(n_train=args.n_train, n_test=args.n_test, seed=args.seed,
                                   duration_s=args.duration, sample_rate=args.sample_rate)
    for clip_id, clip in clips.items():
        write_wav(clip, out / f"{clip_id}.wav")
    save_manifest(manifest, out / "manifest.csv")
    print(f"wrote {len(clips)} clips and manifest.csv to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.attention is not None:
        cfg = dataclasses.replace(
            cfg, model=dataclasses.replace(cfg.model,
                                           attention_enabled=args.attention == "on"))
    if args.epochs is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, epochs=args.epochs))
    seed = resolve_seed(args.seed, cfg)
    snr_db = args.snr if args.snr is not None else cfg.snrs[0]
    out_dir = Path(args.out or cfg.out_dir or "runs/train")

    t0 = time.perf_counter()
    report = _train_once(cfg, seed, snr_db, out_dir)
    print(f"snr={snr_db:g} dB seed={seed} "
          f"train_acc={report.final_train_accuracy:.4f} "
          f"test_acc={report.final_test_accuracy:.4f} "
          f"({time.perf_counter() - t0:.1f} s)")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_sweep_snr(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    snrs = cfg.snrs
    if args.snrs:
        try:
            snrs = tuple(float(s) for s in args.snrs.split(","))
        except ValueError:
            print(f"sweep-snr: bad --snrs value {args.snrs!r}", file=sys.stderr)
            return EXIT_CONFIG
    out_dir = Path(args.out or cfg.out_dir or "runs/sweep")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    failed = False
    for snr in snrs:
        sub = out_dir / f"snr{snr:g}"
        try:
            report = _train_once(cfg, seed, snr, sub)
            rows.append({"snr_db": snr, "test_accuracy": report.final_test_accuracy,
                         "status": "ok"})
            print(f"snr={snr:g} dB: test_acc={report.final_test_accuracy:.4f}")
        except (ConfigError, *_DATA_ERRORS, TrainingDivergedError) as exc:
            failed = True
            rows.append({"snr_db": snr, "test_accuracy": None,
                         "status": f"error: {exc}"})
            print(f"snr={snr:g} dB: FAILED ({exc})", file=sys.stderr)

    write_sweep_csv(rows, out_dir / "accuracy_vs_snr.csv")
    ok_rows = [r for r in rows if r["status"] == "ok"]
    if ok_rows:
        render_accuracy_vs_snr_svg([r["snr_db"] for r in ok_rows],
                                   [r["test_accuracy"] for r in ok_rows],
                                   out_dir / "accuracy_vs_snr.svg")
    print(f"sweep artifacts in {out_dir}")
    return EXIT_UNEXPECTED if failed else EXIT_OK


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    results = run_suite(size=args.size, corrupt_op=args.corrupt_op)
    failing = []
    for kind, err in results.items():
        status = "ok" if err < GRADCHECK_THRESHOLD else "FAIL"
        print(f"{kind:24s} max normalized error {err:.3e}  {status}")
        if err >= GRADCHECK_THRESHOLD:
            failing.append(kind)
    print(f"gradcheck ({args.size}) finished in {time.perf_counter() - t0:.1f} s")
    if failing:
        print(f"gradient check failed for: {', '.join(failing)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_plot_confusion(args) -> int:
    report = parse_report(args.report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_confusion_csv(report.confusion, out / "confusion.csv")
    render_confusion_svg(report.confusion, out / "confusion.svg",
                         title=f"Confusion matrix (SNR {report.snr_db:g} dB)")
    print(f"wrote confusion.csv and confusion.svg to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcanlab",
        description="Train and evaluate the TCAN audio-distortion classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus as WAV files + manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--duration", type=float, default=3.0, help="clip length in seconds")
    p.add_argument("--sample-rate", type=int, default=16000)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model at one SNR")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--snr", type=float, help="target SNR in dB (default: first config entry)")
    p.add_argument("--attention", choices=("on", "off"),
                   help="override the attention blocks (off = plain TCN)")
    p.add_argument("--epochs", type=int, help="override the epoch count")
    p.add_argument("--seed", type=int, help="experiment seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-snr", help="independent train+evaluate per SNR level")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--snrs", help="comma-separated dB values (default: config list)")
    p.add_argument("--seed", type=int, help="experiment seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep_snr)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--size", choices=("small", "tiny"), default="small")
    p.add_argument("--corrupt-op", choices=OP_KINDS, metavar="OP",
                   help="testing aid: inject an error into one op's result")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot-confusion", help="render a report's confusion matrix as SVG + CSV")
    p.add_argument("--report", required=True, help="report.txt produced by train")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plot_confusion)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # pragma: no cover - safety net
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
