"""Command line front end: ``batstation <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import AppConfig, load_config
from .dataset import build_synthetic, load_all, placed_pulses, read_manifest
from .errors import BatStationError, ConfigError, DataError
from .grid import read_grid
from .phy import UplinkAllocation
from .radar import generate_library, load_library, save_library, split_library

log = logging.getLogger("batstation")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="TOML or JSON configuration file")
    parser.add_argument("--seed", type=int, default=default(0), help="master random seed (default 0)")
    parser.add_argument("--out-dir", type=Path, default=default(Path(".")), help="directory for outputs")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="batstation", description="In-situ radar sensing on 5G uplink grids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-waveforms", parents=[common], help="generate and split the radar pulse library")
    s.add_argument("--per-type", type=int, default=1000)
    s.add_argument("--train-fraction", type=float, default=0.9)

    s = sub.add_parser("gen-dataset", parents=[common], help="generate one labelled synthetic split")
    s.add_argument("--library", required=True, type=Path, help="pulse library of this split")
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.add_argument("--per-type", type=int, default=1000, help="radar samples per type")
    s.add_argument("--nulls", type=int, default=None,
                   help="no-radar samples (default: equal to all radar samples for test, 1/5 of them otherwise)")
    s.add_argument("--snr", type=float, nargs="+", default=None, help="radar SNR values in dB")
    s.add_argument("--freq-mode", choices=("uniform", "discrete"), default=None)

    s = sub.add_parser("init-templates", parents=[common], help="initialise templates from training pulses")
    s.add_argument("--dataset", required=True, type=Path, help="training split manifest")
    s.add_argument("--library", required=True, type=Path, help="training pulse library")
    s.add_argument("--output", type=Path, default=None)

    s = sub.add_parser("finetune", parents=[common], help="fine-tune templates with SGD")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--train", required=True, type=Path, help="training split manifest")
    s.add_argument("--val", required=True, type=Path, help="validation split manifest")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--weight-decay", type=float, default=None)
    s.add_argument("--output", type=Path, default=None)

    s = sub.add_parser("calibrate", parents=[common], help="calibrate the detection threshold on nulls")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--far", type=float, default=None, help="target false-alarm rate (default 0.05)")

    s = sub.add_parser("sense", parents=[common], help="sense one grid file and print a JSON report")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--threshold", required=True, help="threshold value or threshold JSON file")
    s.add_argument("--grid", required=True, type=Path, help="BATG grid file")
    s.add_argument("--meta", type=Path, default=None, help="JSON with 'alloc' and 'dmrs_seed'")
    s.add_argument("--alloc-start", type=int, default=None)
    s.add_argument("--alloc-count", type=int, default=None)
    s.add_argument("--profile", choices=("pucch_like", "pusch_like"), default="pusch_like")
    s.add_argument("--modulation", choices=("QPSK", "QAM16", "QAM64"), default=None)
    s.add_argument("--dmrs-seed", type=int, default=None)
    s.add_argument("--multi", action="store_true", help="also report every local peak above threshold")

    s = sub.add_parser("evaluate", parents=[common], help="evaluate templates on a labelled split")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--threshold", required=True)
    s.add_argument("--dataset", required=True, type=Path)

    s = sub.add_parser("sweep", parents=[common], help="detection versus radar SNR on fresh splits")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--threshold", required=True)
    s.add_argument("--library", required=True, type=Path, help="test pulse library")
    s.add_argument("--snr", type=float, nargs="+", default=[10, 15, 20, 25, 30, 35])
    s.add_argument("--per-type", type=int, default=1000)
    s.add_argument("--nulls", type=int, default=1000)

    s = sub.add_parser("bench", parents=[common], help="parameter, MAC and latency report")
    s.add_argument("--templates", required=True, type=Path)
    s.add_argument("--slots", type=int, default=100)

    s = sub.add_parser("plot", parents=[common], help="plot a sweep CSV (needs matplotlib)")
    s.add_argument("--csv", required=True, type=Path)
    s.add_argument("--output", type=Path, default=None)
    return p


# -- helpers -------------------------------------------------------------------

def _out(args, name: str) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir / name


def _threshold(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        pass
    path = Path(value)
    if not path.exists():
        raise DataError(f"threshold file {path} does not exist")
    try:
        return float(json.loads(path.read_text())["y_th"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed threshold file {path}: {exc}") from exc


def _templates(path: Path, cfg: AppConfig):
    from .sensing import load_templates

    if not path.exists():
        raise DataError(f"template file {path} does not exist")
    return load_templates(path, cfg.types)


def _samples(path: Path):
    if not path.exists():
        raise DataError(f"dataset manifest {path} does not exist")
    return load_all(path)


def _library(path: Path):
    if not path.exists():
        raise DataError(f"pulse library {path} does not exist")
    return load_library(path)


# -- subcommands -----------------------------------------------------------------

def cmd_gen_waveforms(args, cfg: AppConfig) -> int:
    if args.per_type < 2:
        raise ConfigError("--per-type must be at least 2 to allow a train/test split")
    pulses = generate_library(args.per_type, args.seed, cfg.types, cfg.numerology)
    train, test = split_library(pulses, args.seed, args.train_fraction)
    extra = {"seed": args.seed, "per_type": args.per_type}
    for name, part in (("train", train), ("test", test)):
        path = save_library(part, _out(args, "waveforms") / name, {**extra, "split": name})
        print(path)
    return 0


def cmd_gen_dataset(args, cfg: AppConfig) -> int:
    from dataclasses import replace

    pulses = _library(args.library)
    synthetic = cfg.synthetic
    if args.snr:
        synthetic = synthetic.with_snr(*args.snr)
    if args.freq_mode:
        synthetic = replace(synthetic, freq_mode=args.freq_mode)
    radar_total = args.per_type * len(cfg.types)
    nulls = args.nulls
    if nulls is None:
        nulls = radar_total if args.split == "test" else max(1, radar_total // 5)
    counts = {0: nulls, **{r: args.per_type for r in sorted(cfg.types)}}
    man = build_synthetic(synthetic, counts, args.seed, pulses, args.out_dir, args.split, args.threads,
                          library_ref=str(args.library))
    print(man.path)
    return 0


def cmd_init_templates(args, cfg: AppConfig) -> int:
    from .sensing import init_templates, save_templates

    samples = _samples(args.dataset)
    pulses = _library(args.library)
    ts = init_templates(placed_pulses(samples, pulses), cfg.reshape, cfg.types, cfg.training.reference_snr_db,
                        cfg.synthetic.noise_psd)
    out = args.output or _out(args, "templates_init.bat")
    save_templates(ts, out)
    print(out)
    return 0


def cmd_finetune(args, cfg: AppConfig) -> int:
    from .pipeline import training_item
    from .sensing import finetune, save_templates

    cfg = cfg.with_training(epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay)
    ts = _templates(args.templates, cfg)
    train = [training_item(s, ts.reshape) for s in _samples(args.train) if s.labels.detected]
    val = [training_item(s, ts.reshape) for s in _samples(args.val) if s.labels.detected]
    t = cfg.training

    def progress(epoch, loss, acc):
        log.info("epoch %d  loss %.5f  val acc %.4f", epoch, loss, acc)

    tuned, hist = finetune(ts, train, t.lr, t.weight_decay, t.epochs, val, args.seed, progress)
    out = args.output or _out(args, "templates_tuned.bat")
    save_templates(tuned, out)
    with open(_out(args, "finetune_history.csv"), "w") as fh:
        fh.write("epoch,train_loss,val_accuracy\n")
        fh.write(f"0,,{hist.initial_val_accuracy!r}\n")
        for i, loss in enumerate(hist.train_loss, 1):
            acc = hist.val_accuracy[i - 1] if hist.val_accuracy else float("nan")
            fh.write(f"{i},{loss!r},{acc!r}\n")
    print(out)
    print(f"best epoch {hist.best_epoch}")
    return 0


def cmd_calibrate(args, cfg: AppConfig) -> int:
    from .evalbench import score_samples
    from .sensing import calibrate_threshold

    far = cfg.training.target_far if args.far is None else args.far
    ts = _templates(args.templates, cfg)
    nulls = [s for s in _samples(args.dataset) if not s.labels.detected]
    scores = [r.likelihood for r in score_samples(nulls, ts, args.threads)]
    y_th = calibrate_threshold(scores, far)
    out = _out(args, "threshold.json")
    out.write_text(json.dumps({"y_th": y_th, "y_th_db": float(20 * np.log10(y_th)) if y_th > 0 else None,
                               "target_far": far, "null_count": len(scores),
                               "templates": str(args.templates), "dataset": str(args.dataset)}, indent=1) + "\n")
    print(out)
    return 0


def cmd_sense(args, cfg: AppConfig) -> int:
    from dataclasses import replace

    from .pipeline import Sensor
    from .sensing import decide, detect_multi

    ts = _templates(args.templates, cfg)
    y_th = _threshold(args.threshold)
    if not args.grid.exists():
        raise DataError(f"grid file {args.grid} does not exist")
    grid = read_grid(args.grid, ts.reshape.numerology)
    if args.meta is not None:
        meta = json.loads(args.meta.read_text())
        alloc = UplinkAllocation.from_dict(meta["alloc"], grid.config)
        dmrs_seed = int(meta["dmrs_seed"])
    else:
        if args.alloc_start is None or args.alloc_count is None or args.dmrs_seed is None:
            raise ConfigError("give --meta or all of --alloc-start, --alloc-count and --dmrs-seed")
        alloc = UplinkAllocation(args.alloc_start, args.alloc_count, args.profile, args.modulation, grid.config)
        dmrs_seed = args.dmrs_seed
    sensor = Sensor(ts, y_th)
    corr = sensor.correlate(grid, alloc, dmrs_seed)
    report = decide(corr, y_th, ts.reshape)
    if args.multi:
        report = replace(report, peaks=tuple(detect_multi(corr, y_th, ts)))
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_evaluate(args, cfg: AppConfig) -> int:
    from .evalbench import evaluate

    ts = _templates(args.templates, cfg)
    run = evaluate(_samples(args.dataset), ts, _threshold(args.threshold), args.threads,
                   dataset_ref=args.dataset.name, templates_ref=args.templates.name)
    _out(args, "eval_samples.csv").write_text(run.samples_csv())
    _out(args, "eval_summary.csv").write_text(run.summary_csv())
    cm = run.confusion
    lines = ["true\\pred," + ",".join(str(r) for r in run.type_ids)]
    lines += [f"{r}," + ",".join(str(int(v)) for v in row) for r, row in zip(run.type_ids, cm)]
    _out(args, "eval_confusion.csv").write_text("\n".join(lines) + "\n")
    print(run.summary_csv(), end="")
    return 0


def cmd_sweep(args, cfg: AppConfig) -> int:
    from .evalbench import sweep_snr

    ts = _templates(args.templates, cfg)
    _, text = sweep_snr(cfg.synthetic, _library(args.library), ts, _threshold(args.threshold), args.snr,
                        args.per_type, args.nulls, args.seed, args.threads)
    out = _out(args, "sweep.csv")
    out.write_text(text)
    print(out)
    return 0


def cmd_bench(args, cfg: AppConfig) -> int:
    from .evalbench import count_efficiency

    ts = _templates(args.templates, cfg)
    rep = count_efficiency(ts, slots=args.slots, seed=args.seed)
    text = json.dumps(rep.to_dict(), indent=1)
    _out(args, "efficiency.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_plot(args, cfg: AppConfig) -> int:
    import csv

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("plotting needs matplotlib (pip install batstation[plot])") from exc
    if not args.csv.exists():
        raise DataError(f"{args.csv} does not exist")
    with open(args.csv) as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "snr_db" not in rows[0]:
        raise DataError("expected a sweep CSV")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted({r["type_name"] for r in rows}):
        pts = sorted((float(r["snr_db"]), float(r["detection_prob"])) for r in rows if r["type_name"] == name)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("radar SNR (dB)")
    ax.set_ylabel("detection probability")
    ax.grid(alpha=0.3)
    ax.legend()
    out = args.output or _out(args, args.csv.stem + ".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)
    return 0


COMMANDS = {
    "gen-waveforms": cmd_gen_waveforms, "gen-dataset": cmd_gen_dataset, "init-templates": cmd_init_templates,
    "finetune": cmd_finetune, "calibrate": cmd_calibrate, "sense": cmd_sense, "evaluate": cmd_evaluate,
    "sweep": cmd_sweep, "bench": cmd_bench, "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except BatStationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
