import json

import pytest

from batstation.cli import build_parser, main
from batstation.dataset import load_all
from batstation.grid import ResourceGrid, write_grid


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small end-to-end run: library, splits, templates and threshold."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-waveforms", "--per-type", "10", "--out-dir", str(d)]) == 0
    lib = d / "waveforms"
    assert main(["gen-dataset", "--library", str(lib / "train"), "--split", "train", "--per-type", "4",
                 "--out-dir", str(d / "data"), "--seed", "1"]) == 0
    assert main(["gen-dataset", "--library", str(lib / "train"), "--split", "val", "--per-type", "2",
                 "--out-dir", str(d / "data"), "--seed", "2"]) == 0
    assert main(["gen-dataset", "--library", str(lib / "test"), "--split", "test", "--per-type", "3",
                 "--nulls", "25", "--snr", "30", "--out-dir", str(d / "data"), "--seed", "3"]) == 0
    assert main(["init-templates", "--dataset", str(d / "data" / "train.json"), "--library", str(lib / "train"),
                 "--out-dir", str(d)]) == 0
    assert main(["calibrate", "--templates", str(d / "templates_init.bat"),
                 "--dataset", str(d / "data" / "test.json"), "--out-dir", str(d)]) == 0
    return d


# ---------------------------------------------------------------- pipeline

def test_generated_artifacts(workdir):
    for name in ("waveforms/train/pulses.json", "waveforms/test/pulses.json", "data/train.json",
                 "data/test.batg", "templates_init.bat", "threshold.json"):
        assert (workdir / name).exists(), name
    th = json.loads((workdir / "threshold.json").read_text())
    assert th["null_count"] == 25 and th["target_far"] == 0.05 and th["y_th"] > 0


def test_finetune_writes_history(workdir, capsys):
    code, out = run(capsys, "finetune", "--templates", workdir / "templates_init.bat",
                    "--train", workdir / "data/train.json", "--val", workdir / "data/val.json",
                    "--epochs", "2", "--lr", "1e-2", "--out-dir", workdir / "ft")
    assert code == 0 and "best epoch" in out
    lines = (workdir / "ft" / "finetune_history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_accuracy" and len(lines) == 4
    assert (workdir / "ft" / "templates_tuned.bat").exists()


def test_evaluate_is_byte_identical_across_runs_and_threads(workdir, capsys):
    outs = []
    for i, threads in enumerate((1, 1, 4)):
        code, _ = run(capsys, "evaluate", "--templates", workdir / "templates_init.bat",
                      "--threshold", workdir / "threshold.json", "--dataset", workdir / "data/test.json",
                      "--threads", threads, "--out-dir", workdir / f"ev{i}")
        assert code == 0
        outs.append([(workdir / f"ev{i}" / n).read_bytes()
                     for n in ("eval_samples.csv", "eval_summary.csv", "eval_confusion.csv")])
    assert outs[0] == outs[1] == outs[2]


def test_sense_reports_json(workdir, capsys):
    sample = next(s for s in load_all(workdir / "data/test.json") if s.labels.detected)
    write_grid(workdir / "one.batg", sample.grid)
    (workdir / "one.json").write_text(json.dumps({"alloc": sample.provenance["alloc"],
                                                  "dmrs_seed": sample.dmrs_seed}))
    code, out = run(capsys, "sense", "--templates", workdir / "templates_init.bat", "--threshold", "0.0",
                    "--grid", workdir / "one.batg", "--meta", workdir / "one.json", "--multi")
    assert code == 0
    rep = json.loads(out)
    assert rep["detected"] == 1 and rep["type_id"] in range(1, 6) and rep["peaks"]
    a = sample.allocation
    code, out = run(capsys, "sense", "--templates", workdir / "templates_init.bat", "--threshold", "1e9",
                    "--grid", workdir / "one.batg", "--alloc-start", a.subcarrier_start,
                    "--alloc-count", a.subcarrier_count, "--profile", a.traffic_profile.value,
                    "--modulation", a.modulation.value, "--dmrs-seed", sample.dmrs_seed)
    assert code == 0 and json.loads(out)["detected"] == 0


def test_bench_and_sweep(workdir, capsys):
    code, out = run(capsys, "bench", "--templates", workdir / "templates_init.bat", "--slots", "2",
                    "--out-dir", workdir / "bench")
    assert code == 0 and json.loads(out)["parameter_count"] < 10_000
    code, _ = run(capsys, "sweep", "--templates", workdir / "templates_init.bat", "--threshold",
                  workdir / "threshold.json", "--library", workdir / "waveforms/test", "--snr", "10", "30",
                  "--per-type", "1", "--nulls", "1", "--out-dir", workdir / "sw")
    assert code == 0
    assert len((workdir / "sw" / "sweep.csv").read_text().splitlines()) == 11
    pytest.importorskip("matplotlib")
    code, _ = run(capsys, "plot", "--csv", workdir / "sw" / "sweep.csv", "--out-dir", workdir / "sw")
    assert code == 0 and (workdir / "sw" / "sweep.png").exists()


# ---------------------------------------------------------------- exit codes

def test_missing_inputs_are_data_errors(tmp_path, capsys):
    assert main(["evaluate", "--templates", str(tmp_path / "none.bat"), "--threshold", "1",
                 "--dataset", str(tmp_path / "none.json")]) == 3
    assert main(["gen-dataset", "--library", str(tmp_path / "nolib")]) == 3


def test_malformed_threshold_file(workdir, tmp_path):
    bad = tmp_path / "t.json"
    bad.write_text("{}")
    assert main(["evaluate", "--templates", str(workdir / "templates_init.bat"), "--threshold", str(bad),
                 "--dataset", str(workdir / "data/test.json")]) == 3


def test_config_errors(workdir, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[nonsense]\nx = 1\n")
    assert main(["--config", str(cfg), "bench", "--templates", str(workdir / "templates_init.bat")]) == 2
    assert main(["gen-waveforms", "--per-type", "1", "--out-dir", str(tmp_path)]) == 2
    write_grid(tmp_path / "zero.batg", ResourceGrid.zeros())
    assert main(["sense", "--templates", str(workdir / "templates_init.bat"), "--threshold", "1",
                 "--grid", str(tmp_path / "zero.batg")]) == 2  # no allocation given


def test_training_divergence_exit_code(workdir, tmp_path):
    code = main(["finetune", "--templates", str(workdir / "templates_init.bat"),
                 "--train", str(workdir / "data/train.json"), "--val", str(workdir / "data/val.json"),
                 "--epochs", "2", "--lr", "1e300", "--out-dir", str(tmp_path)])
    assert code == 4


def test_parser_accepts_global_flags_after_subcommand():
    args = build_parser().parse_args(["bench", "--templates", "t.bat", "--seed", "9", "--threads", "2"])
    assert args.seed == 9 and args.threads == 2 and args.slots == 100
    args = build_parser().parse_args(["--seed", "4", "bench", "--templates", "t.bat"])
    assert args.seed == 4
