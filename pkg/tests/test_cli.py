import subprocess
import sys

import numpy as np
import pytest

from jointgen import data as datamod
from jointgen.cli import main


@pytest.fixture
def dataset_path(tmp_path):
    path = tmp_path / "map.tsv"
    assert main(["gen-data", "--family", "deterministic_map", "--out", str(path),
                 "--n", "300", "--dim", "1", "--map-scale", "2.0", "--seed", "5"]) == 0
    return path


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(
        "mode=paired_5\ntotal_steps=30\nbatch_size=8\ngen_hidden=8\n"
        "critic_hidden=8\ngen_layers=1\ncritic_layers=1\nnoise_dim=2\n"
        "seed=11\nlog_every=10\n")
    return path


@pytest.fixture
def run_dir(tmp_path, dataset_path, config_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_path), "--data", str(dataset_path),
                 "--out-dir", str(out)]) == 0
    return out


def test_gen_data_writes_dataset_and_manifest(dataset_path):
    ds = datamod.load(dataset_path, "paired")
    assert ds.tables[0].n == 300
    manifest = dataset_path.with_suffix(dataset_path.suffix + ".manifest").read_text()
    assert "verb=gen-data" in manifest and "spec.family=deterministic_map" in manifest


def test_train_writes_artifacts(run_dir):
    assert (run_dir / "checkpoint.ckpt").exists()
    assert (run_dir / "train_log.tsv").exists()
    manifest = (run_dir / "manifest.txt").read_text()
    assert "verb=train" in manifest and "config.mode=paired_5" in manifest


def test_train_set_override(tmp_path, dataset_path, config_path):
    out = tmp_path / "ov"
    assert main(["train", "--config", str(config_path), "--data", str(dataset_path),
                 "--out-dir", str(out), "--set", "total_steps=5"]) == 0
    lines = (out / "train_log.tsv").read_text().splitlines()
    assert len(lines) == 6
    assert "config.total_steps=5" in (out / "manifest.txt").read_text()


def test_sample_joint_deterministic(tmp_path, run_dir):
    out_a, out_b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    for out in (out_a, out_b):
        assert main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                     "--source", "joint", "--n", "50", "--seed", "7",
                     "--out", str(out)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    ds = datamod.load(out_a, "paired")
    assert ds.tables[0].n == 50
    assert ds.tables[0].domains == ("x", "y")


def test_sample_marginal(tmp_path, run_dir):
    out = tmp_path / "marg.tsv"
    assert main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--source", "marginal", "--domain", "y", "--n", "20",
                 "--out", str(out)]) == 0
    ds = datamod.load(out, "paired")
    assert ds.tables[0].domains == ("y",)


def test_sample_conditional_imputes(tmp_path, run_dir, dataset_path):
    out = tmp_path / "cond.tsv"
    assert main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--source", "conditional", "--direction", "y_given_x",
                 "--given", str(dataset_path), "--out", str(out)]) == 0
    given = datamod.load(dataset_path, "paired")
    produced = datamod.load(out, "paired")
    np.testing.assert_array_equal(produced.marginal("x"), given.marginal("x"))


def test_sample_conditional_wrong_dimension_exits_1(tmp_path, run_dir, capsys):
    bad = tmp_path / "bad.tsv"
    assert main(["gen-data", "--family", "deterministic_map", "--out", str(bad),
                 "--n", "10", "--dim", "3"]) == 0
    code = main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--source", "conditional", "--direction", "y_given_x",
                 "--given", str(bad), "--out", str(tmp_path / "nope.tsv")])
    assert code == 1
    err = capsys.readouterr().err
    assert "dim" in err


def test_sample_conditional_requires_given(run_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
              "--source", "conditional", "--out", str(tmp_path / "x.tsv")])
    assert exc.value.code == 2


def test_eval_writes_reports(tmp_path, run_dir, dataset_path):
    out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--data", str(dataset_path), "--out-dir", str(out),
                 "--n", "100"]) == 0
    summary = (out / "eval_summary.txt").read_text()
    assert "mmd2=" in summary and "conditional_rmse=" in summary
    assert (out / "eval_log.tsv").exists()
    assert "verb=eval" in (out / "eval_manifest.txt").read_text()


def test_confusion_prints_matrix(run_dir, dataset_path, capsys):
    assert main(["confusion", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--data", str(dataset_path), "--n-per-source", "20"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 5
    row = [float(v) for v in lines[0].split("\t")]
    assert len(row) == 5 and abs(sum(row) - 1.0) < 1e-6


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    line = [l for l in out.splitlines() if l.startswith("max_relative_error=")][0]
    assert float(line.split("=")[1]) < 1e-4


def test_export_plots(tmp_path, run_dir):
    out = tmp_path / "plots"
    sample_file = tmp_path / "s.tsv"
    assert main(["sample", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                 "--source", "joint", "--n", "20", "--out", str(sample_file)]) == 0
    assert main(["export-plots", "--log", str(run_dir / "train_log.tsv"),
                 "--samples", str(sample_file), "--out-dir", str(out)]) == 0
    assert (out / "critic_loss.dat").exists()
    assert (out / "samples.dat").exists()
    body = (out / "critic_loss.dat").read_text().splitlines()
    assert body[0].startswith("#")
    step, value = body[1].split()
    float(step), float(value)


def test_unknown_verb_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_unknown_flag_exits_2(config_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", str(config_path), "--frobnicate", "x"])
    assert exc.value.code == 2


def test_missing_data_file_exits_1(tmp_path, config_path, capsys):
    code = main(["train", "--config", str(config_path),
                 "--data", str(tmp_path / "absent.tsv"),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_console_entry_point_runs():
    result = subprocess.run([sys.executable, "-m", "jointgen.cli", "--help"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    assert "gen-data" in result.stdout
