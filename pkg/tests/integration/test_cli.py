"""Tests for the hsim-dml command line."""

import json
from unittest.mock import patch

import pytest

from hsim_dml.cli import cli_main, main
from hsim_dml.dataio import load_features

pytestmark = pytest.mark.integration


@pytest.fixture
def config_file(tmp_path, tiny_config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_config, indent=2))
    return path


def test_generate(tmp_path, capsys):
    target = tmp_path / "data.csv"
    assert main(["generate", "--format", "csv", "--out", str(target), "--seed", "3"]) == 0
    data = load_features(target, format="csv")
    assert data.num_classes == 20
    assert "wrote 1200 samples (20 classes)" in capsys.readouterr().out


def test_train_then_eval(tmp_path, config_file, capsys):
    out = tmp_path / "cli-run"
    assert main(["train", "--config", str(config_file), "--out", str(out), "--dump-margins"]) == 0
    assert capsys.readouterr().out.startswith("tiny: recall@1=")
    assert (out / "config.json").read_text() == config_file.read_text()
    assert (out / "margins" / "epoch_002.json").is_file()

    assert main(["eval", "--config", str(config_file), "--checkpoint", str(out / "model.hsim")]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0].startswith("recall@1=")
    assert printed[1] == "query\tlabel\tflag\tneighbors"


def test_seed_override_changes_run(tmp_path, config_file):
    main(["train", "--config", str(config_file), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(config_file), "--out", str(tmp_path / "b"), "--seed", "8"])
    assert (tmp_path / "a" / "model.hsim").read_bytes() != (tmp_path / "b" / "model.hsim").read_bytes()


def test_sweep_prints_table(tmp_path, config_file, capsys):
    assert main(["sweep", "--config", str(config_file), "--out", str(tmp_path / "sweep"), "--ratios", "0.1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("variant,loss,margin_mode,sim_kind,noise_ratio,seed,recall@1")
    assert [line.split(",")[0] for line in lines[1:]] == ["baseline", "full"]


def test_cli_main_reports_errors(tmp_path, capsys):
    with patch("sys.argv", ["hsim-dml", "train", "--config", str(tmp_path / "missing.json")]):
        with pytest.raises(SystemExit) as exc:
            cli_main()
    assert exc.value.code == 1
    assert "Error: invalid configuration" in capsys.readouterr().err


def test_invalid_config_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"lossy": "ms"}}))
    with patch("sys.argv", ["hsim-dml", "train", "--config", str(path)]):
        with pytest.raises(SystemExit) as exc:
            cli_main()
    assert exc.value.code == 1
    assert "train.lossy" in capsys.readouterr().err
