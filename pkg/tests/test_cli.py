"""CLI subcommands: exit codes, stage round-trips, overrides."""

import json

import pytest

from fedforget.cli import main

from test_pipeline import MICRO


@pytest.fixture
def config_path(tmp_path):
    import copy

    obj = copy.deepcopy(MICRO)
    obj["output_dir"] = str(tmp_path / "run")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(obj))
    return path


def test_stage_by_stage_round_trip(config_path, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--config", str(config_path)]) == 0
    assert (run / "baseline.ckpt").exists()
    assert main(["explain", "--config", str(config_path)]) == 0
    assert (run / "influential.json").exists()
    assert main(["unlearn", "--config", str(config_path)]) == 0
    assert (run / "unlearned.ckpt").exists()
    assert main(["eval", "--config", str(config_path)]) == 0
    out = capsys.readouterr().out
    assert "baseline" in out and "unlearned" in out
    assert main(["attack", "--config", str(config_path)]) == 0
    assert (run / "attack.csv").exists()


def test_unlearn_scheme_override(config_path, tmp_path, capsys):
    main(["train", "--config", str(config_path)])
    main(["explain", "--config", str(config_path)])
    assert main(["unlearn", "--config", str(config_path), "--scheme", "ce"]) == 0
    out = capsys.readouterr().out
    assert "via ce" in out
    assert "traffic 0 bytes" in out


def test_unlearn_selection_override(config_path, capsys):
    main(["train", "--config", str(config_path)])
    main(["explain", "--config", str(config_path)])
    assert main(["unlearn", "--config", str(config_path), "--select", "random"]) == 0
    assert "random" in capsys.readouterr().out


def test_run_subcommand_full_pipeline(config_path, tmp_path, capsys):
    assert main(["run", "--config", str(config_path)]) == 0
    out = capsys.readouterr().out
    assert "pipeline complete" in out
    assert (tmp_path / "run" / "manifest.json").exists()


def test_costs_subcommand(config_path, capsys):
    assert main(["costs", "--config", str(config_path)]) == 0
    out = capsys.readouterr().out
    assert "retrain" in out and "ce" in out
    assert main(["costs", "--config", str(config_path), "--delta", "0.05", "--n", "10"]) == 0
    assert "delta=0.05" in capsys.readouterr().out


def test_exit_code_1_on_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"learning_rate": -1}}))
    assert main(["train", "--config", str(bad)]) == 1
    assert "train.learning_rate" in capsys.readouterr().err


def test_exit_code_1_on_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "absent.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_exit_code_2_on_bad_data_file(tmp_path, capsys):
    import copy

    obj = copy.deepcopy(MICRO)
    obj["output_dir"] = str(tmp_path / "run")
    csv_path = tmp_path / "broken.csv"
    csv_path.write_text("0,1,2,3\n")  # not a square image
    obj["dataset"] = {"kind": "csv", "path": str(csv_path), "class_count": 3}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(obj))
    assert main(["train", "--config", str(cfg_path)]) == 2


def test_exit_code_2_on_missing_checkpoint(config_path, capsys):
    assert main(["eval", "--config", str(config_path)]) == 2
    assert "no checkpoints" in capsys.readouterr().err


def test_unlearn_without_baseline_fails_cleanly(config_path):
    rc = main(["unlearn", "--config", str(config_path)])
    assert rc == 2  # missing checkpoint file is an io/data problem


def test_init_config(tmp_path, capsys):
    target = tmp_path / "starter.json"
    assert main(["init-config", str(target)]) == 0
    parsed = json.loads(target.read_text())
    assert parsed["train"]["global_rounds"] == 50
    assert main(["init-config", str(target)]) == 1  # refuses to overwrite
    assert "refusing" in capsys.readouterr().err


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("train", "explain", "unlearn", "eval", "attack", "costs", "run"):
        assert cmd in out


def test_eval_architecture_mismatch_exits_3(config_path, tmp_path, capsys):
    """Checkpoint trained on 8x8 inputs, config mutated to 16x16: the shape
    mismatch is neither a config nor a data problem, so the runtime code 3."""
    import copy

    main(["train", "--config", str(config_path)])
    obj = copy.deepcopy(MICRO)
    obj["output_dir"] = str(tmp_path / "run")
    obj["dataset"]["image_size"] = 16
    bad = tmp_path / "mutated.json"
    bad.write_text(json.dumps(obj))
    assert main(["eval", "--config", str(bad)]) == 3
    assert "error" in capsys.readouterr().err
