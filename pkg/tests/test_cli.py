import json

import pytest

from tsa_aqa.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_dive(capsys):
    code, out, err = run_cli(capsys, "parse-dive", "5152B")
    assert code == 0
    assert "5 steps" in out
    assert "1 Twist" in out


def test_parse_dive_unknown_is_machine_readable(capsys):
    code, out, err = run_cli(capsys, "parse-dive", "102B")
    assert code != 0
    doc = json.loads(err.strip())
    assert doc["error"] == "UnknownCodeError"


def test_synth_data_writes_dataset(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "synth-data", "--seed", "0", "--n", "6", "--t", "16",
        "--d", "8", "--sigma", "0.05", "--out-dir", str(tmp_path / "ds"),
    )
    assert code == 0
    assert (tmp_path / "ds" / "annotations.json").exists()
    assert len(list((tmp_path / "ds" / "features").glob("*.fdft"))) == 6


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny trained checkpoint plus its config file and dataset dir."""
    root = tmp_path_factory.mktemp("cli_run")
    config = {
        "variant": "TSA",
        "dn_mode": "without_dn",
        "epochs": 1,
        "seed": 0,
        "l_step": 3,
        "decoder_layers": 1,
        "heads": 2,
        "head_hidden": 8,
        "batch_size": 4,
        "dataset": {"n": 40, "t": 16, "d": 8, "sigma": 0.05, "seed": 3},
    }
    config_path = root / "run.json"
    config_path.write_text(json.dumps(config))
    ckpt = root / "model.tsaw"
    code = main(["train", "--config", str(config_path), "--out", str(ckpt), "--quiet"])
    assert code == 0
    return root, config_path, ckpt


def test_train_writes_checkpoint_and_log(trained):
    root, config_path, ckpt = trained
    assert ckpt.exists()
    log = json.loads((root / "model.trainlog.json").read_text())
    assert len(log["epochs"]) == 1
    assert log["checkpoint_path"] == str(ckpt)


def test_evaluate_prints_table_row(capsys, trained):
    root, config_path, ckpt = trained
    json_out = root / "report.json"
    code, out, err = run_cli(
        capsys, "evaluate", "--ckpt", str(ckpt), "--config", str(config_path),
        "--m", "2", "--dn", "without_dn", "--json-out", str(json_out),
    )
    assert code == 0, err
    assert "AIoU@0.5" in out
    doc = json.loads(json_out.read_text())
    assert "spearman_rho" in doc and "aiou" in doc


def test_segment_outputs_transitions_and_csv(capsys, trained, tmp_path):
    root, config_path, ckpt = trained
    code, out, _ = run_cli(
        capsys, "synth-data", "--seed", "9", "--n", "1", "--t", "16",
        "--d", "8", "--sigma", "0.05", "--out-dir", str(tmp_path / "one"),
    )
    assert code == 0
    feature_file = next((tmp_path / "one" / "features").glob("*.fdft"))
    code, out, err = run_cli(capsys, "segment", "--features", str(feature_file),
                             "--ckpt", str(ckpt))
    assert code == 0, err
    lines = out.strip().splitlines()
    assert lines[0].startswith("decoded transitions:")
    assert lines[1].startswith("transition,")
    assert len(lines) == 2 + 2  # header + one row per transition


def test_attn_dump_writes_per_step_csv(capsys, trained, tmp_path):
    root, config_path, ckpt = trained
    run_cli(capsys, "synth-data", "--seed", "4", "--n", "2", "--t", "16",
            "--d", "8", "--sigma", "0.05", "--out-dir", str(tmp_path / "pair"))
    files = sorted((tmp_path / "pair" / "features").glob("*.fdft"))
    out_dir = tmp_path / "attn"
    code, out, err = run_cli(
        capsys, "attn-dump", "--pair", f"{files[0]},{files[1]}",
        "--ckpt", str(ckpt), "--out-dir", str(out_dir),
    )
    assert code == 0, err
    dumps = sorted(out_dir.glob("step*_attention.csv"))
    assert len(dumps) == 3
    rows = dumps[0].read_text().strip().splitlines()
    assert len(rows) == 1 + 3  # header + l_step query rows


def test_gradcheck_small(capsys):
    code, out, err = run_cli(capsys, "gradcheck", "--points", "2")
    assert code == 0, err
    assert "all" in out and "within" in out


def test_missing_checkpoint_fails_cleanly(capsys, trained):
    root, config_path, _ = trained
    code, out, err = run_cli(
        capsys, "evaluate", "--ckpt", str(root / "missing.tsaw"),
        "--config", str(config_path),
    )
    assert code != 0
    doc = json.loads(err.strip())
    assert "error" in doc
