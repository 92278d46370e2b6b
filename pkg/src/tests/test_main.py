import json

from src.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main


def test_presets_command(capsys):
    assert main(["presets"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "remark5:" in out
    assert "appendixD-delayed:" in out


def test_run_with_preset_and_overrides(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"scenario": "remark5", "horizon": 50}))
    out_dir = tmp_path / "results"
    code = main(["run", str(config), "--replicates", "2", "--seed", "9", "--out", str(out_dir),
                 "--check-conditions"])
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["seeds"]["master_seed"] == 9
    assert summary["seeds"]["replicates"] == [0, 1]
    assert summary["verdicts"]["lambda"] is True
    assert (out_dir / "mse.csv").read_text().startswith("k,node,mse,stderr\n")


def test_run_preset_without_config_file(tmp_path):
    assert main(["run", "--preset", "remark5", "--replicates", "1", "--out", str(tmp_path)]) == EXIT_OK


def test_check_prints_json(capsys):
    assert main(["check", "--preset", "remark5"]) == EXIT_OK
    out = capsys.readouterr().out
    report = json.loads(out[out.index("{\n"):])
    assert report["scenario"] == "remark5"
    assert report["reports"]["lambda"]["verdict"] is True


def test_config_errors_exit_with_one(tmp_path):
    assert main(["check", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["check", str(broken)]) == EXIT_CONFIG
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"scenario": "remark5", "horizon": 0}))
    assert main(["check", str(invalid)]) == EXIT_CONFIG
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"scenario": "no-such-preset"}))
    assert main(["check", str(unknown)]) == EXIT_CONFIG
    assert main(["run"]) == EXIT_CONFIG


def test_runtime_failures_exit_with_two(tmp_path):
    config = tmp_path / "short.json"
    config.write_text(json.dumps({
        "scenario": {
            "x0": [1.0],
            "states": [{"H": [[[1.0]]], "adjacency": [[0.0]]}],
            "process": {"kind": "deterministic", "schedule": [0], "cyclic": False},
        },
        "horizon": 3,
    }))
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == EXIT_RUNTIME
