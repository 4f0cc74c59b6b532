import json
import os

import pytest

from hydromarket.cli import EXIT_ERROR, EXIT_OK, main
from hydromarket.system import load_system


def test_gen_case_round_trips(tmp_path):
    out = str(tmp_path / "out")
    status = main(["--pipeline", "gen-case", "--profile", "toy", "--out", out])
    assert status == EXIT_OK
    system = load_system(os.path.join(out, "toy.json"))
    assert system.horizon.stages == 2
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["pipeline"] == "gen-case"
    assert "numpy" in manifest["versions"]
    assert manifest["exit_status"] == EXIT_OK


def test_dispatch_pipeline(tmp_path):
    out = str(tmp_path / "out")
    status = main(["--pipeline", "dispatch", "--profile", "toy", "--out", out])
    assert status == EXIT_OK
    for name in ("spot.csv", "storage.csv", "generation.csv", "manifest.json"):
        assert os.path.exists(os.path.join(out, name))
    import csv

    rows = list(csv.DictReader(open(os.path.join(out, "spot.csv"))))
    assert len(rows) == 2  # 2 stages x 1 block x 1 scenario
    assert float(rows[0]["spot"]) > 0


def test_dispatch_from_config_file(tmp_path):
    cfg = tmp_path / "sys.json"
    cfg.write_text(json.dumps({
        "plants": {"thermal": [{"id": "g", "cost": 25.0, "capacity": 10.0}]},
        "horizon": {"stages": 1, "scenarios": 1, "openings": 1,
                    "demand": [[5.0]]},
    }))
    out = str(tmp_path / "out")
    status = main(["--pipeline", "dispatch", "--config", str(cfg), "--out", out])
    assert status == EXIT_OK


def test_missing_config_is_an_error(tmp_path, capsys):
    out = str(tmp_path / "out")
    status = main(["--pipeline", "dispatch", "--config",
                   str(tmp_path / "nope.json"), "--out", out])
    assert status == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_no_config_or_profile_is_an_error(tmp_path, capsys):
    status = main(["--pipeline", "dispatch", "--out", str(tmp_path / "out")])
    assert status == EXIT_ERROR


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("HYDROMARKET_PROFILE", "toy")
    out = str(tmp_path / "out")
    status = main(["--pipeline", "gen-case", "--out", out])
    assert status == EXIT_OK
    assert os.path.exists(os.path.join(out, "toy.json"))
