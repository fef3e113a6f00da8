import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from jsqlab.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_validate_subcritical(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "mm1.json"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "rho=0.8 " in out
    report = json.loads((tmp_path / "validate.json").read_text())
    assert report["rho"] == pytest.approx(0.8)
    assert report["meta"]["spec_hash"]


def test_validate_supercritical(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "overloaded.json"), "--out", str(tmp_path)]) == 1
    assert "not subcritical" in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n "N": 2,\n')
    assert main(["validate", "--config", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err
    bad.write_text(json.dumps({"schema": 1, "N": 2, "streams": []}))
    assert main(["validate", "--config", str(bad)]) == 2
    assert "$.service" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 2


def test_simulate_is_deterministic_across_runs_and_threads(tmp_path):
    args = ["simulate", "--config", str(CONFIGS / "small.json"), "--seed", "7", "--horizon", "300", "--reps", "3"]
    assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "8"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["events_rep0.jsonl", "events_rep1.jsonl", "events_rep2.jsonl", "metrics.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_header_echoes_run_parameters(tmp_path):
    main(["simulate", "--config", str(CONFIGS / "mm1.json"), "--seed", "0x10", "--horizon", "50", "--out", str(tmp_path)])
    text = (tmp_path / "metrics.csv").read_bytes().decode()
    first = text.splitlines()[0]
    assert first.startswith("# ")
    for field in ("spec_hash=", "seed=16", "horizon=50.0", "version="):
        assert field in first
    assert "\r" not in text


def test_jsonl_metrics_carry_meta(tmp_path):
    main(["simulate", "--config", str(CONFIGS / "mm1.json"), "--horizon", "50", "--format", "jsonl",
          "--out", str(tmp_path)])
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["meta"]["horizon"] == 50.0
    assert json.loads(lines[1])["queue"] == 0


def test_routing_and_tails_and_drift(tmp_path):
    assert main(["routing", "--config", str(CONFIGS / "small.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "routing.csv").read_text().startswith("# spec_hash=")
    assert main(["tails", "--config", str(CONFIGS / "mm1.json"), "--horizon", "3000", "--out", str(tmp_path)]) == 0
    assert "P(Z>l)" in (tmp_path / "tails.csv").read_text()
    assert main(["drift-audit", "--config", str(CONFIGS / "small.json"), "--horizon", "30", "--out",
                 str(tmp_path)]) == 0


def test_section7_strict_and_compare(tmp_path, capsys):
    assert main(["section7", "--config", str(CONFIGS / "section7_strict.json"), "--out", str(tmp_path)]) == 0
    assert "rho=0.992" in capsys.readouterr().out
    bad = tmp_path / "s7.json"
    bad.write_text(json.dumps({"section7": {"gamma0": 0.001, "eta": 0.01, "h2": 1000, "epsilon": 1e-3,
                                            "strict": True}}))
    assert main(["section7", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text(json.dumps({"section7": {"gamma0": 0.001}}))
    assert main(["section7", "--config", str(bad)]) == 2
    cfg = str(CONFIGS / "small.json")
    assert main(["compare", "--config", cfg, "--config-b", cfg, "--horizon", "500", "--out", str(tmp_path)]) == 0
    assert main(["compare", "--config", cfg, "--horizon", "500"]) == 2


def test_threads_env_fallback(tmp_path):
    env = dict(os.environ, JSQLAB_THREADS="4")
    res = subprocess.run(
        [sys.executable, "-m", "jsqlab.cli", "simulate", "--config", str(CONFIGS / "small.json"), "--horizon", "50",
         "--reps", "2", "--out", str(tmp_path)],
        env=env, capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "rep 1" in res.stdout
