import json

import pytest

from transmode.cli import main

CONFIG = """output_dir = "out"
[data]
n = 300
seed = 2
[features]
k = 10
selectors = ["univariate", "boosting"]
[experiment]
sample_sizes = [50]
seeds = [0]
shots = [0, 1]
[baselines]
n_rounds = 5
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


def test_generate_filter_encode(cfg_path, capsys):
    out = cfg_path.parent / "out"
    assert main(["generate", "--config", str(cfg_path)]) == 0
    assert len((out / "data.csv").read_text().splitlines()) == 301
    assert main(["filter", "--config", str(cfg_path)]) == 0
    assert "kept 300 of 300" in capsys.readouterr().out
    assert (out / "filter_log.jsonl").read_text() == ""
    assert main(["encode", "--config", str(cfg_path), "--seed", "5"]) == 0
    lines = (out / "narratives.jsonl").read_text().splitlines()
    assert len(lines) == 300 and json.loads(lines[0])["trip_id"].startswith("syn5-")


def test_filter_on_csv_reports_rules(tmp_path, fixtures_dir, capsys):
    p = tmp_path / "c.toml"
    p.write_text(f'output_dir = "o"\n[data]\nsource = "csv"\npath = "{fixtures_dir / "filter_cases.csv"}"\n')
    assert main(["filter", "--config", str(p)]) == 0
    text = capsys.readouterr().out
    assert "kept 11 of 20" in text and "excluded_mode: 3" in text and "underage_driver: 1" in text


def test_select_features(cfg_path, capsys):
    assert main(["select-features", "--config", str(cfg_path)]) == 0
    report = json.loads((cfg_path.parent / "out" / "feature_ranking.json").read_text())
    assert sum(r["selected"] for r in report["features"]) == 10
    assert capsys.readouterr().out.count("*") == 10


def test_run_then_strict_report(cfg_path, capsys):
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert "baselines vs zero-shot" in capsys.readouterr().out
    assert main(["report", "--config", str(cfg_path), "--strict", "--json"]) == 0
    text = capsys.readouterr().out
    assert '"cells"' in text
    results = cfg_path.parent / "out" / "results.jsonl"
    lines = results.read_text().splitlines()
    results.write_text("\n".join(lines[:-10]) + "\n")
    assert main(["report", "--config", str(cfg_path), "--strict"]) == 1
    assert main(["report", "--config", str(cfg_path)]) == 0


def test_offline_run_reuses_cache(cfg_path, capsys):
    assert main(["run", "--config", str(cfg_path), "--output", str(cfg_path.parent / "a")]) == 0
    first = (cfg_path.parent / "a" / "report.json").read_text()
    (cfg_path.parent / "a" / "results.jsonl").unlink()
    assert main(["run", "--config", str(cfg_path), "--output", str(cfg_path.parent / "a"), "--offline"]) == 0
    assert (cfg_path.parent / "a" / "report.json").read_text() == first


def test_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\nshots = [-2]\n")
    assert main(["run", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_network_backend_without_key_fails_cleanly(cfg_path, monkeypatch, capsys):
    monkeypatch.setenv("TRANSMODE_NO_SUCH_KEY", "")
    cfg_path.write_text(CONFIG + '[backend]\nkey_env = "TRANSMODE_NO_SUCH_KEY"\n')
    assert main(["run", "--config", str(cfg_path), "--backend", "network"]) == 2
    assert "TRANSMODE_NO_SUCH_KEY" in capsys.readouterr().err
