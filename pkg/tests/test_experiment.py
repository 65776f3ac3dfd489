import dataclasses
import json

import pytest

from transmode import experiment as ex
from transmode.backend import MockBackend
from transmode.codes import MODES, Mode
from transmode.errors import CacheMiss, ConfigError, TransportError
from transmode.experiment import ResultLog, ResultRow, config_from_dict, load_config
from transmode.survey import load_records, sociodemographic_filter, speed_consistency_filter
from transmode.synthetic import DEFAULT_MODE_SHARES, RAW_MODE_SHARES, generate_synthetic, normalize_shares, write_csv


def small_config(tmp_path, **grid):
    raw = {
        "output_dir": "out",
        "data": {"n": 400, "seed": 1},
        "features": {"selectors": ["univariate", "boosting"]},
        "experiment": {"sample_sizes": [60], "seeds": [0, 1], "shots": [0, 2], **grid},
        "baselines": {"n_rounds": 5},
    }
    return config_from_dict(raw, tmp_path)


# --------------------------------------------------------------------------
# synthetic data


def test_default_shares_counts_within_one():
    ds = generate_synthetic(1000, seed=0)
    counts = ds.mode_counts()
    assert sum(RAW_MODE_SHARES.values()) == pytest.approx(0.970)
    for m in MODES:
        assert abs(counts[m] - DEFAULT_MODE_SHARES[m] * 1000) <= 1
    assert counts[Mode.CAR] == 391 and counts[Mode.SCHOOL_BUS] == 22


def test_synthetic_is_seeded():
    assert generate_synthetic(200, 4).records == generate_synthetic(200, 4).records
    assert generate_synthetic(200, 4).records != generate_synthetic(200, 5).records


def test_synthetic_passes_filters_and_is_plausible():
    ds = generate_synthetic(800, seed=2)
    out = sociodemographic_filter(speed_consistency_filter(ds))
    assert len(out) == 800 and not out.log and not out.notes
    assert all(r.trip_purpose == "school" and r.age < 18 for r in ds if r.observed_mode is Mode.SCHOOL_BUS)
    walks = [r.distance_miles for r in ds if r.observed_mode is Mode.WALK]
    drives = [r.distance_miles for r in ds if r.observed_mode is Mode.CAR]
    assert sum(walks) / len(walks) < sum(drives) / len(drives)


def test_shares_validation():
    with pytest.raises(ConfigError):
        normalize_shares({"Car": 0.5, "Walk": 0.3})
    with pytest.raises(ConfigError):
        generate_synthetic(10, mode_shares={"Car": 0.9, "Walk": 0.2})
    only = generate_synthetic(50, mode_shares={"Car": 1.0})
    assert only.mode_counts()[Mode.CAR] == 50


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(120, seed=3)
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back, report = load_records(path, extras=("trip_start_hour", "weekend"))
    assert not report.rejected and len(back) == 120
    assert [r.observed_mode for r in back] == [r.observed_mode for r in ds]
    assert back.records[5].age == ds.records[5].age


# --------------------------------------------------------------------------
# configuration


def test_config_file_and_relative_paths(tmp_path):
    (tmp_path / "exp.toml").write_text(
        'output_dir = "res"\n[data]\nsource = "csv"\npath = "data/x.csv"\n'
        '[experiment]\nsample_sizes = [100, 200]\nshots = [0, 1, 5]\ndomain_enhanced = true\n'
        'models = ["gpt-4o", "o3-mini"]\n[backend]\nkind = "network"\nparallelism = 2\n')
    cfg = load_config(tmp_path / "exp.toml")
    assert cfg.output_dir == str(tmp_path / "res")
    assert cfg.data.path == str(tmp_path / "data" / "x.csv")
    assert cfg.grid.sample_sizes == (100, 200) and cfg.grid.domain_enhanced == (True,)
    assert [s.name for s in cfg.grid.strategies()] == ["zero-shot+domain", "few-shot-1+domain",
                                                       "few-shot-5+domain"]
    assert ex._profile(cfg, "o3-mini").supports_temperature is False


@pytest.mark.parametrize("raw,match", [
    ({"bogus": {}}, "unknown config sections"),
    ({"data": {"rows": 5}}, "unknown keys"),
    ({"experiment": {"sample_sizes": []}}, "at least one"),
    ({"experiment": {"sample_sizes": [0]}}, "positive"),
    ({"experiment": {"seeds": []}}, "seeds"),
    ({"experiment": {"demo_style": "table"}}, "demo_style"),
    ({"backend": {"kind": "carrier-pigeon"}}, "backend kind"),
    ({"data": {"source": "csv"}}, "data.path"),
    ({"features": {"selectors": ["astrology"]}}, "unknown selectors"),
    ({"baselines": {"algorithms": ["SVM"]}}, "unknown baseline"),
    ({"experiment": {"shots": [-1]}}, "non-negative"),
])
def test_config_errors(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_config_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")
    (tmp_path / "bad.toml").write_text("[data\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


# --------------------------------------------------------------------------
# results log


def row(i, **kw):
    base = dict(model_id="m", strategy="zero-shot", sample_size=10, seed=0, trip_id=f"t{i}", truth="Car",
                prediction="Car", latency=0.0, cache_hit=False)
    base.update(kw)
    return ResultRow(**base)


def test_result_log_appends_dedupes_and_repairs(tmp_path, caplog):
    path = tmp_path / "r.jsonl"
    log = ResultLog(path)
    log.append([row(0), row(1)])
    log.append([row(1), row(2)])
    assert len(ResultLog(path).rows) == 3
    with open(path, "a") as fh:
        fh.write('{"model_id": "m", "strat')
    again = ResultLog(path)
    assert len(again.rows) == 3 and path.read_text().endswith("\n")


# --------------------------------------------------------------------------
# end-to-end


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = small_config(tmp, domain_enhanced=[False, True])
    out = ex.run_experiment(cfg)
    return cfg, out


def test_every_method_sees_the_same_test_set(finished_run):
    cfg, out = finished_run
    rows = ResultLog(out / ex.RESULTS_FILE).rows
    splits = json.loads((out / ex.SPLITS_FILE).read_text())
    groups = {}
    for r in rows:
        groups.setdefault((r.model_id, r.strategy, r.sample_size, r.seed), set()).add(r.trip_id)
    methods = {(m, s) for m, s, _, _ in groups}
    assert ("GradientBoosting", "baseline") in methods and ("LogitBoost", "baseline") in methods
    assert len(methods) == 2 + 4
    for (m, s, size, seed), ids in groups.items():
        assert ids == set(splits[f"{size}/{seed}"]) and len(ids) == size


def test_report_contents(finished_run):
    cfg, out = finished_run
    report = json.loads((out / ex.REPORT_JSON).read_text())
    cells, summary = report["cells"], report["summary"]
    assert sorted(cells) == sorted(ex.expected_cells(cfg))
    assert summary["missing_cells"] == []
    c = cells["gpt-4o-mini|few-shot-2|60"]
    assert c["seeds"] == [0, 1] and c["n"] == 120 and c["accuracy_std"] is not None
    fs = summary["few_shot"]["gpt-4o-mini|60"]
    zero = cells["gpt-4o-mini|zero-shot|60"]["accuracy"]
    assert fs["zero_shot"] == zero
    assert fs["improvement_percent"] == pytest.approx((fs["best_few_shot"] - zero) / zero * 100, abs=1e-12)
    text = (out / ex.REPORT_TEXT).read_text()
    for title in ("baselines vs zero-shot", "best few-shot", "with and without domain knowledge", "gap"):
        assert title in text
    assert "latency" not in json.dumps(report)


def test_strict_report_flags_missing_cells(finished_run, tmp_path):
    _, out = finished_run
    text, code = ex.emit_report(out, strict=True, write=False)
    assert code == 0
    partial = tmp_path / "partial"
    partial.mkdir()
    for name in (ex.SPLITS_FILE, ex.GRID_FILE):
        (partial / name).write_text((out / name).read_text())
    lines = (out / ex.RESULTS_FILE).read_text().splitlines()
    kept = [ln for ln in lines if '"LogitBoost"' not in ln]
    kept = kept[:-3]  # also tear one LLM cell
    (partial / ex.RESULTS_FILE).write_text("\n".join(kept) + "\n")
    text, code = ex.emit_report(partial, strict=True, write=False)
    assert code == 1 and "Missing or incomplete cells" in text and "LogitBoost|baseline|60" in text
    assert ex.emit_report(partial, strict=False, write=False)[1] == 0


class FlakyBackend:
    """Mock backend that fails permanently after ``limit`` calls."""

    def __init__(self, limit):
        self.inner, self.limit, self.calls = MockBackend(), limit, 0

    def complete(self, prompt, profile):
        self.calls += 1
        if self.calls > self.limit:
            raise TransportError("simulated outage")
        return self.inner.complete(prompt, profile)


def test_interrupted_run_resumes_to_identical_report(tmp_path, finished_run):
    _, ref = finished_run
    cfg = small_config(tmp_path, domain_enhanced=[False, True])
    with pytest.raises(TransportError):
        ex.run_experiment(cfg, backend=FlakyBackend(limit=200))
    out = tmp_path / "out"
    text, code = ex.emit_report(out, strict=True, write=False)
    assert code == 1
    ex.run_experiment(cfg)
    assert (out / ex.REPORT_JSON).read_bytes() == (ref / ex.REPORT_JSON).read_bytes()
    assert (out / ex.REPORT_TEXT).read_bytes() == (ref / ex.REPORT_TEXT).read_bytes()


def test_invalid_replies_are_reprompted_then_scored_wrong(tmp_path):
    class Stubborn:
        def complete(self, prompt, profile):
            return "a bicycle" if prompt.query.record_id.endswith("0") else "Car"

    cfg = small_config(tmp_path, shots=[0], seeds=[0])
    out = ex.run_experiment(cfg, backend=Stubborn())
    rows = [r for r in ResultLog(out / ex.RESULTS_FILE).rows if r.strategy == "zero-shot"]
    bad = [r for r in rows if r.trip_id.endswith("0")]
    assert bad and all(r.prediction == "Invalid" and r.reprompted for r in bad)
    cell = json.loads((out / ex.REPORT_JSON).read_text())["cells"]["gpt-4o-mini|zero-shot|60"]
    assert cell["invalid"] == len(bad)


def test_offline_run_without_cache_fails_fast(tmp_path):
    cfg = small_config(tmp_path, seeds=[0])
    cfg = dataclasses.replace(cfg, backend=dataclasses.replace(cfg.backend, offline=True),
                              baselines=dataclasses.replace(cfg.baselines, algorithms=()))
    with pytest.raises(CacheMiss):
        ex.run_experiment(cfg)
