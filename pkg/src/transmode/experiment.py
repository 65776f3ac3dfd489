"""Configuration-driven experiment runner and comparison reports."""
from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _toml
from .backend import (DEFAULT_BASE_URL, DEFAULT_KEY_ENV, DEFAULT_PARALLELISM, Backend, CachedBackend,
                      MockBackend, ModelProfile, OpenAICompatibleBackend, RetryPolicy, profile_for)
from .boosting import GRADIENT_BOOSTING, LOGITBOOST, BoostingParams, train_gradient_boosting, train_logitboost
from .codes import MODES, Mode
from .errors import ConfigError, ParseError
from .features import SELECTORS, FeatureRanking, design_matrix, feature_matrix, rank_features
from .metrics import (INVALID, EvaluationReport, evaluate, format_percent, gap_report, improvement_percent,
                      relative_gap, render_table)
from .narrative import encode_trip
from .prompting import INLINE, TURNS, PromptSpec, Strategy, build_prompt, load_domain_knowledge, \
    parse_prediction, select_demonstrations
from .survey import (Dataset, SpeedLimits, SplitSpec, load_records, restrict_modes, sociodemographic_filter,
                     speed_consistency_filter, stratified_split)
from .synthetic import generate_synthetic

log = logging.getLogger(__name__)

BASELINE = "baseline"
RESULTS_FILE = "results.jsonl"
SPLITS_FILE = "splits.json"
RANKING_FILE = "feature_ranking.json"
GRID_FILE = "grid.json"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
CHUNK = 16  # prompts per appended batch; bounds the work lost on interruption


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" or "csv"
    path: str | None = None
    n: int = 1000
    seed: int = 0
    mode_shares: Mapping[str, float] | None = None
    schema: Mapping[str, str] = field(default_factory=dict)
    extras: tuple[str, ...] = ()


@dataclass(frozen=True)
class FilterConfig:
    walk_max_mph: float = 5.0
    motorized_min_mph: float = 2.0
    motorized_max_mph: float = 90.0
    min_driving_age: int = 16
    min_unaccompanied_transit_age: int = 10


@dataclass(frozen=True)
class FeatureConfig:
    k: int = 15
    selectors: tuple[str, ...] = tuple(SELECTORS)
    seed: int = 0


@dataclass(frozen=True)
class GridConfig:
    sample_sizes: tuple[int, ...] = (100,)
    seeds: tuple[int, ...] = (0,)
    shots: tuple[int, ...] = (0, 3)
    domain_enhanced: tuple[bool, ...] = (False,)
    models: tuple[str, ...] = ("gpt-4o-mini",)
    demo_style: str = TURNS

    def strategies(self) -> list[Strategy]:
        return [Strategy(k, d) for d in self.domain_enhanced for k in self.shots]


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" or "network"
    base_url: str = DEFAULT_BASE_URL
    key_env: str = DEFAULT_KEY_ENV
    parallelism: int = DEFAULT_PARALLELISM
    max_retries: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0
    cache_dir: str | None = None
    offline: bool = False
    max_output_tokens: int | None = None
    request_timeout: float | None = None


@dataclass(frozen=True)
class BaselineConfig:
    algorithms: tuple[str, ...] = (GRADIENT_BOOSTING, LOGITBOOST)
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    max_train: int | None = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = DataConfig()
    filters: FilterConfig = FilterConfig()
    features: FeatureConfig = FeatureConfig()
    grid: GridConfig = GridConfig()
    backend: BackendConfig = BackendConfig()
    baselines: BaselineConfig = BaselineConfig()
    output_dir: str = "results"

    def validate(self) -> "ExperimentConfig":
        g = self.grid
        if not g.sample_sizes or not g.models or not g.shots or not g.domain_enhanced:
            raise ConfigError("the grid needs at least one sample size, model, shot count and strategy")
        if not g.seeds:
            raise ConfigError("seeds must be listed explicitly")
        if any(s <= 0 for s in g.sample_sizes):
            raise ConfigError("sample sizes must be positive")
        if any(k < 0 for k in g.shots):
            raise ConfigError("shot counts must be non-negative")
        if g.demo_style not in (TURNS, INLINE):
            raise ConfigError(f"demo_style must be {TURNS!r} or {INLINE!r}")
        if self.backend.kind not in ("mock", "network"):
            raise ConfigError(f"backend kind must be 'mock' or 'network', got {self.backend.kind!r}")
        if self.backend.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"data source must be 'synthetic' or 'csv', got {self.data.source!r}")
        if self.data.source == "csv" and not self.data.path:
            raise ConfigError("data.path is required for csv sources")
        unknown = [s for s in self.features.selectors if s not in SELECTORS]
        if unknown:
            raise ConfigError(f"unknown selectors: {unknown}")
        bad = [a for a in self.baselines.algorithms if a not in (GRADIENT_BOOSTING, LOGITBOOST)]
        if bad:
            raise ConfigError(f"unknown baseline algorithms: {bad}")
        for m in g.models:
            _profile(self, m)
        return self


_SECTIONS = {"data": DataConfig, "filters": FilterConfig, "features": FeatureConfig,
             "experiment": GridConfig, "backend": BackendConfig, "baselines": BaselineConfig}
_FIELD = {"experiment": "grid"}


def _section(cls, raw: Mapping, name: str):
    known = cls.__dataclass_fields__
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {unknown}")
    kwargs = {}
    for key, value in raw.items():
        default = known[key].default
        kwargs[key] = tuple(value) if isinstance(value, list) and isinstance(default, tuple) else value
    if "domain_enhanced" in kwargs and isinstance(kwargs["domain_enhanced"], bool):
        kwargs["domain_enhanced"] = (kwargs["domain_enhanced"],)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(raw: Mapping, base_dir: Path | None = None) -> ExperimentConfig:
    unknown = sorted(set(raw) - set(_SECTIONS) - {"output_dir"})
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    parts = {_FIELD.get(n, n): _section(cls, raw.get(n, {}), n) for n, cls in _SECTIONS.items()}
    out = raw.get("output_dir", "results")
    if base_dir is not None:
        out = str((base_dir / out).resolve()) if not Path(out).is_absolute() else out
        d = parts["data"]
        if d.path and not Path(d.path).is_absolute():
            parts["data"] = DataConfig(**{**asdict(d), "path": str((base_dir / d.path).resolve())})
    return ExperimentConfig(**parts, output_dir=out).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, path.parent)


def _profile(cfg: ExperimentConfig, model_id: str) -> ModelProfile:
    over = {}
    if cfg.backend.max_output_tokens is not None:
        over["max_output_tokens"] = cfg.backend.max_output_tokens
    if cfg.backend.request_timeout is not None:
        over["request_timeout"] = cfg.backend.request_timeout
    return profile_for(model_id, **over)


# --------------------------------------------------------------------------
# pipeline stages


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "synthetic":
        return generate_synthetic(d.n, d.seed, d.mode_shares)
    ds, report = load_records(d.path, d.schema, d.extras)
    if report.rejected:
        log.warning("%d rows rejected while loading %s", len(report.rejected), d.path)
    return ds


def apply_filters(ds: Dataset, f: FilterConfig) -> Dataset:
    ds = restrict_modes(ds)
    ds = speed_consistency_filter(ds, SpeedLimits(f.walk_max_mph, f.motorized_min_mph, f.motorized_max_mph))
    return sociodemographic_filter(ds, f.min_driving_age, f.min_unaccompanied_transit_age)


def prepared_dataset(cfg: ExperimentConfig) -> Dataset:
    return apply_filters(load_dataset(cfg), cfg.filters)


def select_features(ds: Dataset, cfg: FeatureConfig) -> FeatureRanking:
    ranking, _ = rank_features(feature_matrix(ds), cfg.k, cfg.selectors, cfg.seed)
    return ranking


def make_backend(cfg: ExperimentConfig, inner: Backend | None = None) -> CachedBackend:
    b = cfg.backend
    if inner is None and not b.offline:
        if b.kind == "mock":
            inner = MockBackend()
        else:
            inner = OpenAICompatibleBackend(b.base_url, b.key_env,
                                            RetryPolicy(b.max_retries, b.base_delay, b.max_delay))
    cache_dir = Path(b.cache_dir) if b.cache_dir else Path(cfg.output_dir) / "cache"
    return CachedBackend(inner, cache_dir, offline=b.offline)


@dataclass(frozen=True)
class ResultRow:
    model_id: str
    strategy: str
    sample_size: int
    seed: int
    trip_id: str
    truth: str
    prediction: str
    latency: float
    cache_hit: bool
    reprompted: bool = False

    @property
    def key(self) -> tuple:
        return (self.model_id, self.strategy, self.sample_size, self.seed, self.trip_id)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class ResultLog:
    """Append-only line-JSON log of predictions; a torn final line is dropped on open."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.rows: list[ResultRow] = []
        if self.path.exists():
            data = self.path.read_bytes()
            good = data[: data.rfind(b"\n") + 1]
            if len(good) != len(data):
                log.warning("dropping incomplete trailing line in %s", self.path)
                self.path.write_bytes(good)
            self.rows = [ResultRow(**json.loads(ln)) for ln in good.decode("utf-8").splitlines() if ln.strip()]
        self.done = {r.key for r in self.rows}

    def append(self, rows: Iterable[ResultRow]) -> None:
        rows = [r for r in rows if r.key not in self.done]
        if not rows:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write("".join(r.to_json() + "\n" for r in rows))
            fh.flush()
        self.rows.extend(rows)
        self.done.update(r.key for r in rows)


def _predict_one(backend: CachedBackend, prompt: PromptSpec, profile: ModelProfile):
    t0 = time.perf_counter()
    reply, hit = backend.complete_cached(prompt, profile)
    reprompted = False
    try:
        mode = parse_prediction(reply)
    except ParseError:
        reprompted = True
        reply2, hit2 = backend.complete_cached(prompt.with_reminder(reply), profile)
        hit = hit and hit2
        try:
            mode = parse_prediction(reply2)
        except ParseError:
            mode = None
    return mode, time.perf_counter() - t0, hit, reprompted


def _run_llm_cell(backend, profile, strategy, prompts, truths, sample_size, seed, results, parallelism):
    todo = [(p, t) for p, t in zip(prompts, truths)
            if (profile.model_id, strategy.name, sample_size, seed, p.query.record_id) not in results.done]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for start in range(0, len(todo), CHUNK):
            chunk = todo[start:start + CHUNK]
            outs = list(pool.map(lambda pt: _predict_one(backend, pt[0], profile), chunk))
            results.append(
                ResultRow(profile.model_id, strategy.name, sample_size, seed, p.query.record_id, t.value,
                          mode.value if mode else INVALID, round(lat, 6), hit, rep)
                for (p, t), (mode, lat, hit, rep) in zip(chunk, outs))


def _train_rows(train: Dataset, cap: int | None, seed: int) -> list[int]:
    n = len(train)
    if cap is None or n <= cap:
        return list(range(n))
    rng = np.random.default_rng(seed)
    return sorted(rng.permutation(n)[:cap].tolist())


def _run_baselines(cfg: ExperimentConfig, X: np.ndarray, row_of: Mapping[str, int],
                   train: Dataset, test: Dataset, sample_size: int, seed: int, results: ResultLog):
    b = cfg.baselines
    params = BoostingParams(b.n_rounds, b.learning_rate, b.max_depth, seed=seed)
    idx = _train_rows(train, b.max_train, seed)
    tr = [train.records[i] for i in idx]
    Xtr = X[[row_of[r.trip_id] for r in tr]]
    ytr = [r.observed_mode for r in tr]
    Xte = X[[row_of[r.trip_id] for r in test.records]]
    trainers = {GRADIENT_BOOSTING: train_gradient_boosting, LOGITBOOST: train_logitboost}
    for algo in b.algorithms:
        if all((algo, BASELINE, sample_size, seed, r.trip_id) in results.done for r in test.records):
            continue
        t0 = time.perf_counter()
        model = trainers[algo](Xtr, ytr, params, classes=MODES)
        preds = model.predict(Xte)
        lat = round((time.perf_counter() - t0) / max(len(test), 1), 6)
        results.append(ResultRow(algo, BASELINE, sample_size, seed, r.trip_id, r.observed_mode.value,
                                 p.value, lat, False) for r, p in zip(test.records, preds))


def _ranking_inputs(cfg: ExperimentConfig) -> dict:
    return json.loads(json.dumps({"data": asdict(cfg.data), "filters": asdict(cfg.filters),
                                  "features": asdict(cfg.features)}))


def _cached_ranking(out: Path, ds: Dataset, cfg: ExperimentConfig) -> FeatureRanking:
    """Feature ranking for this run, reused from a previous run with identical inputs."""
    path = out / RANKING_FILE
    inputs = _ranking_inputs(cfg)
    if path.exists():
        try:
            stored = json.loads(path.read_text(encoding="utf-8"))
            if stored.get("inputs") == inputs:
                return FeatureRanking.from_report(stored)
        except (ValueError, KeyError):
            log.warning("ignoring unreadable %s", path.name)
    ranking = select_features(ds, cfg.features)
    payload = {**ranking.to_report(), "inputs": inputs}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return ranking


def expected_cells(cfg: ExperimentConfig) -> list[str]:
    keys = []
    for size in cfg.grid.sample_sizes:
        keys += [f"{a}|{BASELINE}|{size}" for a in cfg.baselines.algorithms]
        keys += [f"{m}|{s.name}|{size}" for s in cfg.grid.strategies() for m in cfg.grid.models]
    return keys


def run_experiment(cfg: ExperimentConfig, backend: Backend | None = None) -> Path:
    """Run every configured cell, appending predictions to the results log.

    ``backend`` overrides the configured transport (the response cache is
    still applied). Cells already present in the log are skipped, so an
    interrupted run resumes where it stopped. Returns the output directory
    after writing the reports.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = prepared_dataset(cfg)
    ranking = _cached_ranking(out, ds, cfg)

    cached = make_backend(cfg, backend)
    results = ResultLog(out / RESULTS_FILE)
    dk = load_domain_knowledge(ranking.selected) if any(cfg.grid.domain_enhanced) else None

    fm = feature_matrix(ds)
    X, _, _ = design_matrix(fm)
    row_of = {r.trip_id: i for i, r in enumerate(ds.records)}

    splits = {(size, seed): stratified_split(ds, SplitSpec(size, seed))
              for size in cfg.grid.sample_sizes for seed in cfg.grid.seeds}
    # written first so an interrupted run still reports what is missing
    (out / SPLITS_FILE).write_text(json.dumps({f"{k[0]}/{k[1]}": test.trip_ids for k, (_, test) in splits.items()},
                                              indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / GRID_FILE).write_text(json.dumps(expected_cells(cfg), indent=1) + "\n", encoding="utf-8")
    for (size, seed), (train, test) in splits.items():
        if cfg.baselines.algorithms:
            _run_baselines(cfg, X, row_of, train, test, size, seed, results)
        queries = [encode_trip(r) for r in test.records]
        truths = [r.observed_mode for r in test.records]
        for strategy in cfg.grid.strategies():
            demos = select_demonstrations(train, strategy.shots, seed)
            prompts = [build_prompt(strategy, demos, q, dk if strategy.domain_enhanced else None,
                                    cfg.grid.demo_style) for q in queries]
            for model_id in cfg.grid.models:
                _run_llm_cell(cached, _profile(cfg, model_id), strategy, prompts, truths, size, seed,
                              results, cfg.backend.parallelism)
    emit_report(out, write=True)
    return out


# --------------------------------------------------------------------------
# reports


def _read_results(results_dir: Path) -> list[ResultRow]:
    return ResultLog(Path(results_dir) / RESULTS_FILE).rows if (Path(results_dir) / RESULTS_FILE).exists() else []


def _mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    mean = statistics.fmean(values)
    return mean, (statistics.stdev(values) if len(values) > 1 else None)


def build_cells(rows: Sequence[ResultRow], splits: Mapping[str, list[str]] | None = None) -> dict:
    """Metric summary per (model, strategy, sample size), aggregated over seeds."""
    grouped: dict[tuple, dict[int, list[ResultRow]]] = {}
    for r in rows:
        grouped.setdefault((r.model_id, r.strategy, r.sample_size), {}).setdefault(r.seed, []).append(r)
    cells = {}
    for (model, strategy, size), by_seed in sorted(grouped.items()):
        per_seed = {}
        for seed, rs in sorted(by_seed.items()):
            rs = sorted(rs, key=lambda r: r.trip_id)
            if splits is not None and sorted(splits.get(f"{size}/{seed}", [])) != [r.trip_id for r in rs]:
                per_seed[seed] = None  # incomplete or mismatched test set
                continue
            rep = evaluate([Mode(r.truth) for r in rs],
                           [None if r.prediction == INVALID else Mode(r.prediction) for r in rs])
            per_seed[seed] = rep
        complete = [rep for rep in per_seed.values() if rep is not None]
        entry = {"model": model, "strategy": strategy, "sample_size": size,
                 "seeds": sorted(per_seed), "complete": len(complete) == len(per_seed)}
        if complete:
            for metric in ("accuracy", "f1_macro", "f1_weighted"):
                mean, std = _mean_std([getattr(rep, metric) for rep in complete])
                entry[metric] = mean
                entry[metric + "_std"] = std
            entry["gap_macro"] = relative_gap(entry["accuracy"], entry["f1_macro"])
            entry["invalid"] = sum(rep.invalid_prediction_count for rep in complete)
            entry["n"] = sum(rep.n for rep in complete)
        cells[f"{model}|{strategy}|{size}"] = entry
    return cells


def _shots_of(strategy: str) -> int | None:
    try:
        return Strategy.parse(strategy).shots
    except ConfigError:
        return None


def summarize(cells: Mapping[str, dict]) -> dict:
    models = sorted({c["model"] for c in cells.values() if c["strategy"] != BASELINE})
    baselines = sorted({c["model"] for c in cells.values() if c["strategy"] == BASELINE})
    sizes = sorted({c["sample_size"] for c in cells.values()})

    def get(model, strategy, size):
        c = cells.get(f"{model}|{strategy}|{size}")
        return c if c and "accuracy" in c and c["complete"] else None

    missing = [k for k, c in cells.items() if not c["complete"]]
    few_shot = {}
    for variant in ("", "+domain"):
        for model in models:
            for size in sizes:
                zero = get(model, "zero-shot" + variant, size)
                candidates = [(c["accuracy"], -_shots_of(c["strategy"]), c) for c in cells.values()
                              if c["model"] == model and c["sample_size"] == size and c["complete"]
                              and "accuracy" in c and c["strategy"] != BASELINE
                              and c["strategy"].endswith("+domain") == bool(variant)
                              and _shots_of(c["strategy"])]
                best = max(candidates, key=lambda t: (t[0], t[1]))[2] if candidates else None
                few_shot[f"{model}|{size}{variant}"] = {
                    "model": model, "sample_size": size, "domain_enhanced": bool(variant),
                    "zero_shot": zero["accuracy"] if zero else None,
                    "best_few_shot": best["accuracy"] if best else None,
                    "examples": _shots_of(best["strategy"]) if best else None,
                    "improvement_percent": (improvement_percent(zero["accuracy"], best["accuracy"])
                                            if zero and best else None),
                }
    domain = {}
    for c in cells.values():
        s = c["strategy"]
        if s == BASELINE or s.endswith("+domain"):
            continue
        plain, enhanced = get(c["model"], s, c["sample_size"]), get(c["model"], s + "+domain", c["sample_size"])
        if plain is None and enhanced is None:
            continue
        entry = {"model": c["model"], "strategy": s, "sample_size": c["sample_size"]}
        for metric in ("accuracy", "f1_macro", "f1_weighted"):
            a = plain[metric] if plain else None
            b = enhanced[metric] if enhanced else None
            entry[metric] = {"without": a, "with": b,
                             "improvement_percent": improvement_percent(a, b) if a is not None and b is not None
                             else None}
        domain[f"{c['model']}|{s}|{c['sample_size']}"] = entry
    reps = {k: c for k, c in cells.items() if "accuracy" in c and c["complete"]}
    gaps = gap_report({k: EvaluationReport(c["accuracy"], {}, c["f1_macro"], c["f1_weighted"], c["n"])
                       for k, c in reps.items()})
    return {"models": models, "baselines": baselines, "sample_sizes": sizes, "missing_cells": missing,
            "few_shot": few_shot, "domain": domain, "gap": gaps["gap"]}


def _fmt(v: float | None, std: float | None = None) -> str:
    if v is None:
        return "--"
    return f"{v:.4f}" + (f"±{std:.3f}" if std is not None else "")


def render_report(cells: Mapping[str, dict], summary: Mapping) -> str:
    sizes = summary["sample_sizes"]
    parts = []

    def cell(model, strategy, size):
        return cells.get(f"{model}|{strategy}|{size}")

    def acc(model, strategy, size, metric="accuracy", with_std=False):
        c = cell(model, strategy, size)
        if not c or metric not in c or not c["complete"]:
            return "--"
        return _fmt(c[metric], c.get(metric + "_std") if with_std else None)

    rows = [[m] + [acc(m, BASELINE, s, with_std=True) for s in sizes] for m in summary["baselines"]]
    rows += [[f"{m} (zero-shot)"] + [acc(m, "zero-shot", s) for s in sizes] for m in summary["models"]]
    parts.append("Accuracy: baselines vs zero-shot\n" + render_table(["model"] + [f"n={s}" for s in sizes], rows))

    for variant, title in (("", "Zero-shot vs best few-shot accuracy"),
                           ("+domain", "Zero-shot vs best few-shot accuracy, domain-enhanced")):
        rows = []
        for m in summary["models"]:
            for s in sizes:
                fs = summary["few_shot"].get(f"{m}|{s}{variant}")
                if fs is None or (fs["zero_shot"] is None and fs["best_few_shot"] is None):
                    continue
                rows.append([m, s, _fmt(fs["zero_shot"]), _fmt(fs["best_few_shot"]),
                             "--" if fs["examples"] is None else fs["examples"],
                             format_percent(fs["improvement_percent"])])
        if rows:
            parts.append(title + "\n" + render_table(
                ["model", "n", "zero-shot", "best few-shot", "examples", "improvement %"], rows))

    for metric, title in (("accuracy", "Accuracy with and without domain knowledge"),
                          ("f1_macro", "F1-macro with and without domain knowledge"),
                          ("f1_weighted", "F1-weighted with and without domain knowledge")):
        rows = []
        for key in sorted(summary["domain"], key=lambda k: (summary["domain"][k]["model"],
                                                            summary["domain"][k]["sample_size"],
                                                            _shots_of(summary["domain"][k]["strategy"]))):
            d = summary["domain"][key]
            v = d[metric]
            rows.append([d["model"], d["strategy"], d["sample_size"], _fmt(v["without"]), _fmt(v["with"]),
                         format_percent(v["improvement_percent"])])
        if rows:
            parts.append(title + "\n" + render_table(
                ["model", "strategy", "n", "without", "with", "improvement %"], rows))

    rows = []
    for key, c in sorted(cells.items()):
        if "accuracy" not in c or not c["complete"]:
            continue
        g = summary["gap"].get(key)
        rows.append([c["model"], c["strategy"], c["sample_size"], _fmt(c["accuracy"]), _fmt(c["f1_macro"]),
                     format_percent(None if g is None else 100 * g, signed=False)])
    parts.append("Accuracy vs F1-macro gap\n" + render_table(
        ["model", "strategy", "n", "accuracy", "f1-macro", "gap %"], rows))

    if summary["missing_cells"]:
        parts.append("Missing or incomplete cells:\n" + "\n".join(f"  {k}" for k in summary["missing_cells"]))
    return "\n\n".join(parts) + "\n"


def emit_report(results_dir, strict: bool = False, write: bool = True) -> tuple[str, int]:
    """Render comparison tables from a results directory.

    Returns ``(text, exit_code)``; the exit code is 1 in strict mode when
    any cell is missing or incomplete.
    """
    results_dir = Path(results_dir)
    splits_path = results_dir / SPLITS_FILE
    splits = json.loads(splits_path.read_text(encoding="utf-8")) if splits_path.exists() else None
    cells = build_cells(_read_results(results_dir), splits)
    summary = summarize(cells)
    grid_path = results_dir / GRID_FILE
    if grid_path.exists():
        seeds = sorted({int(k.split("/")[1]) for k in splits}) if splits else None
        for key in json.loads(grid_path.read_text(encoding="utf-8")):
            c = cells.get(key)
            if c is None:
                summary["missing_cells"].append(key)
            elif seeds is not None and c["seeds"] != seeds and key not in summary["missing_cells"]:
                summary["missing_cells"].append(key)
    text = render_report(cells, summary)
    if write:
        payload = {"cells": cells, "summary": summary}
        (results_dir / REPORT_JSON).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                                               encoding="utf-8")
        (results_dir / REPORT_TEXT).write_text(text, encoding="utf-8")
    return text, 1 if strict and summary["missing_cells"] else 0


__all__ = ["ExperimentConfig", "DataConfig", "FilterConfig", "FeatureConfig", "GridConfig", "BackendConfig",
           "BaselineConfig", "ResultRow", "ResultLog", "load_config", "config_from_dict", "run_experiment",
           "emit_report", "prepared_dataset", "select_features"]
