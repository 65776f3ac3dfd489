"""Command-line entry point: ``transmode <command> --config exp.toml``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .errors import TransmodeError
from .narrative import encode_all, write_narratives
from .survey import write_filter_log
from .synthetic import write_csv


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    if args.output:
        cfg = dataclasses.replace(cfg, output_dir=args.output)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            data=dataclasses.replace(cfg.data, seed=args.seed),
            features=dataclasses.replace(cfg.features, seed=args.seed),
            grid=dataclasses.replace(cfg.grid, seeds=(args.seed,)),
        )
    backend = cfg.backend
    if args.backend:
        backend = dataclasses.replace(backend, kind=args.backend)
    if args.offline:
        backend = dataclasses.replace(backend, offline=True)
    return dataclasses.replace(cfg, backend=backend).validate()


def _out(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(cfg, args) -> int:
    ds = ex.load_dataset(cfg)
    path = _out(cfg) / "data.csv"
    write_csv(ds, path)
    print(f"wrote {len(ds)} records to {path}")
    return 0


def cmd_filter(cfg, args) -> int:
    raw = ex.load_dataset(cfg)
    ds = ex.apply_filters(raw, cfg.filters)
    out = _out(cfg)
    write_csv(ds, out / "filtered.csv")
    write_filter_log(ds, out / "filter_log.jsonl")
    print(f"kept {len(ds)} of {len(raw)} records")
    for note in ds.notes:
        print(f"note: {note}")
    counts = {}
    for ev in ds.log:
        counts[ev.rule] = counts.get(ev.rule, 0) + 1
    for rule, n in sorted(counts.items()):
        print(f"  {rule}: {n}")
    return 0


def cmd_select_features(cfg, args) -> int:
    ranking = ex.select_features(ex.prepared_dataset(cfg), cfg.features)
    path = _out(cfg) / ex.RANKING_FILE
    path.write_text(ranking.to_json() + "\n", encoding="utf-8")
    for i, f in enumerate(ranking.ordered(), 1):
        mark = "*" if f in ranking.selected else " "
        print(f"{mark} {i:2d}. {f:28s} {ranking.mean_rank[f]:.2f}")
    return 0


def cmd_encode(cfg, args) -> int:
    ds = ex.prepared_dataset(cfg)
    path = _out(cfg) / "narratives.jsonl"
    write_narratives(encode_all(ds.records), path)
    print(f"wrote {len(ds)} narratives to {path}")
    return 0


def cmd_run(cfg, args) -> int:
    out = ex.run_experiment(cfg)
    text, _ = ex.emit_report(out, write=False)
    print(text, end="")
    return 0


def cmd_report(cfg, args) -> int:
    text, code = ex.emit_report(cfg.output_dir, strict=args.strict)
    print(text, end="")
    if args.json:
        print(json.dumps(json.loads((Path(cfg.output_dir) / ex.REPORT_JSON).read_text()), indent=1))
    return code


COMMANDS = {
    "generate": (cmd_generate, "write a synthetic survey file"),
    "filter": (cmd_filter, "apply the consistency filters and log removals"),
    "select-features": (cmd_select_features, "rank candidate features by mean importance rank"),
    "encode": (cmd_encode, "render every trip as a narrative"),
    "run": (cmd_run, "run the full experiment grid"),
    "report": (cmd_report, "render comparison tables from a results directory"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transmode", description="Travel-mode prediction experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment TOML file")
        p.add_argument("--seed", type=int, help="override data, feature and split seeds")
        p.add_argument("--offline", action="store_true", help="forbid network access; fail on cache miss")
        p.add_argument("--backend", choices=("network", "mock"))
        p.add_argument("--output", help="override output_dir")
        if name == "report":
            p.add_argument("--strict", action="store_true", help="exit 1 when any cell is missing")
            p.add_argument("--json", action="store_true", help="also print report.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command][0](cfg, args)
    except TransmodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
