"""Command-line entry point.

Experiment commands: ``gen`` writes the prepared data as CSV, ``split``
partitions a normal pool, ``run`` executes the grid (or one cell) and
``report`` re-aggregates result files.  The ``dc-*`` commands run the
organisation and analyst phases of data collaboration as separate processes
that exchange only text artifacts.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from ..autoencoder import JOURNAL_HIDDEN, SYNTHETIC_HIDDEN, TrainConfig, load_model, reconstruction_errors, save_model
from ..dataset.journal import fit_schema, journal_dataset, read_journal_csv, write_journal_csv
from ..dataset.schema import LabeledDataset, Schema
from ..dataset.synthetic import SYNTHETIC_SCHEMA, read_synthetic_csv, write_synthetic_csv
from ..dc import (
    Analyst,
    gen_anchor,
    load_intermediate,
    load_private,
    load_transform,
    make_intermediate,
    save_intermediate,
    save_private,
    save_transform,
)
from ..federated import train_collab_model
from ..metrics import ap_triple
from ..partition import split_iid, split_noniid_kmeans
from .config import ExperimentConfig
from .experiment import prepare_data, run_experiment
from .report import aggregate, format_table, read_results_csv, write_aggregate_csv, write_report


class CliError(Exception):
    """User-facing failure; the message is logged without a traceback."""


# --- data files ----------------------------------------------------------------


def _header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def is_synthetic_file(path) -> bool:
    return _header(path)[:3] == ["a", "b", "c"]


def read_dataset(path, schema: Schema | None) -> LabeledDataset:
    """Read a synthetic or journal CSV; journal files need the shared schema."""
    if is_synthetic_file(path):
        return read_synthetic_csv(path)
    if schema is None:
        raise CliError(f"{path}: journal data needs --schema")
    entries, labels = read_journal_csv(path)
    return journal_dataset(entries, schema, labels)


def write_dataset(path, data: LabeledDataset) -> None:
    if data.schema == SYNTHETIC_SCHEMA:
        write_synthetic_csv(path, data)
    else:
        write_journal_csv(path, data.records, list(data.labels))


# --- commands ------------------------------------------------------------------


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg)
    for k, part in enumerate(data.splits, start=1):
        write_dataset(out / f"org_{k}.csv", part)
        part.schema.save(out / f"schema_{k}.json")
    for ratio, test in data.tests.items():
        name = "test.csv" if cfg.dataset != "synthetic" else f"test_{ratio:g}.csv"
        write_dataset(out / name, test)
    data.schema.save(out / "schema.json")
    print(f"wrote {len(data.splits)} organisation files and {len(data.tests)} test file(s) to {out}")
    return 0


def cmd_split(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if is_synthetic_file(args.input):
        pool = read_synthetic_csv(args.input)
    else:
        entries, _ = read_journal_csv(args.input)
        schema = Schema.load(args.schema) if args.schema else fit_schema(entries)
        pool = journal_dataset(entries, schema)
    splitter = split_iid if args.mode == "iid" else split_noniid_kmeans
    parts = splitter(pool, args.orgs, args.seed if args.seed is not None else 0)
    for k, part in enumerate(parts, start=1):
        write_dataset(out / f"org_{k}.csv", part)
    print("sizes " + " ".join(str(len(p)) for p in parts))
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.method:
        cfg = cfg.replace(methods=(args.method,))
    if args.lam is not None:
        cfg = cfg.replace(lambdas=(args.lam,))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.yaml")
    reps = [args.rep] if args.rep is not None else None
    rows, timings = run_experiment(cfg, jobs=args.jobs, reps=reps)
    agg = write_report(out, rows, timings)
    print(format_table(agg), end="")
    failed = [r for r in rows if r.status != "ok"]
    for r in failed:
        _log_error(args, {"command": "run", "method": r.method, "lambda": r.lam, "ratio": r.ratio,
                          "rep": r.rep, "error": r.error})
    return 1 if failed else 0


def cmd_report(args) -> int:
    rows = [row for path in args.results for row in read_results_csv(path)]
    if not rows:
        raise CliError("no result rows to report")
    agg = aggregate(rows)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(out / "summary.csv", agg)
    table = format_table(agg)
    (out / "table.txt").write_text(table)
    print(table, end="")
    return 0


def cmd_dc_share(args) -> int:
    schema = Schema.load(args.schema) if args.schema else None
    data = read_dataset(args.data, schema)
    if np.any(data.labels != "normal"):
        raise CliError(f"{args.data}: shared training data must be all normal")
    width = data.features.shape[1]
    anchor = gen_anchor(width, args.anchor_rows, args.anchor_seed)
    target = args.m_tilde if args.m_tilde is not None else width - 1
    rep, pca = make_intermediate(args.org_id, data.features, anchor, target)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_intermediate(out / f"share_{args.org_id}.txt", rep, args.anchor_seed)
    save_private(out / f"private_{args.org_id}.npz", pca)
    print(f"org {args.org_id}: m_tilde={rep.m_tilde}, rows={len(rep.x_tilde)}")
    return 0


def cmd_dc_fit(args) -> int:
    loaded = [load_intermediate(p) for p in args.shares]
    seeds = {seed for _, seed in loaded}
    if len(seeds) != 1:
        raise CliError(f"shares were built from different anchor seeds: {sorted(seeds)}")
    analyst = Analyst(seeds.pop(), args.m_hat)
    analyst.collect(rep for rep, _ in loaded)
    x_hat = analyst.fit()
    hidden = tuple(args.hidden) if args.hidden else (SYNTHETIC_HIDDEN if x_hat.shape[1] < 32 else JOURNAL_HIDDEN)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.learning_rate)
    res, _ = train_collab_model(x_hat, hidden, cfg, args.seed if args.seed is not None else 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_transform(out / "transform.txt", analyst.transform, analyst.anchor_seed)
    save_model(res.model, out / "model.npz")
    print(f"m_hat={analyst.transform.m_hat}, rows={len(x_hat)}, final loss={res.history[-1]:.6g}")
    return 0


def cmd_dc_detect(args) -> int:
    schema = Schema.load(args.schema) if args.schema else None
    data = read_dataset(args.data, schema)
    pca = load_private(args.private)
    transform, _ = load_transform(args.transform)
    if args.org_id not in transform.g:
        raise CliError(f"transform has no entry for organisation {args.org_id!r}")
    model = load_model(args.model)
    scores = reconstruction_errors(model, pca.transform(data.features) @ transform.g[args.org_id])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "score", "label"])
        for i, (s, lab) in enumerate(zip(scores, data.labels)):
            w.writerow([i, repr(float(s)), lab])
    if np.any(data.labels != "normal"):
        print(json.dumps(ap_triple(scores, data.labels).as_dict()))
    return 0


# --- wiring --------------------------------------------------------------------


def _log_error(args, record: dict) -> None:
    line = json.dumps(record, sort_keys=True)
    out_dir = getattr(args, "out_dir", None)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "errors.jsonl", "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    print(line, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcaudit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--out-dir", required=out_required, help="output directory")

    sp = sub.add_parser("gen", help="write organisation and test CSVs for a config")
    sp.add_argument("--config", help="YAML experiment config")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("split", help="partition a normal pool into organisation files")
    sp.add_argument("--input", required=True)
    sp.add_argument("--orgs", type=int, default=8)
    sp.add_argument("--mode", choices=("iid", "noniid"), default="iid")
    sp.add_argument("--schema", help="schema JSON for journal pools (fitted on the pool if omitted)")
    common(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("run", help="run the experiment grid or a single cell")
    sp.add_argument("--config", help="YAML experiment config")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--method", help="restrict to one method")
    sp.add_argument("--lam", type=int, help="restrict to one lambda")
    sp.add_argument("--rep", type=int, help="restrict to one repetition")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="aggregate one or more results.csv files")
    sp.add_argument("--results", nargs="+", required=True)
    common(sp)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("dc-share", help="organisation: build and save the intermediate representation")
    sp.add_argument("--data", required=True)
    sp.add_argument("--org-id", required=True)
    sp.add_argument("--anchor-seed", type=int, required=True)
    sp.add_argument("--anchor-rows", type=int, default=1000)
    sp.add_argument("--m-tilde", type=int)
    sp.add_argument("--schema")
    common(sp)
    sp.set_defaults(func=cmd_dc_share)

    sp = sub.add_parser("dc-fit", help="analyst: align shares and train the shared detector")
    sp.add_argument("--shares", nargs="+", required=True)
    sp.add_argument("--m-hat", type=int)
    sp.add_argument("--hidden", type=int, nargs="+")
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--learning-rate", type=float, default=1e-3)
    common(sp)
    sp.set_defaults(func=cmd_dc_fit)

    sp = sub.add_parser("dc-detect", help="organisation: score local data with the shared detector")
    sp.add_argument("--data", required=True)
    sp.add_argument("--org-id", required=True)
    sp.add_argument("--private", required=True)
    sp.add_argument("--transform", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--schema")
    sp.add_argument("--out", required=True, help="scores CSV")
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_dc_detect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        record = {"command": args.command, "error_type": type(err).__name__, "message": str(err)}
        if not isinstance(err, CliError):
            record["traceback"] = traceback.format_exc(limit=5)
        _log_error(args, record)
        return 1


if __name__ == "__main__":
    sys.exit(main())
