"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 pipeline
error, 5 explain on a row that is not an anomaly. Failures print one JSON
line on stderr: ``{"error": <kind>, "exit_code": <n>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cart import cross_validate
from .config import RunConfig, load_config
from .dataset import filter_rows, load_csv, select_columns, write_csv
from .exceptions import InvalidConfig, NetDiagError, PipelineError
from .labeling import KPI_CLASSES, label_by_percentiles
from .pipeline import run_pipeline
from .report import explain, write_report, write_sweep_svg
from .synth import generate

logger = logging.getLogger("netdiag")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out if args.out else cfg.output_dir)


def _load_data(args, cfg):
    if not args.data:
        raise InvalidConfig("--data is required for this command")
    return load_csv(args.data, cfg.schema)


def cmd_run(args) -> int:
    cfg = _config(args)
    ds = _load_data(args, cfg)
    report = run_pipeline(cfg, ds)
    paths = write_report(report, _out_dir(args, cfg), svg=args.svg)
    print(f"{report.n_anomalies} anomalies among {len(report.classified_ids)} rows; "
          f"KPI tree accuracy {report.kpi_metrics.accuracy:.4f}, "
          f"cause tree accuracy {report.cause_metrics.accuracy:.4f}")
    for path in paths:
        print(path)
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    synth = cfg.synth
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.rows is not None:
        changes["n_rows"] = args.rows
    if changes:
        synth = dataclasses.replace(synth, **changes)
    ds, truth = generate(synth)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    data_path, truth_path = out / "synth.csv", out / "synth_truth.csv"
    write_csv(ds, data_path)
    truth.write_csv(truth_path)
    print(data_path)
    print(truth_path)
    return 0


def _parse_depths(text: str) -> list:
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            depths = list(range(lo, hi + 1))
        else:
            depths = [int(v) for v in text.split(",")]
    except ValueError:
        raise InvalidConfig(f"invalid depth range {text!r}; use e.g. 1-10 or 2,4,6") from None
    if not depths or min(depths) < 1:
        raise InvalidConfig(f"depth range {text!r} must contain positive depths")
    return depths


def cmd_sweep_depth(args) -> int:
    cfg = _config(args)
    depths = _parse_depths(args.depths)
    if args.folds < 2 or args.repeats < 1:
        raise InvalidConfig("--folds must be >= 2 and --repeats >= 1")
    ds = _load_data(args, cfg)
    try:
        if cfg.filters:
            ds = filter_rows(ds, cfg.filters)
        labeling = label_by_percentiles(ds, cfg.split)
        X = select_columns(ds, cfg.schema.group(cfg.rtt_group), row_ids=labeling.row_ids)
        label_of = labeling.as_dict()
        y = np.array([label_of[int(r)] for r in X.row_ids], dtype=object)
        scores = cross_validate(X, y, depths, folds=args.folds, repeats=args.repeats,
                                seed=cfg.seed, min_leaf=cfg.tree.min_leaf,
                                class_order=list(KPI_CLASSES))
    except NetDiagError as exc:
        raise PipelineError("sweep", exc) from exc
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "depth_sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["depth", "mean_accuracy", "std", "ci_low", "ci_high", "n_scores"])
        for s in scores:
            writer.writerow([s.depth, repr(s.mean), repr(s.std), repr(s.ci_low), repr(s.ci_high),
                             s.n_scores])
    print(path)
    if args.svg:
        write_sweep_svg(scores, out / "depth_sweep.svg")
        print(out / "depth_sweep.svg")
    return 0


def cmd_explain(args) -> int:
    report_dir = Path(args.out) if args.out else Path(_config(args).output_dir)
    print(explain(report_dir, args.row_id))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults if omitted)")
    common.add_argument("--data", help="measurement CSV")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--svg", action="store_true", help="also write SVG figures")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="netdiag", description="Detect KPI anomalies and classify their root causes."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run the full pipeline and write a report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic campaign")
    p.add_argument("--rows", type=int, help="override synth.n_rows")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep-depth", parents=[common],
                       help="cross-validated KPI-tree accuracy per depth")
    p.add_argument("--depths", default="1-10", help="range 'lo-hi' or list 'a,b,c' (default 1-10)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=30)
    p.set_defaults(func=cmd_sweep_depth)

    p = sub.add_parser("explain", parents=[common], help="print the diagnosis of one anomaly")
    p.add_argument("row_id", type=int)
    p.set_defaults(func=cmd_explain)
    return parser


def _fail(kind: str, code: int, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        return _fail(type(exc.cause).__name__, exc.exit_code, str(exc))
    except NetDiagError as exc:
        return _fail(type(exc).__name__, exc.exit_code, str(exc))
    except FileNotFoundError as exc:
        return _fail("FileNotFound", 3, str(exc))
    except OSError as exc:
        return _fail(type(exc).__name__, 3, str(exc))


if __name__ == "__main__":
    sys.exit(main())
