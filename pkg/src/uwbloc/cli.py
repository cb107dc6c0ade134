"""Command-line front end.

Five subcommands cover the pipeline: ``simulate`` writes a measurement
campaign, ``fit`` turns measurements into a ranging calibration,
``build-db`` predicts the fingerprint grid from a calibration,
``evaluate`` runs a full error evaluation (baseline or fingerprint), and
``compare`` lays finished reports side by side.

Exit codes: 0 success, 2 configuration or usage error, 3 malformed input
data file, 4 pipeline or I/O failure. Given the same configuration and
seed, every output file is byte-identical across runs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence

from .calibration import (
    MissingReferencePointError,
    ModelKind,
    clean_observation_rows,
    fit_model,
    read_calibration,
    write_calibration,
)
from .config import ConfigError, RunConfig, load_config
from .errors import FileFormatError
from .evaluation import (
    compare,
    format_comparison,
    format_report,
    read_report,
    run_baseline,
    run_ml,
    write_comparison,
    write_report,
)
from .fingerprint import build_db, write_db
from .simulator import STAGE_SELECTION, derive_seed, read_measurements, simulate_campaign, write_measurements

__all__ = ["main"]

_RATIO_CHOICES = (1.0, 0.9, 0.85, 0.8)
_MODEL_KINDS = tuple(ModelKind)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwbloc",
        description="UWB fingerprint positioning pipeline: simulate, calibrate, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, seed: bool = True) -> None:
        p.add_argument("--config", metavar="FILE", help="key = value configuration file")
        if seed:
            p.add_argument("--seed", type=int, metavar="N", help="override run.seed")

    p = sub.add_parser("simulate", help="generate a measurement campaign file")
    add_common(p)
    p.add_argument("--out", required=True, metavar="FILE", help="measurement file to write")

    p = sub.add_parser("fit", help="fit a ranging calibration from measurements")
    p.add_argument("measurements", metavar="MEASUREMENTS", help="measurement file to read")
    add_common(p)
    p.add_argument("--model", choices=[k.value for k in _MODEL_KINDS], help="override calibration.kind")
    p.add_argument("--ratio", type=float, choices=_RATIO_CHOICES, help="override correction.ratio")
    p.add_argument("--out", required=True, metavar="FILE", help="calibration file to write")

    p = sub.add_parser("build-db", help="predict the fingerprint database from a calibration")
    p.add_argument("calibration", metavar="CALIBRATION", help="calibration file to read")
    add_common(p, seed=False)
    p.add_argument("--out", required=True, metavar="FILE", help="database file to write")

    p = sub.add_parser("evaluate", help="run a positioning error evaluation")
    add_common(p)
    p.add_argument(
        "--model",
        choices=[k.value for k in _MODEL_KINDS] + ["none"],
        help="override calibration.kind (none = trilateration baseline)",
    )
    p.add_argument("--ratio", type=float, choices=_RATIO_CHOICES, help="override correction.ratio")
    p.add_argument(
        "--classifier", choices=["knn", "tree", "forest", "vote"], help="override classifier.kind"
    )
    p.add_argument("--weights", metavar="KNN:TREE", help="override classifier.weights")
    p.add_argument("--out", required=True, metavar="FILE", help="error report to write")

    p = sub.add_parser("compare", help="compare reports against the first (baseline)")
    p.add_argument("reports", nargs="+", metavar="REPORT", help="two or more report files")
    p.add_argument("--out", required=True, metavar="FILE", help="comparison table to write")

    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out: dict[str, str] = {}
    if getattr(args, "seed", None) is not None:
        out["run.seed"] = str(args.seed)
    if getattr(args, "model", None) is not None:
        out["calibration.kind"] = args.model
    if getattr(args, "ratio", None) is not None:
        out["correction.ratio"] = repr(args.ratio)
    if getattr(args, "classifier", None) is not None:
        out["classifier.kind"] = args.classifier
    if getattr(args, "weights", None) is not None:
        out["classifier.weights"] = args.weights
    return out


def _cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    rows = simulate_campaign(cfg.campaign())
    write_measurements(args.out, rows)
    print(f"wrote {len(rows)} measurement sets to {args.out}")
    return 0


def _cmd_fit(args: argparse.Namespace, cfg: RunConfig) -> int:
    kind = cfg.model_kind()
    if kind is None:
        raise ConfigError("calibration.kind is none; nothing to fit")
    rows = read_measurements(args.measurements)
    obs = clean_observation_rows(
        rows,
        cfg.get("calibration.reference_points"),
        mad_k=cfg.get("preprocess.mad_k"),
        mad_scale=cfg.get("preprocess.mad_scale"),
        policy=cfg.correction(),
    )
    model = fit_model(
        kind, obs, cfg.anchors(),
        n_select=cfg.get("calibration.n_select"),
        seed=derive_seed(cfg.seed(), STAGE_SELECTION),
    )
    write_calibration(args.out, model)
    print(f"model {kind.value}: kept {obs.n_sets} clean sets")
    for name in ("A", "B", "C"):
        eq = model.equation(name)
        print(f"  {name}: measured = {eq.a:.6f} * true + {eq.b:.3f}")
    return 0


def _cmd_build_db(args: argparse.Namespace, cfg: RunConfig) -> int:
    model = read_calibration(args.calibration)
    db = build_db(model, cfg.grid(), cfg.anchors())
    write_db(args.out, db)
    print(f"wrote {len(db)} cells to {args.out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    pcfg = cfg.pipeline()
    if pcfg.model_kind is None:
        report = run_baseline(pcfg, cfg.anchors())
    else:
        report = run_ml(pcfg, cfg.anchors(), cfg.grid())
    metadata = dict(report.metadata)
    metadata["config_hash"] = cfg.config_hash()
    for line in cfg.resolved_lines():
        key, _, value = line.partition(" = ")
        metadata[f"cfg.{key}"] = value
    report = replace(report, metadata=metadata)
    write_report(args.out, report)
    print(format_report(report, "text"), end="")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    if len(args.reports) < 2:
        raise ConfigError("compare needs at least two report files (baseline first)")
    reports = [read_report(p) for p in args.reports]
    table = compare(reports)
    write_comparison(args.out, table)
    print(format_comparison(table, "text"), end="")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        if args.command == "compare":
            return _cmd_compare(args)
        cfg = load_config(getattr(args, "config", None), _overrides(args))
        if args.command == "simulate":
            return _cmd_simulate(args, cfg)
        if args.command == "fit":
            return _cmd_fit(args, cfg)
        if args.command == "build-db":
            return _cmd_build_db(args, cfg)
        if args.command == "evaluate":
            return _cmd_evaluate(args, cfg)
        raise AssertionError(f"unhandled command {args.command!r}")
    except ConfigError as exc:
        print(f"uwbloc: config error: {exc}", file=sys.stderr)
        return 2
    except (FileFormatError, MissingReferencePointError) as exc:
        print(f"uwbloc: input error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"uwbloc: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
