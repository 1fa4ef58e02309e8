"""
Command-line entry point.

::

    mmtsim rate-table --config rate_table.yaml --out results --plot
    mmtsim operating-region --config region.yaml --set system.b=15
    mmtsim validate --config rate_table.yaml

Exit codes: 0 success, 2 configuration error, 3 numerical failure. Output
files are staged in a temporary directory and moved into place only after
the whole run succeeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, load_config, validate_config
from .experiments import Table, run_experiment_table
from .montecarlo import NumericalFailure
from .numerics import QuadratureError
from .precoding import PrecoderConditioningError

__all__ = ["main", "format_value", "table_to_csv", "table_to_json", "run_experiment"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def format_value(v) -> str:
    """CSV cell text; floats get 9 significant digits."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    return str(v)


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float):
        return float(format_value(v)) if math.isfinite(v) else format_value(v)
    return v


def table_to_json(table: Table) -> str:
    rows = [{k: _json_value(v) for k, v in zip(table.header, row)} for row in table.rows]
    return json.dumps({"experiment": table.kind, "columns": table.header, "rows": rows}, indent=2) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, plot: bool = False) -> list:
    """Run ``cfg`` and write its outputs; returns the written paths.

    Nothing is written if the computation raises.
    """
    t0 = time.perf_counter()
    table = run_experiment_table(cfg)
    wall = time.perf_counter() - t0

    out = Path(out_dir or cfg.out)
    stem = cfg.kind
    files = {}
    data_name = f"{stem}.{cfg.format}"
    files[data_name] = table_to_csv(table) if cfg.format == "csv" else table_to_json(table)
    manifest = {
        "experiment": cfg.kind,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "wall_time_s": round(wall, 3),
        "outputs": [data_name],
    }
    if plot:
        from .plotting import gnuplot_script, render_png

        # the plot script always reads CSV, so a CSV copy accompanies JSON output
        csv_name = data_name if cfg.format == "csv" else f"{stem}.csv"
        if csv_name not in files:
            files[csv_name] = table_to_csv(table)
        files[f"{stem}.gp"] = gnuplot_script(table, csv_name, f"{stem}.png")
        manifest["outputs"] += [n for n in (csv_name, f"{stem}.gp", f"{stem}.png") if n not in manifest["outputs"]]

    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".mmtsim-", dir=out.parent))
    try:
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8")
        if plot:
            render_png(table, str(stage / f"{stem}.png"))
        (stage / f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for p in sorted(stage.iterdir()):
            dst = out / p.name
            os.replace(p, dst)
            written.append(dst)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmtsim", description="Multi-mode transmission rate analysis and simulation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, run=True):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. system.b=15 (repeatable)")
        if run:
            p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
            p.add_argument("--trials", type=int, help="Monte Carlo trials per point (overrides run.trials)")
            p.add_argument("--out", help="output directory (overrides run.out)")
            p.add_argument("--format", choices=("csv", "json"), help="result file format")
            p.add_argument("--plot", action="store_true", help="also write a gnuplot script and a PNG")

    for kind in KINDS:
        common(sub.add_parser(kind, help=f"run the {kind} experiment"))
    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("path", nargs="?", help="config file (same as --config)")
    common(v, run=False)
    return ap


def _overrides(args) -> list:
    ov = list(args.overrides)
    for flag, key in (("seed", "run.seed"), ("trials", "run.trials"), ("out", "run.out"), ("format", "run.format")):
        val = getattr(args, flag, None)
        if val is not None:
            ov.append(f"{key}={val}")
    return ov


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        path = args.path or args.config
        if path is None:
            print("validate: a config file is required", file=sys.stderr)
            return EXIT_CONFIG
        diags = validate_config(path, args.overrides)
        for d in diags:
            print(d, file=sys.stderr)
        if diags:
            return EXIT_CONFIG
        print(f"{path}: ok")
        return EXIT_OK

    try:
        cfg = load_config(args.config, _overrides(args), kind=args.command)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = run_experiment(cfg, plot=args.plot)
    except (NumericalFailure, QuadratureError, PrecoderConditioningError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
