"""Command-line front end.

Subcommands::

    distmmwave validate --config scenario.yaml
    distmmwave sweep --config scenario.yaml --sweep power_ratio --values 1,2,3 --out curves.csv
    distmmwave sweep --manifest curves.csv.manifest.json
    distmmwave rate-gap --k 1 --snr-db 30 --n-max 10 --out gap.csv

Exit status: 0 success, 2 usage or configuration error, 3 numerical failure.
Every file written gets a ``<file>.manifest.json`` companion that records
the full config and is enough to re-run the command.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .experiments import SWEEPS, ConfigError, CurveSet, ScenarioConfig, config_from_dict, rate_gap_curve, run_sweep
from .numerics import NumericalError

__all__ = ["main", "load_config", "curves_to_csv", "parse_values"]

CSV_HEADER = ("sweep_value", "scheme", "mean_rate_bps_hz", "ci95", "trials")
GAP_HEADER = ("n_sbs", "exact", "approx")
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _field_lines(text: str) -> dict[str, int]:
    """Map ``section`` and ``section.field`` keys to 1-based source lines."""
    lines: dict[str, int] = {}
    root = yaml.compose(text)
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, body in root.value:
        section = str(key.value)
        lines[section] = key.start_mark.line + 1
        if isinstance(body, yaml.MappingNode):
            for sub, _ in body.value:
                lines[f"{section}.{sub.value}"] = sub.start_mark.line + 1
    return lines


def load_config(path) -> ScenarioConfig:
    """Parse and validate a YAML scenario file; errors carry line numbers."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    try:
        tree = yaml.safe_load(text)
        lines = _field_lines(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"malformed config: {getattr(err, 'problem', err)}",
                          line=mark.line + 1 if mark else None) from None
    return config_from_dict(tree, lines)


def parse_values(text: str) -> list[float]:
    """Comma-separated numbers, e.g. ``1,2,3`` or ``-10,0,10``."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as comma-separated numbers", "values") from None
    if not values or not all(np.isfinite(values)):
        raise ConfigError("need at least one finite value", "values")
    return values


def curves_to_csv(curves: CurveSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for value, scheme, mean, ci, trials in curves.rows():
        writer.writerow((_fmt(value), scheme, _fmt(mean), _fmt(ci), int(trials)))
    return buf.getvalue()


def _gap_csv(curves: CurveSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GAP_HEADER)
    for p in curves.points:
        writer.writerow((int(p.sweep_value), _fmt(p.mean["exact"]), _fmt(p.mean["approx"])))
    return buf.getvalue()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _emit(text: str, out: str | None, manifest: dict) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text)
    manifest["outputs"] = [str(path)]
    manifest["finished"] = _now()
    Path(f"{path}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    sys.stdout.write(yaml.safe_dump(config.to_dict(), sort_keys=False))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    started = _now()
    if args.manifest:
        try:
            recorded = json.loads(Path(args.manifest).read_text())
            config = config_from_dict(recorded["config"])
            sweep, values = recorded["command"]["sweep"], recorded["command"]["values"]
            fmt = recorded["command"]["format"]
        except (OSError, ValueError, KeyError, TypeError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"unusable manifest: {err}") from None
        out = args.out
    else:
        if not (args.config and args.sweep and args.values):
            raise ConfigError("sweep needs --config, --sweep and --values (or --manifest)")
        config = load_config(args.config)
        sweep, values, fmt, out = args.sweep, parse_values(args.values), args.format, args.out
        overrides = {}
        if args.seed is not None:
            overrides["run"] = {"master_seed": args.seed}
        if args.trials is not None:
            overrides.setdefault("run", {})["trials"] = args.trials
        if overrides:
            tree = config.to_dict()
            tree["run"].update(overrides["run"])
            config = config_from_dict(tree)
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep (expected one of {SWEEPS})", "sweep")
    curves = run_sweep(config, sweep, values, workers=args.workers)
    for value, reason in curves.rejected:
        print(f"warning: point {sweep}={_fmt(value)} rejected: {reason}", file=sys.stderr)
    text = curves_to_csv(curves) if fmt == "csv" else json.dumps(curves.to_dict(), indent=2) + "\n"
    manifest = {
        "tool": "distmmwave",
        "version": __version__,
        "master_seed": config.master_seed,
        "config": config.to_dict(),
        "command": {"name": "sweep", "sweep": sweep, "values": values, "format": fmt},
        "started": started,
    }
    _emit(text, out, manifest)
    return EXIT_OK


def _cmd_rate_gap(args) -> int:
    started = _now()
    if args.n_max < 1:
        raise ConfigError("must be >= 1", "n-max")
    if args.k < 1:
        raise ConfigError("must be >= 1", "k")
    curves = rate_gap_curve(args.k, args.snr_db, range(1, args.n_max + 1))
    manifest = {
        "tool": "distmmwave",
        "version": __version__,
        "command": {"name": "rate-gap", "k": args.k, "snr_db": args.snr_db, "n_max": args.n_max},
        "started": started,
    }
    _emit(_gap_csv(curves), args.out, manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distmmwave", description="Distributed hybrid mmWave sum-rate simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file and print it normalized")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep of one parameter")
    p.add_argument("--config")
    p.add_argument("--sweep", choices=SWEEPS)
    p.add_argument("--values", help="comma-separated; use --values=-10,0 for negative numbers")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--manifest", help="re-run exactly the sweep recorded in this manifest")
    p.add_argument("--workers", type=int, help="worker processes (default: $DISTMMWAVE_WORKERS or 1)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("rate-gap", help="closed-form rate gap versus the number of SBSs")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rate_gap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError) as err:
        tb = err.__traceback__
        while tb.tb_next is not None:
            tb = tb.tb_next
        where = tb.tb_frame.f_globals.get("__name__", "?")
        print(f"numerical failure in {where}: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
