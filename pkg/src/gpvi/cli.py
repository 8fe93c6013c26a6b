"""Command line entry point: ``gpvi run <config>`` and ``gpvi list-experiments``.

Exit codes: 0 success, 2 config validation error (nothing is written),
3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .config import ConfigError, describe_kinds, echo, load_config

OUTPUT_ROOT_ENV = "GPVI_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path: Path, rows: list[dict]) -> None:
    """Header from the union of keys in first-seen order; floats at 17 digits."""
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(k, "")) for k in header])


def resolve_output_dir(cfg) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    name = cfg.output_dir or f"runs/{cfg.kind}-{cfg.method}-seed{cfg.seed}"
    out = Path(name)
    return out if out.is_absolute() else root / out


def run(config_path, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG

    from threadpoolctl import threadpool_limits

    from .experiments import run_experiment

    outdir = resolve_output_dir(cfg)
    try:
        with threadpool_limits(limits=cfg.threads):
            result = run_experiment(cfg)
    except (FloatingPointError, OverflowError) as exc:
        print(f"training diverged: {exc}", file=err)
        return EXIT_DIVERGED

    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.echo").write_text(echo(cfg))
    write_csv(outdir / "trace.csv", result.trace)
    write_csv(outdir / "final.csv", [result.final])
    for name, rows in result.tables.items():
        write_csv(outdir / f"{name}.csv", rows)
    print(f"wrote {outdir}", file=out)
    for key, value in result.final.items():
        print(f"  {key} = {_fmt(value)}", file=out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gpvi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    sub.add_parser("list-experiments", help="list experiment kinds, required keys and defaults")
    args = parser.parse_args(argv)
    if args.command == "list-experiments":
        sys.stdout.write(describe_kinds())
        return EXIT_OK
    return run(args.config)


if __name__ == "__main__":
    sys.exit(main())
