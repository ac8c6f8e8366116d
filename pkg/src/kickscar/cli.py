"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from . import dynamics

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description="Run a kicked-chain experiment from a config file.")
    ap.add_argument("config", nargs="?", help="experiment configuration file")
    ap.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    ap.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
    ap.add_argument("--format", choices=("csv", "jsonl"), default=None)
    ap.add_argument("--list", action="store_true", help="list experiments and exit")
    ap.add_argument("--dump-basis", action="store_true", help="write the basis of the configured model and exit")
    ap.add_argument("--no-timestamp", action="store_true", help="omit wall-time metadata")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        for name, desc in cfgmod.EXPERIMENTS.items():
            print(f"{name:12s} {desc}")
        return EXIT_OK
    if not args.config:
        print("error: a config file is required (or use --list)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = cfgmod.load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    output = args.output or cfg.get("output")
    fmt = args.format or cfg.get("format", "csv")
    try:
        out = open(output, "w") if output else sys.stdout
    except OSError as exc:
        print(f"error: cannot open output: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        if args.dump_basis:
            basis = dynamics.model_basis(cfg["hamiltonian"], int(cfg["L"]), cfg["boundary"])
            out.write(f"# basis {basis.hash()} dim {basis.dim}\n")
            basis.dump_csv(out)
            return EXIT_OK
        from .experiments import run_experiment, write_spectra_csv

        result = run_experiment(cfg, workers=args.workers)
        text = result.text(fmt, timestamp=not args.no_timestamp)
        out.write(text)
        if result.extras and output:
            with open(output + ".spectra.csv", "w") as fh:
                write_spectra_csv(result, fh)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if out is not sys.stdout:
            out.close()
    if result.errors:
        for index, msg in result.errors:
            print(f"sweep point {index} failed: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
