"""Command-line entry point.

    python -m lightrain <stage> --config FILE [--workdir DIR] [flags]
    python -m lightrain synth --out DIR [--seed N]

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .pipeline import RUNNERS, run_all
from .synth import SynthConfig, synth_storm, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUBCOMMANDS = ("ingest", "scan", "rlr", "meanfield", "fit", "predict", "verify", "synth", "all")

log = logging.getLogger("lightrain")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lightrain", description="Lightning-driven rainfall reconstruction pipeline.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "synth":
            sp.add_argument("--out", required=True, help="directory for the generated dataset")
            sp.add_argument("--seed", type=int, default=SynthConfig.seed)
            sp.add_argument("--dt", type=int, choices=(15, 30), default=None)
            continue
        sp.add_argument("--config", help="plain-text key = value file")
        sp.add_argument("--workdir", default=None, help="artifact directory (default: <config dir>/run)")
        sp.add_argument("--variant", action="append", default=None,
                        help="mean variant (M1..M6, optional 'memory' suffix); repeatable")
        sp.add_argument("--memory", action="store_true", default=None)
        sp.add_argument("--dt", type=int, choices=(15, 30), default=None)
        sp.add_argument("--chains", type=int)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--burnin", type=int)
        sp.add_argument("--thin", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {
        "variants": args.variant,
        "memory": args.memory,
        "dt": args.dt,
        "chains": args.chains,
        "iters": args.iters,
        "burnin": args.burnin,
        "thin": args.thin,
        "seed": args.seed,
    }
    return {k: v for k, v in out.items() if v is not None}


def _run(args) -> None:
    if args.command == "synth":
        cfg = SynthConfig(seed=args.seed) if args.dt is None else \
            SynthConfig(seed=args.seed, dt_min=args.dt, T=SynthConfig.T * SynthConfig.dt_min // args.dt)
        paths = write_dataset(synth_storm(cfg), args.out)
        print(paths["config"])
        return
    cfg = load_config(args.config, _overrides(args))
    workdir = Path(args.workdir) if args.workdir else Path(cfg.base_dir) / "run"
    if args.command == "all":
        for m in run_all(cfg, workdir):
            log.info("wrote %s", m)
    else:
        log.info("wrote %s", RUNNERS[args.command](cfg, workdir))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"lightrain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _run(args)
    except FloatingPointError as exc:
        print(f"lightrain: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"lightrain: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
