"""Command-line entry point.

Subcommands: collect, fit, synth, calibrate, run, validate, report, all.
Exit codes: 0 success, 2 configuration/validation error, 3 numerical or
synthesis failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import pipeline
from .config import ExperimentConfig, load_config, preset, serialize, validate
from .errors import ConfigError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

STAGES = ("collect", "fit", "synth", "calibrate", "run", "validate", "report", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="koopbound",
                                description="latent linear tracking control with "
                                            "conformal error bounds")
    p.add_argument("command", choices=STAGES)
    p.add_argument("--config", metavar="PATH", default=None,
                   help="configuration file (overrides the preset)")
    p.add_argument("--preset", metavar="NAME", default="dubins-paper",
                   help="named preset to start from (dubins-paper, flapper-doc)")
    p.add_argument("--out", metavar="DIR", default="out",
                   help="output directory shared by all stages")
    p.add_argument("--seed", metavar="N", type=int, default=None,
                   help="override the root seed")
    p.add_argument("--jobs", metavar="N", type=int, default=1,
                   help="parallel rollout workers for calibrate/run")
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset)
    if args.seed is not None:
        cfg.data = replace(cfg.data, seed=int(args.seed))
    return validate(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = args.out
        if args.command == "collect":
            res = pipeline.cmd_collect(cfg, out)
        elif args.command == "fit":
            res = pipeline.cmd_fit(cfg, out)
        elif args.command == "synth":
            res = pipeline.cmd_synth(cfg, out)
        elif args.command == "calibrate":
            res = pipeline.cmd_calibrate(cfg, out, jobs=args.jobs)
        elif args.command == "run":
            res = pipeline.cmd_run(cfg, out, jobs=args.jobs)
        elif args.command == "validate":
            summary = pipeline.cmd_validate(cfg, out)
            print(summary.table())
            res = {"pass_flags": summary.pass_flags}
        elif args.command == "report":
            res = pipeline.cmd_report(cfg, out)
        else:
            res = pipeline.run_all(cfg, out, jobs=args.jobs)
            print(res["validate"].table() if hasattr(res.get("validate"), "table") else "")
            res = {k: v for k, v in res.items() if k != "validate"}
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError,) as exc:
        print("validation error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print("numerical error: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print("io error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    for key, val in (res or {}).items():
        if key == "warning":
            print("warning: %s" % val, file=sys.stderr)
        else:
            print("%s: %s" % (key, val))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
