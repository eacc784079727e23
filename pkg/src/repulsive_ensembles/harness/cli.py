"""Command-line entry point.

::

    repulsive-ensembles run CONFIG [--seed S] [--out DIR] [--steps T] [--particles N] [--method M]
    repulsive-ensembles recipe NAME [same overrides]
    repulsive-ensembles validate CONFIG
    repulsive-ensembles list-recipes

Failures exit nonzero after printing one JSON error record to stderr (and,
when an output directory is known, writing it to ``error.json``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import InvalidConfig, RepulsiveEnsembleError
from .config import load_config
from .experiment import run_experiment
from .recipes import list_recipes, recipe_config

EXIT_INVALID = 2
EXIT_FAILED = 1


def _parser():
    p = argparse.ArgumentParser(prog="repulsive-ensembles",
                                description="Particle ensembles with kernel repulsion.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    def overrides(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--steps", type=int)
        sp.add_argument("--particles", type=int, help="particle count (kept draws for hmc)")
        sp.add_argument("--method")

    sp = sub.add_parser("run", help="run an experiment from a YAML config")
    sp.add_argument("config")
    overrides(sp)
    sp = sub.add_parser("recipe", help="run a builtin recipe")
    sp.add_argument("name")
    overrides(sp)
    sp = sub.add_parser("validate", help="check a config without running it")
    sp.add_argument("config")
    sub.add_parser("list-recipes", help="print builtin recipe names")
    return p


def _error_record(exc) -> dict:
    rec = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
    key = getattr(exc, "key", None)
    if key is not None:
        rec["key"] = key
    step = getattr(exc, "step", None)
    if step is not None:
        rec["step"] = step
    return rec


def _report_error(exc, out):
    rec = _error_record(exc)
    print(json.dumps(rec), file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(rec) + "\n")
        except OSError:
            pass
    return EXIT_INVALID if isinstance(exc, InvalidConfig) else EXIT_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "list-recipes":
        print("\n".join(list_recipes()))
        return 0
    out = getattr(args, "out", None)
    try:
        if args.verb == "validate":
            cfg = load_config(args.config)
            print(json.dumps({"status": "valid", "name": cfg.name, "method": cfg.method}))
            return 0
        ov = dict(seed=args.seed, steps=args.steps, n=args.particles, method=args.method, output=out)
        if args.verb == "recipe":
            cfg = recipe_config(args.name, **ov)
        else:
            cfg = load_config(args.config).with_overrides(**ov)
        out = cfg.output
        if out is None:
            raise InvalidConfig("no output directory: set 'output' or pass --out", "output")
        result = run_experiment(cfg)
    except (RepulsiveEnsembleError, OSError) as exc:
        return _report_error(exc, out)
    print(json.dumps({"status": "ok", "name": cfg.name, "output": str(out),
                      "metrics": result.metrics}, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
