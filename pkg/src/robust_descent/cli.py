"""Command-line entry point: ``robust-descent {controlled,regression,classify,validate}``.

Exit status is 0 on success, 1 when a validation check or experiment cell
fails, and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, run_experiment
from .validation import CHECKS, run_validation_suite

log = logging.getLogger("robust_descent")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="robust-descent", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("controlled", "regression", "classify", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON experiment config")
        sp.add_argument("--out", type=Path, help="output directory (results.csv, meta.json)")
        sp.add_argument("--seed", type=int, help="root seed, overrides the config")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for trial cells")
        if name == "validate":
            sp.add_argument("--only", nargs="+", choices=sorted(CHECKS), help="run a subset of checks")
    return p


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        data = {"kind": args.command}
    else:
        try:
            data = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.setdefault("kind", args.command)
        if data["kind"] != args.command:
            raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {args.command!r}")
    if args.command == "controlled":
        data.setdefault("methods", ["oracle", "erm", "rgdmult"])
    elif args.command == "regression":
        data.setdefault("methods", ["ols", "lad", "geomed", "erm", "rgdmult"])
    elif args.command == "classify":
        data.setdefault("methods", ["rgdmult", "sgd", "svrg", "erm"])
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = str(args.out)
    return ExperimentConfig.from_dict(data)


def _validate(args) -> int:
    results = run_validation_suite(args.only)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        report = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
        (args.out / "validation.json").write_text(json.dumps(report, indent=2))
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        return _validate(args)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = run_experiment(cfg, cfg.out, threads=args.threads)
    meta = json.loads((path.parent / "meta.json").read_text())
    log.info("wrote %s (%d cells run, %d skipped)", path, meta["cells_run"], meta["cells_skipped"])
    for f in meta["failures"]:
        log.error("cell %s/%d failed: %s", f["method"], f["trial"], f["error"].splitlines()[0])
    return EXIT_FAIL if meta["failures"] else EXIT_OK
