"""cwmeas <scenario> --config FILE [--out DIR] [--seed N] [--workers N]

Exit codes: 0 ok, 2 configuration error, 3 solver error, 4 partial sweep failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SCENARIOS, ConfigError, ScenarioConfig, load_config
from .scenarios import ENV_OUT, SolverError, execute, output_dir

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwmeas", description="Curie-Weiss measurement model scenarios.")
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", help="scenario config file; defaults apply when omitted")
    ap.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./cwmeas-out)")
    ap.add_argument("--seed", type=int, help="override params.seed")
    ap.add_argument("--workers", type=int, default=1, help="parallel sweep children")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> ScenarioConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.scenario != args.scenario:
            raise ConfigError(f"config is for scenario {cfg.scenario!r}, command line asks for {args.scenario!r}")
    else:
        if args.scenario == "sweep":
            raise ConfigError("sweep needs a --config with a [sweep] section")
        from .config import parse_config

        cfg = parse_config(f"scenario = {args.scenario}\n")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in 64 bits")
        cfg = cfg.with_seed(args.seed)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        out = output_dir(cfg, args.out)
    except (ConfigError, OSError) as exc:
        print(f"cwmeas: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rec, res = execute(cfg, out, args.workers)
    except SolverError as exc:
        print(f"cwmeas: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"cwmeas: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg.scenario}: wrote {', '.join(rec.files)} to {out} (config {rec.config_hash[:12]})")
    for k, v in rec.metrics.items():
        if not isinstance(v, (list, dict)):
            print(f"  {k} = {v}")
    if res.failures:
        print(f"cwmeas: {res.failures} sweep children failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
