"""Command-line front end.

Usage::

    pbsent {derive,bell,qkd,dist} [--config FILE] [--set KEY=VALUE ...]
           [--out PATH] [--format {records,csv}]

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
Nothing is written to ``--out`` unless the command succeeds.
"""

from __future__ import annotations

import argparse
import logging
import sys

from pbsent.cli.commands import COMMANDS, CommandError
from pbsent.cli.config import ConfigError, ExperimentConfig, load_config
from pbsent.cli.records import encode, make_record, write_atomic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("pbsent")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbsent", description="Two-source PBS entanglement simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("derive", "compare the network output with the closed-form states"),
        ("bell", "CHSH values on the post-selected two-photon branch"),
        ("qkd", "Monte Carlo QKD session (needs a seed)"),
        ("dist", "arm-A photon-number distribution, optionally sampled"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="YAML key-value experiment file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; dotted keys for nested values)")
        sp.add_argument("--out", help="result file (default: stdout)")
        sp.add_argument("--format", choices=("records", "csv"), help="output encoding")
    return p


def run(config: ExperimentConfig) -> dict:
    return make_record(config, COMMANDS[config.command](config))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.command, args.overrides, out=args.out, format=args.format)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    try:
        payload = encode(run(config), config.format)
    except (CommandError, ValueError, ArithmeticError) as exc:
        log.error("%s failed: %s", config.command, exc)
        return EXIT_RUNTIME
    if config.out:
        try:
            write_atomic(config.out, payload)
        except OSError as exc:
            log.error("cannot write %s: %s", config.out, exc)
            return EXIT_RUNTIME
    else:
        sys.stdout.write(payload)
    return EXIT_OK
