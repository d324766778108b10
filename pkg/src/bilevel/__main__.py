# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import argparse
import json
import logging
import os
import pathlib
import sys

from dotenv import load_dotenv

from bilevel.errors import InfeasibleRuleError, SolverError, ValidationError
from bilevel.experiment import check_adjoint, load_config, probe, run, sweep
from bilevel.experiment.config import OUTPUT_ENV
from bilevel.logger import configure_logging

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_logger = logging.getLogger("bilevel").getChild("cli")

COMMANDS = {
    "run": run,
    "sweep": sweep,
    "probe": probe,
    "check-adjoint": check_adjoint,
}


def parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilevel", description="Bi-level Landweber experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=pathlib.Path, default=os.environ.get("BILEVEL_CONFIG"))
    parser.add_argument("--out", type=pathlib.Path, default=os.environ.get(OUTPUT_ENV))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--log-level", default=os.environ.get("BILEVEL_LOG_LEVEL", "INFO"))
    parser.add_argument("--pretty", action="store_true", default=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = parser().parse_args(argv)

    configure_logging(args.log_level.upper(), pretty=args.pretty)

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed,
            max_iter=args.max_iter,
            output=args.out,
        )
        COMMANDS[args.command](config)
    except (ValidationError, json.JSONDecodeError, OSError):
        _logger.exception("Invalid input", extra={"command": args.command})
        return EXIT_VALIDATION
    except (SolverError, InfeasibleRuleError):
        _logger.exception("Run aborted", extra={"command": args.command})
        return EXIT_RUNTIME

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
