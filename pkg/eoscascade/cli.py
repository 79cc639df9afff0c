#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=wrong-import-position

import sys
import os
import argparse
import logging

from typing import List, Optional

sys.path.append(os.path.realpath("."))

from eoscascade.config import load_config
from eoscascade.errors import (
    ConfigurationError,
    ContractError,
    SchemaError,
    UndefinedRateError,
)
from eoscascade.experiment import (
    run_experiment,
    run_oracle_study,
    run_report,
    run_sweep,
)

logger = logging.getLogger("eoscascade")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_FLAGGED = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eoscascade",
        description="Simulate EOS segmentation in a two-pass streaming recognizer.",
    )
    parser.add_argument(
        "command",
        choices=["experiment", "sweep", "oracle", "report"],
        help="study to run",
    )
    parser.add_argument(
        "--config",
        type=str,
        help="YAML configuration file",
        default=None,
    )
    parser.add_argument(
        "--out",
        type=str,
        help="Specify the output directory, overriding output_dir",
        default=None,
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="Seed for the corpus and the acoustic model",
        default=None,
    )
    parser.add_argument(
        "--set",
        action="append",
        dest="overrides",
        metavar="KEY=VALUE",
        help="Override a configuration value, e.g. beam_first.eos_threshold=4.5",
        default=[],
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        help="Log progress, twice for debug output",
        default=0,
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(args.config, args.overrides, seed=args.seed)
        flagged = False
        if args.command == "experiment":
            written = run_experiment(config, args.out)
        elif args.command == "sweep":
            written = run_sweep(config, args.out)
        elif args.command == "oracle":
            written, flagged = run_oracle_study(config, args.out)
        else:
            written = run_report(config, args.out)
    except (ConfigurationError, SchemaError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except (ContractError, UndefinedRateError) as e:
        logger.error("no result for this configuration: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("cannot write results: %s", e)
        return EXIT_IO

    for path in written:
        print(path)
    if flagged:
        logger.error("%s study flagged a failure, see the log above", args.command)
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
