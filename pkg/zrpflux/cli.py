import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

import zrpflux
from zrpflux.commands import COMMANDS
from zrpflux.common import logger
from zrpflux.common.exceptions import (
    AcceptanceFailure,
    ConfigError,
    ParameterError,
    SpecError,
    ZrpFluxError,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zrpflux",
        description="Zero-range process with a source: simulation and exact verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {zrpflux.__version__}")
    subparsers = parser.add_subparsers(dest="command_name", required=True)
    for command in COMMANDS:
        command.add_to(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    namespace = parser.parse_args(argv)
    command = namespace.command
    values = {k: v for k, v in vars(namespace).items() if k not in ("command", "command_name")}
    try:
        return command.invoke(values)
    except AcceptanceFailure as e:
        logger.error(f"{command.name}: acceptance check failed: {e}")
        return EXIT_ACCEPTANCE
    except (ConfigError, ParameterError, SpecError, ValidationError) as e:
        logger.error(f"{command.name}: invalid input: {e}")
        return EXIT_INVALID
    except ZrpFluxError as e:
        logger.error(f"{command.name}: {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
