import argparse
import logging
import sys

from bianchi_qe.config import LOG_LEVEL
from bianchi_qe.errors import BianchiError, ConfigError, FieldError
from bianchi_qe.handlers.commands import register_command_handlers
from bianchi_qe.handlers.verify import register_verify_handlers

logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=LOG_LEVEL.upper(),
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bianchi-qe",
        description="Arithmetic and Eisenstein series of Bianchi groups",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_command_handlers(subparsers)
    register_verify_handlers(subparsers)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.handler(args))
    except (ConfigError, FieldError) as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except BianchiError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
