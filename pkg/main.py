"""
bmprior: Boltzmann machine priors of binarized natural images
Command line entry point
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

# Add parent directory to path for imports
sys.path.append(str(Path(__file__).parent))

from config import settings
from routers import analysis, images, inference
from routers.common import positive_int
from services.errors import BmPriorError, UsageError

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad arguments"""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--threads", type=positive_int, default=None,
                        help="worker threads (default: BMPRIOR_THREADS or all cores)")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = CliParser(prog=settings.PROJECT_NAME, description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    images.register(subparsers, common)
    inference.register(subparsers, common)
    analysis.register(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 1 on usage errors, 2 on data errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            raise UsageError("a subcommand is required")
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BmPriorError, ValidationError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
