import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from .commands.router import build_parser
from .errors import PoiseuilleError

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "POISEUILLE_LC_LOG_LEVEL"


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the poiseuille-lc command

    Returns:
        Exit code: 0 ok, 1 failed verification check, 2 configuration or
        validation error, 3 solver failure
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    level = (args.log_level or os.environ.get(LOG_LEVEL_ENV, "info")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args)
    except PoiseuilleError as e:
        logger.debug(f"{type(e).__name__} raised", exc_info=True)
        print(e.describe(), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
