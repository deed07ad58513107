import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from causal_hr.api.router import COMMANDS, overrides_from_args, parse
from causal_hr.core.exceptions import CausalHRError
from causal_hr.core.logging import setup_logging
from causal_hr.schemas.run_config import load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _fail(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    args = parse(argv)
    setup_logging(args.log_level)

    try:
        config = load_run_config(args.config, overrides_from_args(args))
        files = COMMANDS[args.command](config)
    except CausalHRError as exc:
        logger.error(f"{args.command} failed: {exc.message}")
        _fail(exc.code, exc.message)
        return EXIT_USAGE if exc.code in ("config_invalid", "schema_violation") else EXIT_ERROR
    except ValidationError as exc:
        logger.error(f"{args.command} failed: invalid parameters")
        _fail("config_invalid", str(exc).replace("\n", " "))
        return EXIT_USAGE
    except OSError as exc:
        logger.error(f"{args.command} failed: {exc}")
        _fail("io_error", str(exc))
        return EXIT_ERROR

    for name, path in sorted(files.items()):
        sys.stdout.write(f"{name}\t{path}\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
