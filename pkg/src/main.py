#!/usr/bin/env python3
"""
Main entry point for the CATS laboratory command line.
"""
import os
import sys
import logging
from typing import List, Optional

from dotenv import load_dotenv

# Add the project root to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Environment settings are read at import time, so .env must be loaded first
load_dotenv()

from src.cli.dispatch import dispatch  # noqa: E402
from src.config.config import Config  # noqa: E402

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    """Send logs to stderr, and to LOG_FILE when it is set."""
    runtime = Config.get_runtime_settings()
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if runtime["log_file"]:
        handlers.append(logging.FileHandler(runtime["log_file"]))
    logging.basicConfig(
        level=getattr(logging, str(runtime["log_level"]).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    configure_logging()
    code = dispatch(argv)
    logger.debug(f"Exiting with code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
