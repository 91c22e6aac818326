"""
Branching Spectra Lab

Command-line entry point: spectral decomposition of the ground-state
transformed operator, Monte Carlo of the branching system and the
verification checks that tie the two together.
"""
import logging
import sys
import traceback

from src.cli.commands import EXIT_NUMERIC, main as run_cli
from src.utils.config import setup_logging

# Initialize logging
setup_logging()
logger = logging.getLogger(__name__)


def main() -> int:
    """Main application function."""
    try:
        return run_cli(sys.argv[1:])
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_NUMERIC
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}")
        logger.error(traceback.format_exc())
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
