import sys

from dotenv import load_dotenv
from loguru import logger

from idnp.utils.core import IdnpCore


def main() -> int:
    """
    Entry point of the idnp command line. Returns the process exit code.
    """

    load_dotenv()

    logger.debug("Starting IdnpCore...")
    core = IdnpCore()
    return core.run(sys.argv[1:])


# main function for the main module
if __name__ == "__main__":
    sys.exit(main())
