import argparse
import importlib
import pkgutil
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from loguru import logger

from idnp._version import __version__
from idnp.constant import EXIT_ERROR, LOGGING_FILE_NAME, LOGGING_ROTATION
from idnp.types.exceptions import IdnpError
from idnp.utils.context import RunContext
from idnp.utils.helper import format_traceback

__all__ = ("IdnpCore", "Handler")

Handler = Callable[["IdnpCore", RunContext], int]


class IdnpCore:
    """
    Command line dispatcher. Subcommands live in idnp.commands and register
    themselves through their setup(core) function.
    """

    def __init__(self, prog: str = "idnp") -> None:
        self.parser = argparse.ArgumentParser(
            prog=prog, description="Iterative DP and NLP motion planner with grid refinement"
        )
        self.parser.add_argument("--version", action="version", version=__version__)
        self.common = argparse.ArgumentParser(add_help=False)
        self.common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
        self.subparsers = self.parser.add_subparsers(dest="command", required=True)
        self.commands: dict[str, Handler] = {}

    def add_command(self, name: str, help: str, handler: Handler) -> argparse.ArgumentParser:
        """Register a subcommand and return its parser for the flags."""
        sub = self.subparsers.add_parser(name, help=help, parents=[self.common])
        sub.set_defaults(handler=handler)
        self.commands[name] = handler
        return sub

    def handle_exception(
        self, description: str = "An error occurred", exc: Exception | None = None
    ) -> None:
        """Log exceptions with a custom description.

        Args:
            description (str): Context for the error.
            exc (Exception): The exception to log.
        """

        logger.error(f"❌ {description}: {format_traceback(err=exc, advance=True)}")

    def run_command_setup(self) -> None:
        """
        Load every module of idnp.commands and call its setup.
        """
        import idnp.commands

        logger.debug("Starting command loading process...")

        loaded = 0
        for module in pkgutil.iter_modules(idnp.commands.__path__):
            path = f"idnp.commands.{module.name}"
            try:
                importlib.import_module(path).setup(self)
                logger.debug(f"✅ Loaded command module: {path}")
                loaded += 1
            except Exception as e:
                logger.error(f"❌ Failed to load command module {path}: {e}")

        logger.debug(f"Command loading complete. Loaded {loaded} modules.")

    @staticmethod
    def configure_logging(level: str, out_dir: Optional[Path] = None) -> None:
        logger.remove()
        logger.add(sys.stderr, level=level)
        if out_dir is not None:
            logger.add(out_dir / LOGGING_FILE_NAME, level=level, rotation=LOGGING_ROTATION)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """Parse argv, run the chosen subcommand and return its exit code."""
        if not self.commands:
            self.run_command_setup()

        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return 0 if not e.code else EXIT_ERROR

        try:
            ctx = RunContext.from_args(args)
        except Exception as exc:
            logger.error(f"❌ Invalid arguments: {exc}")
            return EXIT_ERROR

        self.configure_logging(ctx.log_level, ctx.out_path)
        try:
            return args.handler(self, ctx)
        except IdnpError as exc:
            logger.error(f"❌ {exc.title}: {exc.message}")
            return EXIT_ERROR
        except Exception as exc:
            self.handle_exception(f"Unexpected error in {ctx.command}", exc)
            return EXIT_ERROR
