import argparse
import logging
import os
from pathlib import Path
from typing import Optional

import psutil
from pydantic import Field

from idnp.constant import LOG_LEVEL_ENV, LOGGING_DEFAULT_LEVEL, WORKERS_ENV
from idnp.models.base import IdnpModel
from idnp.models.config import SchemeMode
from idnp.models.scenario import ObjectiveVariant


def default_workers() -> int:
    """IDNP_WORKERS, else the number of physical cores."""
    env = os.getenv(WORKERS_ENV)
    if env and env.isdigit() and int(env) > 0:
        return int(env)
    return psutil.cpu_count(logical=False) or 1


def default_log_level() -> str:
    env = os.getenv(LOG_LEVEL_ENV)
    if env:
        return env.upper()
    if os.getenv("DEBUG"):
        return "DEBUG"
    return logging.getLevelName(LOGGING_DEFAULT_LEVEL)


class RunContext(IdnpModel):
    """Parsed command line shared by every subcommand."""

    command: str = Field(description="Subcommand name")
    scenario_path: Optional[str] = Field(default=None)
    out_dir: Optional[str] = Field(default=None, description="Output directory")
    mode: Optional[SchemeMode] = Field(default=None)
    modes: list[SchemeMode] = Field(default_factory=list, description="Campaign modes")
    variants: list[ObjectiveVariant] = Field(
        default_factory=list, description="Campaign objective variants"
    )
    max_iters: Optional[int] = Field(default=None, ge=1)
    workers: int = Field(default_factory=default_workers, ge=1)
    svg: bool = Field(default=True)
    log_level: str = Field(default_factory=default_log_level)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunContext":
        values = {
            "command": args.command,
            "scenario_path": getattr(args, "scenario", None),
            "out_dir": getattr(args, "out", None),
            "mode": getattr(args, "mode", None),
            "modes": getattr(args, "modes", None) or [],
            "variants": getattr(args, "variants", None) or [],
            "max_iters": getattr(args, "max_iters", None),
            "svg": getattr(args, "svg", "on") == "on",
        }
        if getattr(args, "workers", None):
            values["workers"] = args.workers
        if getattr(args, "log_level", None):
            values["log_level"] = args.log_level.upper()
        return cls(**values)

    @property
    def out_path(self) -> Optional[Path]:
        return Path(self.out_dir) if self.out_dir else None
