import csv
import json
import os
import re
import traceback
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, ValidationError

from idnp.models.scenario import ScenarioFile
from idnp.types.exceptions import ScenarioError

if TYPE_CHECKING:
    from idnp.models.records import Outcome
    from idnp.services.nlp import Trajectory


YAML_EXTENSIONS = (".yaml", ".yml")


def format_traceback(err: Exception | None, advance: bool = False) -> str:
    """Format traceback details for debugging.

    Args:
        err (Exception): The caught exception.
        advance (bool): True for extended details, False for concise.

    Returns:
        str: A formatted traceback string.
    """

    if err is None:
        return "No traceback available"

    if os.getenv("DEBUG") == "TRUE":
        advance = True

    if advance:
        return "".join(traceback.format_exception(type(err), err, err.__traceback__))
    return f"{type(err).__name__}: {err}"


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dump_json(path: Path | str, data: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, default=_to_jsonable)


def append_jsonl(path: Path | str, rows: Iterable[BaseModel]) -> int:
    """Append one JSON line per model, returns the number of lines written."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "a", encoding="utf-8") as f:
        for row in rows:
            f.write(row.model_dump_json() + "\n")
            count += 1
    return count


def _field_line(text: str, loc: Sequence[Any]) -> int | None:
    """Best guess of the line holding the innermost named field of a validation error."""
    keys = [k for k in loc if isinstance(k, str)]
    for key in reversed(keys):
        pattern = re.compile(rf"""(^|[\s{{,])["']?{re.escape(key)}["']?\s*:""")
        for number, line in enumerate(text.splitlines(), start=1):
            if pattern.search(line):
                return number
    return None


def load_scenario(path: Path | str) -> ScenarioFile:
    """Read a JSON or YAML scenario file.

    Raises:
        ScenarioError: The file is missing, unparsable or fails validation;
            the message carries the offending line when it can be found.
    """
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError(path, e.strerror or str(e)) from e

    try:
        if path.lower().endswith(YAML_EXTENSIONS):
            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(path, e.msg, e.lineno) from e
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ScenarioError(path, str(e.problem), line) from e

    if not isinstance(raw, dict):
        raise ScenarioError(path, "top level must be a mapping", 1)

    try:
        scenario = ScenarioFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(k) for k in first["loc"]) or "scenario"
        line = _field_line(text, first["loc"])
        raise ScenarioError(path, f"{where}: {first['msg']}", line) from e

    logger.debug(f"Loaded scenario {scenario.name} from {path}")
    return scenario


def write_trajectory_csv(path: Path | str, traj: "Trajectory") -> None:
    """One row per node: t, states, controls. The last node has no control."""
    n_x = traj.states.shape[1]
    n_u = traj.controls.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(n_x)] + [f"u_{i + 1}" for i in range(n_u)]

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, t in enumerate(traj.times):
            row = [float(t), *traj.states[i].tolist()]
            if i < traj.num_intervals:
                row.extend(traj.controls[i].tolist())
            else:
                row.extend([""] * n_u)
            writer.writerow(row)


def summarize(outcome: "Outcome") -> dict[str, Any]:
    traj = outcome.trajectory
    return {
        "status": outcome.status.value,
        "iterations": len(outcome.iterations),
        "final_time": None if traj is None else float(traj.final_time),
        "objective": None if traj is None else float(traj.objective_value),
        "wall_time": outcome.wall_time,
        "message": outcome.message,
    }
