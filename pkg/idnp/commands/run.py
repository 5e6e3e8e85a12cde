# Single scenario run with trajectory, log, summary and snapshot output
from pathlib import Path

from loguru import logger

from idnp.constant import DEFAULT_OUT_DIR, EXIT_CODES
from idnp.models.config import SchemeMode
from idnp.models.records import Outcome
from idnp.services.scheme import build_scheme_config, run_scheme
from idnp.types.exceptions import NumericFailureError
from idnp.utils.context import RunContext
from idnp.utils.core import IdnpCore
from idnp.utils.helper import (
    append_jsonl,
    dump_json,
    load_scenario,
    summarize,
    write_trajectory_csv,
)

MODE_CHOICES = [m.value for m in SchemeMode]


def write_outputs(out: Path, outcome: Outcome, seed: int = 0) -> dict:
    """Write trajectory.csv, log.jsonl and summary.json, returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "log.jsonl"
    log_path.unlink(missing_ok=True)
    append_jsonl(log_path, outcome.iterations)
    if outcome.trajectory is not None:
        write_trajectory_csv(out / "trajectory.csv", outcome.trajectory)

    summary = summarize(outcome)
    summary["seed"] = seed
    summary["exit_code"] = EXIT_CODES[summary["status"]]
    dump_json(out / "summary.json", summary)
    return summary


def cmd_run(core: IdnpCore, ctx: RunContext) -> int:
    scenario = load_scenario(ctx.scenario_path)
    out = ctx.out_path or Path(DEFAULT_OUT_DIR)
    cfg = build_scheme_config(
        scenario,
        mode=ctx.mode or SchemeMode.ADAPTIVE,
        max_iters=ctx.max_iters,
        svg_dir=str(out) if ctx.svg else None,
    )
    logger.info(f"🔄 Running {scenario.name} in {cfg.mode.value} mode")

    try:
        outcome = run_scheme(scenario, cfg)
    except NumericFailureError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "log.jsonl").unlink(missing_ok=True)
        append_jsonl(out / "log.jsonl", exc.records)
        raise

    summary = write_outputs(out, outcome, scenario.parameters.seed)
    print(
        f"{summary['status']} after {summary['iterations']} iteration(s) "
        f"in {summary['wall_time']:.2f} s"
    )
    return summary["exit_code"]


def setup(core: IdnpCore) -> None:
    """
    Register the run subcommand.

    Args:
        core (IdnpCore): The command dispatcher.
    """
    parser = core.add_command("run", "Plan one scenario", cmd_run)
    parser.add_argument("--scenario", required=True, help="Scenario file (JSON or YAML)")
    parser.add_argument("--mode", choices=MODE_CHOICES, default=SchemeMode.ADAPTIVE.value)
    parser.add_argument("--out", default=DEFAULT_OUT_DIR, help="Output directory")
    parser.add_argument("--max-iters", type=int, help="Outer iteration cap")
    parser.add_argument("--svg", choices=["on", "off"], default="on")
