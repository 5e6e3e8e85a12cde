# Sweep of initial positions, every seed planned in every requested mode
import csv
import itertools
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from multiprocessing import get_context
from pathlib import Path
from typing import Any, Optional

import numpy as np
from loguru import logger

from idnp.constant import DEFAULT_OUT_DIR, EXIT_CODES, EXIT_ERROR
from idnp.models.config import SchemeMode
from idnp.models.scenario import ObjectiveVariant, ScenarioFile, SweepSpec
from idnp.services.mapping import inverse_map
from idnp.services.problem import build_collision_spec, build_problem
from idnp.services.scheme import build_scheme_config, run_scheme
from idnp.types.exceptions import IdnpError, InfeasibleWaypointError, ScenarioError
from idnp.utils.context import RunContext
from idnp.utils.core import IdnpCore
from idnp.utils.helper import format_traceback, load_scenario

CAMPAIGN_COLUMNS = [
    "seed",
    "variant",
    "mode",
    "w",
    "status",
    "exit_code",
    "iterations",
    "wall_time",
]
DEFAULT_MODES = [SchemeMode.ADAPTIVE, SchemeMode.FIXED_GRID]
SKIPPED = "Skipped"
ERROR = "Error"


def sweep_points(sweep: SweepSpec) -> list[np.ndarray]:
    """Lattice points in row-major order, the first axis varying slowest."""
    axes = [
        np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
        for lo, hi, n in zip(sweep.lower, sweep.upper, sweep.points)
    ]
    return [np.asarray(p, dtype=float) for p in itertools.product(*axes)]


def lift_initial_states(
    scenario: ScenarioFile, points: list[np.ndarray]
) -> list[tuple[np.ndarray, Optional[np.ndarray]]]:
    """Resting initial state for every sweep point, None where no preimage exists."""
    model = build_problem(scenario)
    spec = build_collision_spec(scenario)
    lifted = []
    for w in points:
        try:
            x0 = inverse_map(model, spec, w, model.seed_state(w))
            x0[model.velocity_indices] = 0.0
            lifted.append((w, x0))
        except InfeasibleWaypointError as e:
            logger.warning(f"❌ Sweep point {tuple(w)} skipped: {e.reason}")
            lifted.append((w, None))
    return lifted


def run_seed(
    scenario: ScenarioFile, seed: int, mode: SchemeMode, max_iters: Optional[int]
) -> dict[str, Any]:
    """Plan one seed in one mode. Errors become rows instead of exceptions."""
    row: dict[str, Any] = {
        "seed": seed,
        "variant": scenario.parameters.objective_variant.value,
        "mode": mode.value,
        "iterations": 0,
    }
    started = time.monotonic()
    try:
        cfg = build_scheme_config(scenario, mode=mode, max_iters=max_iters)
        outcome = run_scheme(scenario, cfg)
        row["status"] = outcome.status.value
        row["exit_code"] = EXIT_CODES[outcome.status.value]
        row["iterations"] = len(outcome.iterations)
    except IdnpError as exc:
        logger.error(f"❌ Seed {seed} ({mode.value}): {exc.title}: {exc.message}")
        row["status"] = ERROR
        row["exit_code"] = EXIT_ERROR
        row["iterations"] = len(getattr(exc, "records", []))
    except Exception as exc:
        logger.error(f"❌ Seed {seed} ({mode.value}): {format_traceback(exc)}")
        row["status"] = ERROR
        row["exit_code"] = EXIT_ERROR
    row["wall_time"] = time.monotonic() - started
    return row


def skipped_row(
    seed: int, variant: ObjectiveVariant, mode: SchemeMode, label: str
) -> dict[str, Any]:
    return {
        "seed": seed,
        "variant": variant.value,
        "mode": mode.value,
        "w": label,
        "status": SKIPPED,
        "exit_code": "",
        "iterations": 0,
        "wall_time": 0.0,
    }


def write_campaign_csv(path: Path, rows: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CAMPAIGN_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def seeded_scenario(
    scenario: ScenarioFile, seed: int, x0: np.ndarray, variant: ObjectiveVariant
) -> ScenarioFile:
    """The scenario planned for one seed: swept initial state, row seed and variant."""
    parameters = scenario.parameters.model_copy(
        update={"seed": seed, "objective_variant": variant}
    )
    return scenario.model_copy(
        update={
            "name": f"{scenario.name}-{seed}",
            "initial_state": x0.tolist(),
            "sweep": None,
            "parameters": parameters,
        }
    )


def cmd_campaign(core: IdnpCore, ctx: RunContext) -> int:
    scenario = load_campaign_scenario(ctx.scenario_path)
    modes = ctx.modes or DEFAULT_MODES
    variants = ctx.variants or [scenario.parameters.objective_variant]
    out = ctx.out_path or Path(DEFAULT_OUT_DIR)

    seeds = lift_initial_states(scenario, sweep_points(scenario.sweep))
    base_seed = scenario.parameters.seed
    logger.info(
        f"🔄 Campaign {scenario.name}: {len(seeds)} seeds from {base_seed}, modes "
        f"{', '.join(m.value for m in modes)}, variants "
        f"{', '.join(v.value for v in variants)}, {ctx.workers} worker(s)"
    )

    rows: list[dict[str, Any]] = []
    jobs = []
    for index, (w, x0) in enumerate(seeds):
        seed = base_seed + index
        label = " ".join(f"{c:.6g}" for c in w)
        for variant in variants:
            if x0 is None:
                rows.extend(skipped_row(seed, variant, mode, label) for mode in modes)
                continue
            seeded = seeded_scenario(scenario, seed, x0, variant)
            jobs.extend((seeded, seed, mode, label) for mode in modes)

    if ctx.workers == 1:
        for seeded, seed, mode, label in jobs:
            rows.append({**run_seed(seeded, seed, mode, ctx.max_iters), "w": label})
    else:
        with ProcessPoolExecutor(
            max_workers=ctx.workers, mp_context=get_context("spawn")
        ) as pool:
            futures = {
                pool.submit(run_seed, seeded, seed, mode, ctx.max_iters): label
                for seeded, seed, mode, label in jobs
            }
            for future in as_completed(futures):
                rows.append({**future.result(), "w": futures[future]})

    mode_order = {m.value: i for i, m in enumerate(modes)}
    variant_order = {v.value: i for i, v in enumerate(variants)}
    rows.sort(key=lambda r: (r["seed"], variant_order[r["variant"]], mode_order[r["mode"]]))
    write_campaign_csv(out / "campaign.csv", rows)

    for variant, mode in itertools.product(variants, modes):
        group = [r for r in rows if r["mode"] == mode.value and r["variant"] == variant.value]
        solved = sum(1 for r in group if r["status"] == "Feasible")
        print(f"{mode.value} ({variant.value}): {solved}/{len(group)} Feasible")

    return EXIT_ERROR if any(r["status"] == ERROR for r in rows) else 0


def load_campaign_scenario(path: Optional[str]) -> ScenarioFile:
    scenario = load_scenario(path)
    if scenario.sweep is None:
        raise ScenarioError(str(path), "campaign needs a sweep block")
    return scenario


def setup(core: IdnpCore) -> None:
    """
    Register the campaign subcommand.

    Args:
        core (IdnpCore): The command dispatcher.
    """
    parser = core.add_command("campaign", "Plan a sweep of initial positions", cmd_campaign)
    parser.add_argument("--scenario", required=True, help="Scenario file with a sweep block")
    parser.add_argument(
        "--modes",
        nargs="+",
        choices=[m.value for m in SchemeMode],
        help="Modes to compare (default: adaptive fixed)",
    )
    parser.add_argument("--out", default=DEFAULT_OUT_DIR, help="Output directory")
    parser.add_argument("--max-iters", type=int, help="Outer iteration cap")
    parser.add_argument("--workers", type=int, help="Worker processes (default: physical cores)")
    parser.add_argument(
        "--variants",
        nargs="+",
        choices=[v.value for v in ObjectiveVariant],
        help="Stage cost variants to compare (default: the scenario's)",
    )
