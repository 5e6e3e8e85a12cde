# Parse-only check of a scenario file
from loguru import logger

from idnp.services.problem import build_collision_spec, build_problem
from idnp.services.scheme import build_scheme_config
from idnp.utils.context import RunContext
from idnp.utils.core import IdnpCore
from idnp.utils.helper import load_scenario


def cmd_validate(core: IdnpCore, ctx: RunContext) -> int:
    scenario = load_scenario(ctx.scenario_path)
    model = build_problem(scenario)
    spec = build_collision_spec(scenario)
    cfg = build_scheme_config(scenario, model)

    logger.info(f"✅ Scenario {scenario.name} is valid")
    print(
        f"{scenario.name}: {scenario.model.value}, {spec.count} obstacle(s), "
        f"M = {cfg.dp.num_steps}, N = {cfg.num_intervals}, "
        f"{len(cfg.dp.control_grid.points)} controls x {len(cfg.dp.control_grid.step_sizes)} steps"
    )
    return 0


def setup(core: IdnpCore) -> None:
    """
    Register the validate subcommand.

    Args:
        core (IdnpCore): The command dispatcher.
    """
    parser = core.add_command("validate", "Parse a scenario without planning", cmd_validate)
    parser.add_argument("--scenario", required=True, help="Scenario file (JSON or YAML)")
