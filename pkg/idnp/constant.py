import logging
import os

INFO = logging.INFO
DEBUG = logging.DEBUG
WARNING = logging.WARNING
ERROR = logging.ERROR
CRITICAL = logging.CRITICAL

# Logging Setting
LOGGING_DEFAULT_LEVEL = DEBUG if os.getenv("DEBUG") else INFO
LOGGING_FILE_NAME = "idnp.log"
LOGGING_ROTATION = "10 MB"

# Experiment Setting
DEFAULT_RHO = 40.0
DEFAULT_NUM_STEPS = 20
DEFAULT_NUM_INTERVALS = 200
DEFAULT_SAFETY_MARGIN = 0.01
DEFAULT_VARRHO1 = 1.0
DEFAULT_VARRHO2 = 1.0
DEFAULT_DIVISIONS = 10
DEFAULT_CONTROL_POINTS = 10
DEFAULT_STEP_POINTS = 10
DEFAULT_MAX_OUTER_ITERS = 15
DEFAULT_GOAL_SCALE = 1.0e3
DEFAULT_GOAL_RADIUS = 1.0
DEFAULT_BODY_RADIUS = 0.1
DEFAULT_FULL_NLP_BUDGET = 300.0

# mark_value defaults to this multiple of rho
MARK_VALUE_FACTOR = 10.0

# Grid Setting
MIN_EDGE_FRACTION = 1e-6

# Solver Setting
SOLVER_DEFAULT_TOL = 1e-6
SOLVER_DEFAULT_MAX_ITER = 200
SOLVER_INNER_MAX_ITER = 5000
SOLVER_PENALTY_INIT = 10.0
SOLVER_PENALTY_GROWTH = 10.0
SOLVER_PENALTY_CAP = 1e10
SOLVER_INFEASIBLE_VIOLATION = 1e-4
SOLVER_STALL_LIMIT = 50
SOLVER_NEWTON_MAX_ITER = 200

# Mapping Setting
MAPPING_DEFAULT_TOL = 1e-8
MAPPING_RESIDUAL_TOL = 1e-6
MAPPING_COLLISION_TOL = 1e-8
MAPPING_MAX_ITER = 50

# Planar arm link lengths in meters
ARM_LINK_LENGTHS = (1.0, 1.0, 0.5)

# Environment Setting
WORKERS_ENV = "IDNP_WORKERS"
LOG_LEVEL_ENV = "IDNP_LOG_LEVEL"

# SVG Setting
SVG_CELL_COLOR = "#9e9e9e"
SVG_OBSTACLE_COLOR = "#37474f"
SVG_GOAL_COLOR = "#43a047"
SVG_ITERATION_COLORS = [
    "#000000",
    "#1e4fa0",
    "#8bc34a",
    "#e65100",
    "#8e24aa",
    "#00897b",
    "#c62828",
]


def get_iteration_color(iteration: int) -> str:
    return SVG_ITERATION_COLORS[iteration % len(SVG_ITERATION_COLORS)]


# Command Setting
DEFAULT_OUT_DIR = "out"
EXIT_ERROR = 1
EXIT_CODES = {
    "Feasible": 0,
    "Infeasible": 2,
    "IterLimit": 3,
}
