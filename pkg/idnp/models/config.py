# Runtime configuration models for the solver blocks
from enum import Enum
from typing import Optional

from typing_extensions import Self

import numpy as np
from pydantic import Field, model_validator

from idnp.constant import (
    DEFAULT_FULL_NLP_BUDGET,
    DEFAULT_MAX_OUTER_ITERS,
    DEFAULT_NUM_INTERVALS,
    DEFAULT_NUM_STEPS,
    DEFAULT_RHO,
    DEFAULT_VARRHO1,
    DEFAULT_VARRHO2,
    MAPPING_DEFAULT_TOL,
    MAPPING_MAX_ITER,
    MARK_VALUE_FACTOR,
    SOLVER_DEFAULT_MAX_ITER,
    SOLVER_DEFAULT_TOL,
    SOLVER_INFEASIBLE_VIOLATION,
    SOLVER_INNER_MAX_ITER,
    SOLVER_NEWTON_MAX_ITER,
    SOLVER_PENALTY_CAP,
    SOLVER_PENALTY_GROWTH,
    SOLVER_PENALTY_INIT,
    SOLVER_STALL_LIMIT,
)

from .base import IdnpModel, Vector
from .scenario import ObjectiveVariant


class SchemeMode(str, Enum):
    """Enum for the outer loop variants."""

    ADAPTIVE = "adaptive"
    FIXED_GRID = "fixed"
    FULL_NLP = "full-nlp"


class InnerMethod(str, Enum):
    """Box-constrained subproblem solver of the augmented Lagrangian."""

    AUTO = "auto"
    NEWTON = "newton"
    LBFGSB = "lbfgsb"


class SolverOptions(IdnpModel):
    """Knobs of the augmented Lagrangian solver."""

    penalty_init: float = Field(default=SOLVER_PENALTY_INIT, gt=0)
    penalty_growth: float = Field(default=SOLVER_PENALTY_GROWTH, gt=1)
    penalty_cap: float = Field(default=SOLVER_PENALTY_CAP, gt=0)
    inner_method: InnerMethod = Field(
        default=InnerMethod.AUTO, description="auto uses Gauss-Newton when f has a curvature model"
    )
    inner_max_iter: int = Field(default=SOLVER_INNER_MAX_ITER, ge=1)
    newton_max_iter: int = Field(default=SOLVER_NEWTON_MAX_ITER, ge=1)
    infeasible_violation: float = Field(default=SOLVER_INFEASIBLE_VIOLATION, gt=0)
    stall_limit: int = Field(default=SOLVER_STALL_LIMIT, ge=1)
    deadline: Optional[float] = Field(
        default=None, description="Absolute time.monotonic() deadline, None for no limit"
    )


class ControlGrid(IdnpModel):
    """Discrete low-dimensional controls G_v and step sizes H."""

    points: list[Vector] = Field(description="Control points in V, in tie-break order")
    step_sizes: list[float] = Field(description="Step sizes h, in tie-break order")

    @model_validator(mode="after")
    def check_nonempty(self) -> Self:
        if not self.points or not self.step_sizes:
            raise ValueError("control grid needs at least one control point and one step size")
        if any(h <= 0 for h in self.step_sizes):
            raise ValueError(f"step sizes must be positive, got {self.step_sizes}")
        return self

    @property
    def controls(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @property
    def steps(self) -> np.ndarray:
        return np.asarray(self.step_sizes, dtype=float)


class DpConfig(IdnpModel):
    num_steps: int = Field(default=DEFAULT_NUM_STEPS, description="DP time steps M", ge=1)
    objective_variant: ObjectiveVariant = Field(default=ObjectiveVariant.STEP_WEIGHTED)
    control_grid: ControlGrid
    clamp_out_of_bounds: bool = Field(default=True)


class MappingConfig(IdnpModel):
    varrho1: float = Field(default=DEFAULT_VARRHO1, ge=0)
    varrho2: float = Field(default=DEFAULT_VARRHO2, ge=0)
    kkt_tol: float = Field(default=MAPPING_DEFAULT_TOL, gt=0)
    max_iter: int = Field(default=MAPPING_MAX_ITER, ge=1)
    retry_from_seed: bool = Field(
        default=True, description="Retry a failed lift from the model seed state"
    )

    @model_validator(mode="after")
    def check_weights(self) -> Self:
        if self.varrho1 == 0 and self.varrho2 == 0:
            raise ValueError("varrho1 and varrho2 must not both be zero")
        return self


class PenaltySetting(IdnpModel):
    rho: float = Field(default=DEFAULT_RHO, description="Penalty factor", gt=0)
    mark_value: Optional[float] = Field(
        default=None, description="Additive mark, defaults to 10 rho", gt=0
    )

    @property
    def effective_mark_value(self) -> float:
        if self.mark_value is None:
            return MARK_VALUE_FACTOR * self.rho
        return self.mark_value


class SchemeConfig(IdnpModel):
    """Everything the outer loop needs besides the problem itself."""

    max_outer_iters: int = Field(default=DEFAULT_MAX_OUTER_ITERS, ge=1)
    mode: SchemeMode = Field(default=SchemeMode.ADAPTIVE)
    dp: DpConfig
    mapping: MappingConfig = Field(default_factory=MappingConfig)
    penalty: PenaltySetting = Field(default_factory=PenaltySetting)
    num_intervals: int = Field(default=DEFAULT_NUM_INTERVALS, ge=1)
    divisions: list[int] = Field(description="Initial grid divisions per low-dimensional axis")
    nlp_tol: float = Field(default=SOLVER_DEFAULT_TOL, gt=0)
    nlp_max_iter: int = Field(default=SOLVER_DEFAULT_MAX_ITER, ge=1)
    infeasibility_threshold: Optional[float] = Field(
        default=None, description="DP value threshold, None selects alpha * diameter(W)"
    )
    mark_on_failure: bool = Field(default=True)
    full_nlp_budget: float = Field(default=DEFAULT_FULL_NLP_BUDGET, ge=0)
    svg_dir: Optional[str] = Field(default=None, description="Directory for iter_<k>.svg files")
