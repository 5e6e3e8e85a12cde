# Models for the scenario file read by the command line
from enum import Enum
from typing import Optional

from typing_extensions import Self

from pydantic import Field, model_validator

from idnp.constant import (
    DEFAULT_BODY_RADIUS,
    DEFAULT_CONTROL_POINTS,
    DEFAULT_DIVISIONS,
    DEFAULT_FULL_NLP_BUDGET,
    DEFAULT_GOAL_RADIUS,
    DEFAULT_GOAL_SCALE,
    DEFAULT_MAX_OUTER_ITERS,
    DEFAULT_NUM_INTERVALS,
    DEFAULT_NUM_STEPS,
    DEFAULT_RHO,
    DEFAULT_SAFETY_MARGIN,
    DEFAULT_STEP_POINTS,
    DEFAULT_VARRHO1,
    DEFAULT_VARRHO2,
    SOLVER_DEFAULT_TOL,
)

from .base import StrictModel, Vector


class ModelKind(str, Enum):
    """Enum for the supported planar problem models."""

    POINT_MASS_2D = "PointMass2D"
    PLANAR_ARM_3 = "PlanarArm3"


class ObjectiveVariant(str, Enum):
    """Enum for the DP stage cost variants."""

    STEP_WEIGHTED = "StepWeighted"
    UNWEIGHTED = "Unweighted"


class Box(StrictModel):
    """Axis-aligned box, componentwise lower <= upper."""

    lower: Vector = Field(description="Lower corner")
    upper: Vector = Field(description="Upper corner")

    @model_validator(mode="after")
    def check_corners(self) -> Self:
        if len(self.lower) != len(self.upper):
            raise ValueError(
                f"box corners differ in dimension ({len(self.lower)} vs {len(self.upper)})"
            )
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"box lower {self.lower} exceeds upper {self.upper}")
        return self

    @property
    def dim(self) -> int:
        return len(self.lower)


class ObstacleRect(StrictModel):
    """Axis-aligned rectangular obstacle in meters."""

    xmin: float = Field(description="Left edge (m)")
    ymin: float = Field(description="Bottom edge (m)")
    xmax: float = Field(description="Right edge (m)")
    ymax: float = Field(description="Top edge (m)")

    @model_validator(mode="after")
    def check_extent(self) -> Self:
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(
                f"obstacle ({self.xmin}, {self.ymin}, {self.xmax}, {self.ymax}) has no area"
            )
        return self


class GoalSpec(StrictModel):
    """Goal ball in the low-dimensional space."""

    center: Vector = Field(description="Goal point w_ref (m)")
    radius: float = Field(default=DEFAULT_GOAL_RADIUS, description="Goal ball radius r (m)", gt=0)
    scale: float = Field(default=DEFAULT_GOAL_SCALE, description="Goal scale alpha", gt=0)


class ModelBounds(StrictModel):
    """Optional overrides of the model default bounds."""

    state: Optional[Box] = Field(default=None, description="State box X")
    control: Optional[Box] = Field(default=None, description="Control box U")
    lowdim_state: Optional[Box] = Field(default=None, description="Low-dimensional box W (m)")
    lowdim_control: Optional[Box] = Field(default=None, description="Low-dimensional box V")
    time: Optional[tuple[float, float]] = Field(
        default=None, description="Final time bounds [T_min, T_max] (s)"
    )

    @model_validator(mode="after")
    def check_time(self) -> Self:
        if self.time is not None:
            t_min, t_max = self.time
            if not (0 <= t_min < t_max):
                raise ValueError(f"time bounds must satisfy 0 <= T_min < T_max, got {self.time}")
        return self


class SweepSpec(StrictModel):
    """Lattice of initial low-dimensional positions for a campaign."""

    lower: Vector = Field(description="Lower corner of the sweep box (m)")
    upper: Vector = Field(description="Upper corner of the sweep box (m)")
    points: list[int] = Field(description="Lattice points per axis")

    @model_validator(mode="after")
    def check_lattice(self) -> Self:
        if not (len(self.lower) == len(self.upper) == len(self.points)):
            raise ValueError("sweep lower, upper and points must have equal length")
        if any(n < 1 for n in self.points):
            raise ValueError("sweep needs at least one point per axis")
        return self


class ScenarioParameters(StrictModel):
    """Solver knobs, defaults follow the reference experiment."""

    rho: float = Field(default=DEFAULT_RHO, description="Penalty factor rho", gt=0)
    num_steps: int = Field(default=DEFAULT_NUM_STEPS, description="DP time steps M", ge=1)
    num_intervals: int = Field(
        default=DEFAULT_NUM_INTERVALS, description="Transcription intervals N", ge=1
    )
    safety_margin: float = Field(
        default=DEFAULT_SAFETY_MARGIN, description="Collision safety margin epsilon (m)", ge=0
    )
    varrho1: float = Field(
        default=DEFAULT_VARRHO1, description="Inverse map proximity weight", ge=0
    )
    varrho2: float = Field(default=DEFAULT_VARRHO2, description="Inverse map slack weight", ge=0)
    divisions: list[int] = Field(
        default_factory=lambda: [DEFAULT_DIVISIONS],
        description="Initial grid divisions per axis (one entry is broadcast)",
    )
    control_points: list[int] = Field(
        default_factory=lambda: [DEFAULT_CONTROL_POINTS],
        description="Control grid points per axis (one entry is broadcast)",
    )
    step_points: int = Field(default=DEFAULT_STEP_POINTS, description="Step sizes in H", ge=1)
    max_iters: int = Field(
        default=DEFAULT_MAX_OUTER_ITERS, description="Outer iteration cap", ge=1
    )
    objective_variant: ObjectiveVariant = Field(
        default=ObjectiveVariant.STEP_WEIGHTED, description="DP stage cost variant"
    )
    seed: int = Field(
        default=0, description="Seed written to summary.json, campaign seeds count up from it", ge=0
    )
    mark_value: Optional[float] = Field(
        default=None, description="Additive mark penalty, defaults to 10 rho", gt=0
    )
    mark_on_failure: bool = Field(
        default=True, description="Mark DP vertices of waypoints whose lift failed"
    )
    nlp_tol: float = Field(default=SOLVER_DEFAULT_TOL, description="Trajectory KKT tolerance", gt=0)
    full_nlp_budget: float = Field(
        default=DEFAULT_FULL_NLP_BUDGET, description="Wall-clock budget of FullNlp (s)", ge=0
    )
    infeasibility_threshold: Optional[float] = Field(
        default=None, description="DP value threshold, defaults to alpha * diameter(W)"
    )

    @model_validator(mode="after")
    def check_weights(self) -> Self:
        if self.varrho1 == 0 and self.varrho2 == 0:
            raise ValueError("varrho1 and varrho2 must not both be zero")
        if any(d < 1 for d in self.divisions):
            raise ValueError("divisions must be >= 1 per axis")
        if any(n < 1 for n in self.control_points):
            raise ValueError("control_points must be >= 1 per axis")
        return self


class ScenarioFile(StrictModel):
    """A complete planning scenario as stored on disk."""

    name: str = Field(default="scenario", description="Scenario label")
    model: ModelKind = Field(description="Problem model kind")
    bounds: ModelBounds = Field(default_factory=ModelBounds, description="Bound overrides")
    body_radius: float = Field(
        default=DEFAULT_BODY_RADIUS, description="Body half-width / link radius (m)", gt=0
    )
    obstacles: list[ObstacleRect] = Field(default_factory=list, description="Static obstacles")
    initial_state: Vector = Field(description="Initial state x_0")
    goal: GoalSpec = Field(description="Goal ball")
    parameters: ScenarioParameters = Field(
        default_factory=ScenarioParameters, description="Solver parameters"
    )
    sweep: Optional[SweepSpec] = Field(default=None, description="Campaign sweep lattice")
