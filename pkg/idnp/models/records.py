# Observability records produced by the outer loop
from enum import Enum
from typing import Any, Optional

from pydantic import Field

from .base import IdnpModel, Vector


class OutcomeStatus(str, Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


class FlaggedPoint(IdnpModel):
    """A low-dimensional point handed to grid adaptation."""

    tau: float = Field(description="DP time stamp (s)")
    w: Vector = Field(description="Low-dimensional state")
    source: str = Field(description="lift, collision or waypoint")


class CellBox(IdnpModel):
    lower: Vector
    upper: Vector


class IterationRecord(IdnpModel):
    """One outer iteration, written as one JSON line."""

    iteration: int = Field(description="Outer iteration index, starting at 1")
    mode: str = Field(description="Scheme mode")
    dp_value: Optional[float] = Field(default=None, description="theta(tau_0, w_0)")
    times: list[float] = Field(default_factory=list, description="Waypoint time stamps")
    waypoints: list[Vector] = Field(default_factory=list, description="Waypoints w_j")
    failed_lifts: int = Field(default=0)
    colliding_points: int = Field(default=0)
    penetration: float = Field(default=0.0, description="Sum of positive collision values")
    flagged: list[FlaggedPoint] = Field(default_factory=list)
    vertices_added: list[int] = Field(default_factory=list, description="New vertices per grid")
    split_cells: list[list[CellBox]] = Field(
        default_factory=list, description="Cells split per grid in this iteration"
    )
    refinement_limit_hits: int = Field(default=0)
    vertex_counts: list[int] = Field(default_factory=list, description="Vertices per grid")
    leaf_counts: list[int] = Field(default_factory=list, description="Leaf cells per grid")
    marks_total: float = Field(default=0.0, description="Sum of all penalty marks")
    nlp_status: Optional[str] = Field(default=None)
    final_time: Optional[float] = Field(default=None)
    objective: Optional[float] = Field(default=None)
    svg_path: Optional[str] = Field(default=None)
    timings: dict[str, float] = Field(default_factory=dict, description="Wall time per block (s)")

    def comparable(self) -> dict[str, Any]:
        """Dump without wall-clock fields."""
        return self.model_dump(mode="json", exclude={"timings", "svg_path"})


class Outcome(IdnpModel):
    status: OutcomeStatus
    trajectory: Optional[Any] = Field(
        default=None, description="Trajectory when Feasible, best attempt on IterLimit"
    )
    iterations: list[IterationRecord] = Field(default_factory=list)
    wall_time: float = Field(default=0.0)
    message: str = Field(default="")

    @property
    def feasible(self) -> bool:
        return self.status == OutcomeStatus.FEASIBLE
