from typing import Optional, Sequence


def _fmt_point(w: Sequence[float]) -> str:
    return "(" + ", ".join(f"{float(c):.6g}" for c in w) + ")"


class IdnpError(Exception):
    def __init__(self, *, title: str, message: str) -> None:
        super().__init__(f"{title}: {message}")
        self.title = title
        self.message = message


class ContractViolationError(IdnpError):
    def __init__(self, reason: str) -> None:
        super().__init__(
            title="Contract violation",
            message=reason,
        )


class InvalidGeometryError(IdnpError):
    def __init__(self, reason: str) -> None:
        super().__init__(
            title="Invalid geometry",
            message=reason,
        )


class RefinementLimitError(IdnpError):
    def __init__(self, lower: Sequence[float], upper: Sequence[float]) -> None:
        self.lower = tuple(float(c) for c in lower)
        self.upper = tuple(float(c) for c in upper)
        super().__init__(
            title="Refinement limit reached",
            message=(
                f"Cell {_fmt_point(lower)}-{_fmt_point(upper)} "
                "is already at the minimum edge length."
            ),
        )


class PenaltyEvaluationError(IdnpError):
    def __init__(self, w: Sequence[float], best_value: float) -> None:
        self.w = tuple(float(c) for c in w)
        self.best_value = best_value
        super().__init__(
            title="Penalty evaluation failed",
            message=(
                f"Inner problem at {_fmt_point(w)} did not converge, "
                f"best value found {best_value:.6g}."
            ),
        )


class InfeasibleWaypointError(IdnpError):
    def __init__(
        self, w: Sequence[float], reason: str = "no collision-free preimage found"
    ) -> None:
        self.w = tuple(float(c) for c in w)
        self.reason = reason
        super().__init__(
            title="Infeasible waypoint",
            message=f"Waypoint {_fmt_point(w)} could not be lifted: {reason}.",
        )


class ScenarioError(IdnpError):
    def __init__(self, path: str, reason: str, line: int | None = None) -> None:
        self.path = path
        self.line = line
        anchor = f"{path}:{line}" if line is not None else path
        super().__init__(
            title="Malformed scenario",
            message=f"{anchor}: {reason}",
        )


class NumericFailureError(IdnpError):
    def __init__(self, reason: str, records: Optional[list] = None) -> None:
        self.records = records or []
        super().__init__(
            title="Numeric failure",
            message=reason,
        )
