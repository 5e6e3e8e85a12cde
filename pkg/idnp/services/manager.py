# Cache management for penalty values
from typing import Callable, Iterable, Optional

from loguru import logger

Point = tuple[float, ...]


class PenaltyManager:
    """A static class to cache penalty values per planning run.

    P depends on the geometry only, so one table per run is shared by every
    time index and survives refinement. Vertices are keyed by their exact
    coordinates.
    """

    values: dict[str, dict[Point, float]] = {}

    @staticmethod
    def get(key: str, point: Point, compute: Callable[[Point], float]) -> float:
        """Get a cached penalty value, computing it on a miss.

        Args:
            key: Run identifier.
            point: Vertex coordinates.
            compute: Evaluates P at a point.

        Returns:
            float: The penalty value.
        """
        table = PenaltyManager.values.setdefault(key, {})
        if point in table:
            return table[point]

        table[point] = float(compute(point))
        return table[point]

    @staticmethod
    def invalidate(key: str, points: Iterable[Point]) -> int:
        table = PenaltyManager.values.get(key)
        if not table:
            return 0
        dropped = sum(1 for p in points if table.pop(p, None) is not None)
        if dropped:
            logger.debug(f"🔄 Dropped {dropped} cached penalty values for {key}")
        return dropped

    @staticmethod
    def size(key: str) -> int:
        return len(PenaltyManager.values.get(key, {}))

    @staticmethod
    def reset(key: Optional[str] = None) -> None:
        if key is None:
            PenaltyManager.values.clear()
        else:
            PenaltyManager.values.pop(key, None)
