from typing import Annotated, Any

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict


def vector_validator(v: Any) -> Any:
    """Validator function for numeric vector fields"""
    if isinstance(v, np.ndarray):
        return [float(c) for c in v.reshape(-1)]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if isinstance(v, tuple):
        return list(v)
    return v


# Accepts lists, tuples, scalars and numpy arrays
Vector = Annotated[list[float], BeforeValidator(vector_validator)]


class IdnpModel(BaseModel):
    model_config = ConfigDict(
        json_encoders={np.ndarray: lambda v: v.tolist()},
        arbitrary_types_allowed=True,
        use_enum_values=False,
    )


class StrictModel(IdnpModel):
    """Model that rejects unknown fields, used for everything read from disk."""

    model_config = ConfigDict(extra="forbid")


def as_array(v: Vector | None) -> np.ndarray | None:
    if v is None:
        return None
    return np.asarray(v, dtype=float)
