import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple, Union

import numpy as np
from typing_extensions import Literal, TypedDict

from raimipy.custom_exceptions import InvalidSurfaceSpec
from raimipy.utils import fract

if TYPE_CHECKING:
    from raimipy.cover_lang import SetExpr


class SurfaceKind(Enum):
    SPHERE = "sphere"
    POWER = "power"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class Angle:
    """
    An element of the circle group C = R/Z, stored in turns. The geometric
    angle is 2*pi*value. The value is always normalized into [0, 1).
    """

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"Angle must be finite, got {self.value}")
        object.__setattr__(self, "value", fract(float(self.value)))

    def __add__(self, other: "Angle") -> "Angle":
        return Angle(self.value + other.value)

    def __neg__(self) -> "Angle":
        return Angle(-self.value)

    def __sub__(self, other: "Angle") -> "Angle":
        return Angle(self.value - other.value)

    @property
    def radians(self) -> float:
        return 2 * math.pi * self.value


# points are plain float vectors: x' = coords[:n-1], x'' = coords[2:n-1]
Point = np.ndarray


@dataclass(frozen=True)
class SphereSpec:
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise InvalidSurfaceSpec(f"Sphere requires n >= 3, got n={self.n}")

    @property
    def kind(self) -> SurfaceKind:
        return SurfaceKind.SPHERE


@dataclass(frozen=True)
class PowerSpec:
    """The rotational power surface x_n = |x'|^k over 0 < |x'| <= R"""

    n: int
    k: float
    R: float

    def __post_init__(self):
        if self.n < 3:
            raise InvalidSurfaceSpec(f"Power surface requires n >= 3, got n={self.n}")
        if not self.k > 0:
            raise InvalidSurfaceSpec(f"Power surface requires k > 0, got k={self.k}")
        if not self.R > 0:
            raise InvalidSurfaceSpec(f"Power surface requires R > 0, got R={self.R}")

    @property
    def kind(self) -> SurfaceKind:
        return SurfaceKind.POWER


@dataclass(frozen=True)
class CylinderSpec:
    """
    The cylinder x_1^2 + x_2^2 = R^2 with (x'', x_n) in omega. `omega` is an
    expression over R^(n-2) and must lie inside the box [omega_lo, omega_hi].
    """

    n: int
    R: float
    omega: "SetExpr"
    omega_lo: Tuple[float, ...]
    omega_hi: Tuple[float, ...]

    def __post_init__(self):
        if self.n < 3:
            raise InvalidSurfaceSpec(f"Cylinder requires n >= 3, got n={self.n}")
        if not self.R > 0:
            raise InvalidSurfaceSpec(f"Cylinder requires R > 0, got R={self.R}")
        object.__setattr__(self, "omega_lo", tuple(float(x) for x in self.omega_lo))
        object.__setattr__(self, "omega_hi", tuple(float(x) for x in self.omega_hi))
        if len(self.omega_lo) != self.n - 2 or len(self.omega_hi) != self.n - 2:
            raise InvalidSurfaceSpec(
                f"Omega's bounding box must have {self.n - 2} coordinates per corner"
            )
        for lo, hi in zip(self.omega_lo, self.omega_hi):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidSurfaceSpec(
                    f"Omega's bounding box is empty or unbounded: {self.omega_lo} .. {self.omega_hi}"
                )

    @property
    def kind(self) -> SurfaceKind:
        return SurfaceKind.CYLINDER


SurfaceSpec = Union[SphereSpec, PowerSpec, CylinderSpec]


@dataclass(frozen=True)
class BallVec:
    "Fiber point of the sphere: v in the open unit ball B_(n-2)"
    v: Tuple[float, ...]


@dataclass(frozen=True)
class RhoX:
    "Fiber point of a power surface: rho > 0 and x'' with rho^2 + |x''|^2 <= R^2"
    rho: float
    xpp: Tuple[float, ...]


@dataclass(frozen=True)
class OmegaVec:
    "Fiber point of a cylinder: w = (x'', x_n) in omega"
    w: Tuple[float, ...]


FiberPoint = Union[BallVec, RhoX, OmegaVec]


def fiber_to_array(y: FiberPoint) -> np.ndarray:
    "Pack a fiber point into the (n-2)-vector layout used by the vectorized geometry"
    if isinstance(y, BallVec):
        return np.array(y.v, dtype=float)
    elif isinstance(y, RhoX):
        return np.array((y.rho,) + tuple(y.xpp), dtype=float)
    elif isinstance(y, OmegaVec):
        return np.array(y.w, dtype=float)
    else:
        raise Exception(f"Unknown fiber type: {type(y)}")


class AxisMarker(Enum):
    """Returned by phi_inverse for points of the exceptional set N (x1 = x2 = 0)"""

    IN_N = "in_n"


IN_N = AxisMarker.IN_N


class Outcome(Enum):
    CERTIFIED = "certified"
    SEARCH_EXHAUSTED = "search_exhausted"
    SAMPLING_TOO_NOISY = "sampling_too_noisy"


MeasureEstimateDict = TypedDict(
    "MeasureEstimateDict", {"mean": float, "std_err": float, "n_samples": int}
)
AuditEntryDict = TypedDict(
    "AuditEntryDict",
    {"part": int, "lhs": MeasureEstimateDict, "rhs": float, "passed": bool},
)
ProvenanceDict = TypedDict(
    "ProvenanceDict",
    {
        "config_hash": Optional[str],
        "seed": int,
        "streams": Dict[str, int],
    },
)
VerificationReportDict = TypedDict(
    "VerificationReportDict",
    {
        "schema_version": str,
        "created_at": str,
        "outcome": Literal["certified", "search_exhausted", "sampling_too_noisy"],
        "certified": bool,
        "chosen_m": int,
        "chosen_theta0": float,
        "objective": float,
        "intersections": List[MeasureEstimateDict],
        "reduced_intersections": List[MeasureEstimateDict],
        "reduction_consistent": List[bool],
        "inequality_audit": List[AuditEntryDict],
        "audit_passed": bool,
        "flagged_cells": int,
        "candidates_tried": int,
        "provenance": ProvenanceDict,
    },
)
