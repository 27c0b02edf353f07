"""
Parametrizations phi: C x Y -> X \\ N of the three surface families, their
inverses, and the circle action R_alpha rotating (x1, x2).

Scalar operations validate their input and raise; the `*_points` forms work
on (m, n) arrays and are what the samplers and estimators use. Fibers are
packed as (m, n-2) arrays: v for the sphere, (rho, x'') for power surfaces,
w = (x'', x_n) for cylinders.
"""
import math
from typing import Tuple, Union

import numpy as np

from raimipy.consts import (
    AXIS_TOLERANCE,
    OMEGA_VALIDATION_SAMPLES,
    SURFACE_TOLERANCE,
    VALIDATION_STREAM,
)
from raimipy.cover_lang import check_dimension, contains
from raimipy.custom_exceptions import (
    DimensionMismatch,
    DomainViolation,
    FiberMismatch,
    InvalidSurfaceSpec,
    OffSurface,
)
from raimipy.types import (
    IN_N,
    Angle,
    AxisMarker,
    BallVec,
    CylinderSpec,
    FiberPoint,
    OmegaVec,
    PowerSpec,
    RhoX,
    SphereSpec,
    SurfaceSpec,
    fiber_to_array,
)
from raimipy.utils import wrap_turns

TWO_PI = 2 * math.pi


def angle_of(points: np.ndarray) -> np.ndarray:
    "Polar angle of (x1, x2) in turns, in [0, 1)"
    points = np.atleast_2d(points)
    return wrap_turns(np.arctan2(points[:, 1], points[:, 0]) / TWO_PI)


def axis_mask(points: np.ndarray) -> np.ndarray:
    "True for rows on the rotation axis N"
    points = np.atleast_2d(points)
    return np.hypot(points[:, 0], points[:, 1]) <= AXIS_TOLERANCE


def rotate_points(points: np.ndarray, alpha: Union[float, np.ndarray]) -> np.ndarray:
    """R_alpha applied to every row. `alpha` is in turns, either a scalar or
    one angle per row. Rows on N are returned unchanged."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    radians = TWO_PI * np.asarray(alpha, dtype=float)
    c = np.cos(radians)
    s = np.sin(radians)
    x1 = points[:, 0]
    x2 = points[:, 1]
    rotated = points.copy()
    rotated[:, 0] = c * x1 - s * x2
    rotated[:, 1] = s * x1 + c * x2
    on_axis = axis_mask(points)
    if on_axis.any():
        rotated[on_axis] = points[on_axis]
    return rotated


def phi_points(spec: SurfaceSpec, theta: np.ndarray, fibers: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    fibers = np.atleast_2d(np.asarray(fibers, dtype=float))
    c = np.cos(TWO_PI * theta)
    s = np.sin(TWO_PI * theta)
    if isinstance(spec, SphereSpec):
        r = np.sqrt(np.maximum(0.0, 1.0 - np.sum(fibers * fibers, axis=1)))
        return np.column_stack([r * c, r * s, fibers])
    elif isinstance(spec, PowerSpec):
        rho = fibers[:, 0]
        xpp = fibers[:, 1:]
        s2 = rho * rho + np.sum(xpp * xpp, axis=1)
        height = s2 ** (spec.k / 2)
        return np.column_stack([rho * c, rho * s, xpp, height])
    elif isinstance(spec, CylinderSpec):
        radius = np.full(fibers.shape[0], spec.R)
        return np.column_stack([radius * c, radius * s, fibers])
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


def fibers_of(spec: SurfaceSpec, points: np.ndarray) -> np.ndarray:
    "Fiber coordinates of surface points (meaningless for rows on N)"
    points = np.atleast_2d(points)
    if isinstance(spec, PowerSpec):
        rho = np.hypot(points[:, 0], points[:, 1])
        return np.column_stack([rho, points[:, 2 : spec.n - 1]])
    return points[:, 2:].copy()


def on_surface_mask(spec: SurfaceSpec, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(spec, SphereSpec):
        return np.abs(np.linalg.norm(points, axis=1) - 1.0) <= SURFACE_TOLERANCE
    elif isinstance(spec, PowerSpec):
        s = np.linalg.norm(points[:, : spec.n - 1], axis=1)
        in_domain = (s > 0) & (s <= spec.R + SURFACE_TOLERANCE)
        return in_domain & (np.abs(points[:, -1] - s**spec.k) <= SURFACE_TOLERANCE)
    elif isinstance(spec, CylinderSpec):
        radius = np.hypot(points[:, 0], points[:, 1])
        on_cylinder = np.abs(radius - spec.R) <= SURFACE_TOLERANCE
        return on_cylinder & omega_mask(spec, points[:, 2:])
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


def omega_mask(spec: CylinderSpec, w: np.ndarray) -> np.ndarray:
    "Membership of w = (x'', x_n) in the cylinder's base set"
    w = np.atleast_2d(w)
    lo = np.asarray(spec.omega_lo) - SURFACE_TOLERANCE
    hi = np.asarray(spec.omega_hi) + SURFACE_TOLERANCE
    in_box = np.all((w >= lo) & (w <= hi), axis=1)
    return in_box & contains(spec.omega, w)


def fiber_domain_mask(spec: SurfaceSpec, fibers: np.ndarray) -> np.ndarray:
    fibers = np.atleast_2d(fibers)
    if isinstance(spec, SphereSpec):
        return np.sum(fibers * fibers, axis=1) < 1.0
    elif isinstance(spec, PowerSpec):
        rho = fibers[:, 0]
        s = np.linalg.norm(fibers, axis=1)
        return (rho > 0) & (s <= spec.R + SURFACE_TOLERANCE)
    elif isinstance(spec, CylinderSpec):
        return omega_mask(spec, fibers)
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


def fiber_from_array(spec: SurfaceSpec, row: np.ndarray) -> FiberPoint:
    values = tuple(float(x) for x in row)
    if isinstance(spec, SphereSpec):
        return BallVec(values)
    elif isinstance(spec, PowerSpec):
        return RhoX(values[0], values[1:])
    elif isinstance(spec, CylinderSpec):
        return OmegaVec(values)
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


_FIBER_TYPES = {SphereSpec: BallVec, PowerSpec: RhoX, CylinderSpec: OmegaVec}


def as_point(spec: SurfaceSpec, p) -> np.ndarray:
    point = np.asarray(p, dtype=float).reshape(-1)
    if point.shape[0] != spec.n:
        raise DimensionMismatch(
            f"Point has {point.shape[0]} coordinates but the surface lives in R^{spec.n}"
        )
    return point


def _require_on_surface(spec: SurfaceSpec, point: np.ndarray):
    if not on_surface_mask(spec, point)[0]:
        raise OffSurface(f"{tuple(point)} is not on the {spec.kind.value} surface")


def on_surface(spec: SurfaceSpec, p) -> bool:
    point = as_point(spec, p)
    return bool(on_surface_mask(spec, point)[0])


def rotate(spec: SurfaceSpec, alpha: Angle, p) -> np.ndarray:
    point = as_point(spec, p)
    _require_on_surface(spec, point)
    return rotate_points(point, alpha.value)[0]


def phi(spec: SurfaceSpec, theta: Angle, y: FiberPoint) -> np.ndarray:
    expected = _FIBER_TYPES[type(spec)]
    if not isinstance(y, expected):
        raise FiberMismatch(
            f"{spec.kind.value} surfaces take {expected.__name__} fibers, got {type(y).__name__}"
        )
    fiber = fiber_to_array(y)
    if fiber.shape[0] != spec.n - 2:
        raise DimensionMismatch(
            f"Fiber has {fiber.shape[0]} coordinates but the surface needs {spec.n - 2}"
        )
    if not np.all(np.isfinite(fiber)) or not fiber_domain_mask(spec, fiber)[0]:
        raise DomainViolation(f"{y} is outside the base space of the {spec.kind.value} surface")
    return phi_points(spec, np.array([theta.value]), fiber[None, :])[0]


def phi_inverse(
    spec: SurfaceSpec, p
) -> Union[Tuple[Angle, FiberPoint], AxisMarker]:
    point = as_point(spec, p)
    _require_on_surface(spec, point)
    if axis_mask(point)[0]:
        return IN_N
    theta = Angle(float(angle_of(point)[0]))
    return theta, fiber_from_array(spec, fibers_of(spec, point)[0])


def surface_extent(spec: SurfaceSpec) -> float:
    "A bound on |x_i| over the whole surface"
    if isinstance(spec, SphereSpec):
        return 1.0
    elif isinstance(spec, PowerSpec):
        return max(spec.R, spec.R**spec.k)
    elif isinstance(spec, CylinderSpec):
        box = max(abs(x) for x in spec.omega_lo + spec.omega_hi)
        return max(spec.R, box)
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


def validate_surface(spec: SurfaceSpec, n_samples: int = OMEGA_VALIDATION_SAMPLES):
    """Checks what the constructors cannot: that a cylinder's omega is an
    expression over R^(n-2) with positive volume inside its bounding box."""
    if not isinstance(spec, CylinderSpec):
        return
    from raimipy.measures import RngStream

    check_dimension(spec.omega, spec.n - 2)
    gen = RngStream(0, VALIDATION_STREAM).generator()
    lo = np.asarray(spec.omega_lo)
    hi = np.asarray(spec.omega_hi)
    w = lo + (hi - lo) * gen.random((n_samples, spec.n - 2))
    if not contains(spec.omega, w).any():
        raise InvalidSurfaceSpec(
            f"Omega has no estimated volume inside its bounding box ({n_samples} samples)"
        )
