"""
Property suites checking the two structural hypotheses the harness relies
on, equivariance of phi and product disintegration of mu, plus the
sampler-level consequences (pushforward consistency, uniform base angle,
rotation invariance).
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from raimipy.consts import DEFAULT_Z
from raimipy.cover_lang import SetExpr, parse, to_text
from raimipy.geometry import (
    angle_of,
    fibers_of,
    on_surface_mask,
    phi_points,
    rotate_points,
    surface_extent,
)
from raimipy.measures import (
    RngStream,
    TestFunction,
    disintegration_check,
    draw_fibers,
    draw_graph_points,
    draw_surface_points,
    estimate_measure,
    estimate_rotated_measure,
    indicator_function,
)
from raimipy.stats import (
    ball_bins,
    chi2_homogeneity_pvalue,
    ks_uniform_pvalue,
    pooled_quantile_bins,
    uniform_ball_by_rejection,
)
from raimipy.types import Angle, CylinderSpec, PowerSpec, SphereSpec, SurfaceSpec
from raimipy.utils import wrap_turns

log = logging.getLogger(__name__)

EQUIVARIANCE_TOLERANCE = 1e-12
ROUND_TRIP_TOLERANCE = 1e-9
DEFAULT_P_MIN = 0.01
ROTATION_ANGLES = (0.1, 0.37, 0.5)
GEOMETRIC_SAMPLE_CAP = 100_000


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    # worst error, smallest p-value or largest z-score, depending on the suite
    statistic: float
    detail: str = ""


def _circular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % 1.0
    return np.minimum(d, 1.0 - d)


def equivariance_suite(spec: SurfaceSpec, n_samples: int, rng: RngStream) -> SuiteResult:
    "max |phi(theta + alpha, y) - R_alpha phi(theta, y)|"
    gen = rng.generator()
    theta = gen.random(n_samples)
    alpha = gen.random(n_samples)
    fibers = draw_fibers(spec, gen, n_samples)
    direct = phi_points(spec, wrap_turns(theta + alpha), fibers)
    rotated = rotate_points(phi_points(spec, theta, fibers), alpha)
    worst = float(np.max(np.abs(direct - rotated)))
    return SuiteResult(
        "equivariance", worst <= EQUIVARIANCE_TOLERANCE, worst, f"{n_samples} samples"
    )


def round_trip_suite(spec: SurfaceSpec, n_samples: int, rng: RngStream) -> SuiteResult:
    "phi_inverse(phi(theta, y)) == (theta, y)"
    gen = rng.generator()
    theta = gen.random(n_samples)
    fibers = draw_fibers(spec, gen, n_samples)
    points = phi_points(spec, theta, fibers)
    angle_error = float(np.max(_circular_distance(angle_of(points), theta)))
    fiber_error = float(np.max(np.abs(fibers_of(spec, points) - fibers)))
    worst = max(angle_error, fiber_error)
    return SuiteResult("round_trip", worst <= ROUND_TRIP_TOLERANCE, worst, f"{n_samples} samples")


def group_law_suite(spec: SurfaceSpec, n_samples: int, rng: RngStream) -> SuiteResult:
    "R_alpha R_beta == R_(alpha + beta), and rotations stay on the surface"
    gen = rng.generator()
    points = draw_surface_points(spec, gen, n_samples)
    alpha = gen.random(n_samples)
    beta = gen.random(n_samples)
    composed = rotate_points(rotate_points(points, beta), alpha)
    combined = rotate_points(points, wrap_turns(alpha + beta))
    worst = float(np.max(np.abs(composed - combined)))
    stays = bool(np.all(on_surface_mask(spec, composed)))
    return SuiteResult(
        "group_law",
        worst <= EQUIVARIANCE_TOLERANCE and stays,
        worst,
        "" if stays else "rotated points left the surface",
    )


def default_test_functions(spec: SurfaceSpec) -> List[TestFunction]:
    """Ten bounded functions: moments, sector indicators and cap indicators"""
    n = spec.n
    extent = surface_extent(spec)
    unit_last = tuple([0.0] * (n - 1) + [1.0])
    unit_first = tuple([1.0] + [0.0] * (n - 1))
    return [
        TestFunction("one", lambda x: np.ones(x.shape[0]), 1.0),
        TestFunction("x_n", lambda x: x[:, -1], extent),
        TestFunction("x_n^2", lambda x: x[:, -1] ** 2, extent**2),
        TestFunction("x_1^2", lambda x: x[:, 0] ** 2, extent**2),
        TestFunction("x_1 x_2", lambda x: x[:, 0] * x[:, 1], extent**2),
        TestFunction("x_2^2 + x_n", lambda x: x[:, 1] ** 2 + x[:, -1], extent**2 + extent),
        indicator_function("sector[0,0.1)", parse("sector[0,0.1)", n)),
        indicator_function("sector[0.25,0.6)", parse("sector[0.25,0.6)", n)),
        indicator_function(
            "cap_last", parse(f"cap[{_vector(unit_last)},{0.5 * extent}]", n)
        ),
        indicator_function(
            "cap_first", parse(f"cap[{_vector(unit_first)},{0.3 * extent}]", n)
        ),
    ]


def _vector(values: Sequence[float]) -> str:
    return "(" + ",".join(repr(v) for v in values) + ")"


def disintegration_suite(
    spec: SurfaceSpec,
    n_samples: int,
    rng: RngStream,
    z: float = DEFAULT_Z,
    test_fns: Optional[Sequence[TestFunction]] = None,
    workers: Optional[int] = None,
) -> SuiteResult:
    """Surface integral vs iterated integral for each test function. Power
    surfaces take the left side from the graph sampler."""
    if test_fns is None:
        test_fns = default_test_functions(spec)
    lhs_sampler = "graph" if isinstance(spec, PowerSpec) else "surface"
    results = disintegration_check(
        spec, test_fns, n_samples, rng, workers=workers, z=z, lhs_sampler=lhs_sampler
    )
    failures = [r.function for r in results if not r.passed]
    worst = 0.0
    for r in results:
        combined = math.sqrt(r.lhs.std_err**2 + r.rhs.std_err**2)
        diff = abs(r.lhs.mean - r.rhs.mean)
        worst = max(worst, diff / combined if combined > 0 else (0.0 if diff == 0 else math.inf))
    return SuiteResult(
        "disintegration",
        not failures,
        worst,
        f"failed: {', '.join(failures)}" if failures else f"{len(results)} functions",
    )


def _reference_points(spec: SurfaceSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    """Surface samples that do not come from the product construction where
    an alternative exists"""
    if isinstance(spec, PowerSpec):
        return draw_graph_points(spec, gen, count)
    return draw_surface_points(spec, gen, count)


def pushforward_suite(
    spec: SurfaceSpec, n_samples: int, rng: RngStream, p_min: float = DEFAULT_P_MIN
) -> SuiteResult:
    "Fibers of surface samples vs direct samples of nu, chi-square over 64 bins"
    from_surface = fibers_of(spec, _reference_points(spec, rng.substream(0).generator(), n_samples))
    direct = draw_fibers(spec, rng.substream(1).generator(), n_samples)
    bins_a, bins_b = pooled_quantile_bins(from_surface, direct)
    pvalue = chi2_homogeneity_pvalue(bins_a, bins_b)
    return SuiteResult("pushforward", pvalue > p_min, pvalue, f"p={pvalue:.4g}")


def angle_uniformity_suite(
    spec: SurfaceSpec, n_samples: int, rng: RngStream, p_min: float = DEFAULT_P_MIN
) -> SuiteResult:
    "KS test of theta(x) for x ~ mu against uniform on [0, 1)"
    points = _reference_points(spec, rng.generator(), n_samples)
    pvalue = ks_uniform_pvalue(angle_of(points))
    return SuiteResult("angle_uniformity", pvalue > p_min, pvalue, f"p={pvalue:.4g}")


def archimedes_suite(
    n: int, n_samples: int, rng: RngStream, p_min: float = DEFAULT_P_MIN
) -> SuiteResult:
    """The last n-2 coordinates of a uniform point on S^(n-1) are uniform on
    the ball B_(n-2); compared with a rejection-sampled ball."""
    projected = draw_surface_points(SphereSpec(n), rng.substream(0).generator(), n_samples)[:, 2:]
    oracle = uniform_ball_by_rejection(rng.substream(1).generator(), n_samples, n - 2)
    if n - 2 == 3:
        bins_a, bins_b = ball_bins(projected), ball_bins(oracle)
    else:
        bins_a, bins_b = pooled_quantile_bins(projected, oracle)
    pvalue = chi2_homogeneity_pvalue(bins_a, bins_b)
    return SuiteResult("archimedes", pvalue > p_min, pvalue, f"p={pvalue:.4g}")


def default_invariance_sets(spec: SurfaceSpec) -> List[SetExpr]:
    n = spec.n
    extent = surface_extent(spec)
    first = _vector([1.0] + [0.0] * (n - 1))
    return [
        parse(f"halfspace[{first},{0.2 * extent}]", n),
        parse("sector[0.1,0.35)", n),
        parse(f"cap[{first},{0.5 * extent}] | band[{n},{-0.5 * extent},{0.1 * extent}]", n),
        parse("digit[3,2,1] & !sector[0.5,0.6)", n),
    ]


def rotation_invariance_suite(
    spec: SurfaceSpec,
    n_samples: int,
    rng: RngStream,
    z: float = DEFAULT_Z,
    sets: Optional[Sequence[SetExpr]] = None,
    alphas: Sequence[float] = ROTATION_ANGLES,
    workers: Optional[int] = None,
) -> SuiteResult:
    "mu(R_alpha A) == mu(A) for every set and angle"
    if sets is None:
        sets = default_invariance_sets(spec)
    worst = 0.0
    failures: List[str] = []
    for set_index, expr in enumerate(sets):
        base = estimate_measure(spec, expr, n_samples, rng.substream(set_index, 0), workers)
        for alpha_index, alpha in enumerate(alphas):
            rotated = estimate_rotated_measure(
                spec, expr, Angle(alpha), n_samples, rng.substream(set_index, alpha_index + 1), workers
            )
            combined = math.sqrt(base.std_err**2 + rotated.std_err**2)
            diff = abs(base.mean - rotated.mean)
            if combined > 0:
                worst = max(worst, diff / combined)
            if not base.agrees_with(rotated, z):
                failures.append(f"{to_text(expr)} at alpha={alpha}")
    return SuiteResult(
        "rotation_invariance",
        not failures,
        worst,
        "failed: " + "; ".join(failures) if failures else f"{len(sets) * len(alphas)} triples",
    )


def run_all(
    spec: SurfaceSpec,
    n_samples: int,
    rng: RngStream,
    z: float = DEFAULT_Z,
    p_min: float = DEFAULT_P_MIN,
    workers: Optional[int] = None,
) -> List[SuiteResult]:
    """Every suite for one surface. The pointwise identity suites, the
    pushforward comparison and rotation invariance use at most
    `GEOMETRIC_SAMPLE_CAP` points; disintegration, angle uniformity and the
    Archimedes check use all `n_samples`."""
    geometric = min(n_samples, GEOMETRIC_SAMPLE_CAP)
    results = [
        equivariance_suite(spec, geometric, rng.substream(0)),
        round_trip_suite(spec, geometric, rng.substream(1)),
        group_law_suite(spec, geometric, rng.substream(2)),
        disintegration_suite(spec, n_samples, rng.substream(3), z, workers=workers),
        # compared against an interpolated radial CDF on power surfaces
        pushforward_suite(spec, geometric, rng.substream(4), p_min),
        angle_uniformity_suite(spec, n_samples, rng.substream(5), p_min),
        rotation_invariance_suite(spec, geometric, rng.substream(6), z, workers=workers),
    ]
    if isinstance(spec, SphereSpec) and spec.n >= 4:
        results.append(archimedes_suite(spec.n, n_samples, rng.substream(7), p_min))
    for result in results:
        log.info("%s on %s: passed=%s (%s)", result.name, spec.kind.value, result.passed, result.detail)
    return results


def describe(spec: SurfaceSpec) -> str:
    if isinstance(spec, SphereSpec):
        return f"sphere n={spec.n}"
    elif isinstance(spec, PowerSpec):
        return f"power n={spec.n} k={spec.k} R={spec.R}"
    elif isinstance(spec, CylinderSpec):
        return f"cylinder n={spec.n} R={spec.R} omega={to_text(spec.omega)}"
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")
