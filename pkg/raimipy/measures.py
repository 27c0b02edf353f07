"""
Samplers for the normalized surface measure mu, the base measure mu_1 on C
and the fiber measure nu, plus Monte Carlo estimators built on them.

Every estimator splits its sample count into fixed-size chunks. Chunk `i`
draws from `rng.substream(i)` and partial sums are reduced in chunk order,
so results depend only on (seed, stream_id, n_samples), never on the number
of workers.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from typing_extensions import Literal

from raimipy.consts import (
    DEFAULT_Z,
    RADIAL_TABLE_NODES,
    REJECTION_BUDGET,
    SAMPLE_CHUNK_SIZE,
)
from raimipy.cover_lang import SetExpr, contains, fold_constants
from raimipy.custom_exceptions import RejectionBudgetExceeded, UnboundedFunction
from raimipy.geometry import (
    fiber_from_array,
    omega_mask,
    phi_points,
    rotate_points,
)
from raimipy.types import (
    Angle,
    CylinderSpec,
    FiberPoint,
    MeasureEstimateDict,
    PowerSpec,
    SphereSpec,
    SurfaceSpec,
)
from raimipy.utils import combine_partial_sums, ordered_map, split_into_chunks

log = logging.getLogger(__name__)

UINT64_LIMIT = 1 << 64


@dataclass(frozen=True)
class RngStream:
    """
    A named, reproducible source of random numbers. `substream` derives
    independent children, so a stream can be split among chunks, cells or
    candidates without the pieces overlapping.
    """

    seed: int
    stream_id: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        for value in (self.seed, self.stream_id) + tuple(self.path):
            if not 0 <= int(value) < UINT64_LIMIT:
                raise ValueError(f"Seeds and stream ids must be unsigned 64-bit integers, got {value}")

    def substream(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            self.seed, spawn_key=(self.stream_id,) + self.path
        )
        return np.random.Generator(np.random.PCG64(sequence))


@dataclass(frozen=True)
class MeanEstimate:
    "A Monte Carlo mean with its CLT standard error"
    mean: float
    std_err: float
    n_samples: int

    @classmethod
    def from_sums(cls, total: float, total_sq: float, n_samples: int) -> "MeanEstimate":
        mean = total / n_samples
        if n_samples > 1:
            variance = max(0.0, total_sq / n_samples - mean * mean) * n_samples / (n_samples - 1)
        else:
            variance = 0.0
        return cls(mean, math.sqrt(variance / n_samples), n_samples)

    def agrees_with(self, other: "MeanEstimate", z: float = DEFAULT_Z, slack: float = 0.0) -> bool:
        combined = math.sqrt(self.std_err**2 + other.std_err**2)
        return abs(self.mean - other.mean) <= z * combined + slack

    def is_positive(self, z: float = DEFAULT_Z) -> bool:
        return self.mean > z * self.std_err

    def to_dict(self) -> MeasureEstimateDict:
        return {
            "mean": float(self.mean),
            "std_err": float(self.std_err),
            "n_samples": int(self.n_samples),
        }


@dataclass(frozen=True)
class MeasureEstimate(MeanEstimate):
    "Estimated measure of a set: a Bernoulli mean, so always in [0, 1]"

    @classmethod
    def from_counts(cls, hits: int, n_samples: int) -> "MeasureEstimate":
        assert n_samples > 0, "n_samples must be positive"
        p = hits / n_samples
        return cls(p, math.sqrt(p * (1 - p) / n_samples), n_samples)


# ---- vectorized samplers, each drawing from a numpy Generator


def _uniform_directions(gen: np.random.Generator, count: int, dim: int) -> np.ndarray:
    while True:
        g = gen.standard_normal((count, dim))
        norms = np.linalg.norm(g, axis=1)
        if np.all(norms > 0):
            return g / norms[:, None]


def _uniform_ball(gen: np.random.Generator, count: int, dim: int, radius: float = 1.0) -> np.ndarray:
    directions = _uniform_directions(gen, count, dim)
    radii = radius * gen.random(count) ** (1.0 / dim)
    return directions * radii[:, None]


def _rejection_fill(
    gen: np.random.Generator,
    count: int,
    propose: Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]],
    what: str,
) -> np.ndarray:
    """Collect `count` accepted rows from batches of proposals. Gives up after
    REJECTION_BUDGET proposals in a row are rejected."""
    accepted: List[np.ndarray] = []
    have = 0
    consecutive_failures = 0
    batch = max(count, 64)
    while have < count:
        candidates, keep = propose(gen, batch)
        kept = candidates[keep]
        if kept.shape[0] == 0:
            consecutive_failures += batch
            if consecutive_failures >= REJECTION_BUDGET:
                raise RejectionBudgetExceeded(what, consecutive_failures)
            continue
        consecutive_failures = 0
        accepted.append(kept)
        have += kept.shape[0]
    return np.concatenate(accepted)[:count]


def _area_factor(spec: PowerSpec, s: np.ndarray) -> np.ndarray:
    "sqrt(1 + |grad|x'|^k|^2) = sqrt(1 + k^2 s^(2(k-1)))"
    with np.errstate(divide="ignore", over="ignore"):
        return np.sqrt(1.0 + spec.k**2 * s ** (2 * (spec.k - 1)))


def _power_ball_rejection(spec: PowerSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    """x' with density proportional to the area factor on the (n-1)-ball of
    radius R. Only valid for k >= 1, where the factor is bounded by its value
    at R."""
    ceiling = float(_area_factor(spec, np.array([spec.R]))[0])

    def propose(g: np.random.Generator, batch: int):
        x = _uniform_ball(g, batch, spec.n - 1, spec.R)
        s = np.linalg.norm(x, axis=1)
        keep = g.random(batch) * ceiling < _area_factor(spec, s)
        keep &= np.hypot(x[:, 0], x[:, 1]) > 0
        return x, keep

    return _rejection_fill(gen, count, propose, "the power surface")


@lru_cache(maxsize=32)
def _radial_table(n: int, k: float, R: float) -> Tuple[np.ndarray, np.ndarray]:
    """Tabulated CDF of |x'| for density s^(n-2) * sqrt(1 + k^2 s^(2(k-1)))
    on [0, R]. Nodes are graded towards 0 where the factor blows up."""
    u = np.linspace(0.0, 1.0, RADIAL_TABLE_NODES)
    s = R * u * u
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        density = s ** (n - 2) * np.sqrt(1.0 + k**2 * s ** (2 * (k - 1)))
    density[0] = 0.0
    cdf = cumulative_trapezoid(density, s, initial=0.0)
    return cdf / cdf[-1], s


def _power_radial_inversion(spec: PowerSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    cdf, nodes = _radial_table(spec.n, spec.k, spec.R)

    def propose(g: np.random.Generator, batch: int):
        radii = np.interp(1.0 - g.random(batch), cdf, nodes)
        x = _uniform_directions(g, batch, spec.n - 1) * radii[:, None]
        return x, np.hypot(x[:, 0], x[:, 1]) > 0

    return _rejection_fill(gen, count, propose, "the power surface")


def _power_x_prime(spec: PowerSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    if spec.k >= 1:
        return _power_ball_rejection(spec, gen, count)
    return _power_radial_inversion(spec, gen, count)


def _omega_rejection(spec: CylinderSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    lo = np.asarray(spec.omega_lo)
    hi = np.asarray(spec.omega_hi)

    def propose(g: np.random.Generator, batch: int):
        w = lo + (hi - lo) * g.random((batch, spec.n - 2))
        return w, omega_mask(spec, w)

    return _rejection_fill(gen, count, propose, "omega")


def draw_fibers(spec: SurfaceSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    "(count, n-2) fibers distributed per nu"
    if isinstance(spec, SphereSpec):
        return _uniform_ball(gen, count, spec.n - 2)
    elif isinstance(spec, PowerSpec):
        x = _power_x_prime(spec, gen, count)
        return np.column_stack([np.hypot(x[:, 0], x[:, 1]), x[:, 2:]])
    elif isinstance(spec, CylinderSpec):
        return _omega_rejection(spec, gen, count)
    else:
        raise Exception(f"Unknown surface type: {type(spec)}")


def draw_surface_points(spec: SurfaceSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    "(count, n) points distributed per the normalized surface measure"
    if isinstance(spec, SphereSpec):
        return _uniform_directions(gen, count, spec.n)
    theta = gen.random(count)
    return phi_points(spec, theta, draw_fibers(spec, gen, count))


def draw_graph_points(spec: PowerSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    """Power surface points drawn as a graph over the (n-1)-ball, without going
    through phi. For k < 1 the radius is drawn from the envelope
    s^(n-2) * (1 + k s^(k-1)), a two-component power-law mixture, and thinned
    by the area factor."""
    if spec.k >= 1:
        x = _power_ball_rejection(spec, gen, count)
    else:
        n1 = spec.n - 1
        exponent_b = spec.n - 2 + spec.k
        mass_a = spec.R**n1 / n1
        mass_b = spec.k * spec.R**exponent_b / exponent_b
        weight_a = mass_a / (mass_a + mass_b)

        def propose(g: np.random.Generator, batch: int):
            use_a = g.random(batch) < weight_a
            u = 1.0 - g.random(batch)
            radii = np.where(use_a, spec.R * u ** (1 / n1), spec.R * u ** (1 / exponent_b))
            with np.errstate(divide="ignore", over="ignore"):
                envelope = 1.0 + spec.k * radii ** (spec.k - 1)
            keep = g.random(batch) * envelope < _area_factor(spec, radii)
            x = _uniform_directions(g, batch, n1) * radii[:, None]
            return x, keep & (np.hypot(x[:, 0], x[:, 1]) > 0)

        x = _rejection_fill(gen, count, propose, "the power surface graph")
    height = np.linalg.norm(x, axis=1) ** spec.k
    return np.column_stack([x, height])


# ---- chunked engine


def _chunked(
    total: int,
    rng: RngStream,
    work: Callable[[np.random.Generator, int], np.ndarray],
    workers: Optional[int],
) -> List[np.ndarray]:
    sizes = split_into_chunks(total, SAMPLE_CHUNK_SIZE)

    def run(index: int) -> np.ndarray:
        log.debug("chunk %d of %d (%d samples)", index + 1, len(sizes), sizes[index])
        return work(rng.substream(index).generator(), sizes[index])

    return ordered_map(run, range(len(sizes)), workers)


def _chunked_sums(total, rng, work, workers) -> np.ndarray:
    return combine_partial_sums(_chunked(total, rng, work, workers))


# ---- public samplers


def sample_surface_many(
    spec: SurfaceSpec, n_samples: int, rng: RngStream, workers: Optional[int] = None
) -> np.ndarray:
    return np.concatenate(
        _chunked(n_samples, rng, lambda gen, size: draw_surface_points(spec, gen, size), workers)
    )


def sample_surface(spec: SurfaceSpec, rng: RngStream) -> np.ndarray:
    return sample_surface_many(spec, 1, rng)[0]


def sample_fiber_many(
    spec: SurfaceSpec, n_samples: int, rng: RngStream, workers: Optional[int] = None
) -> np.ndarray:
    return np.concatenate(
        _chunked(n_samples, rng, lambda gen, size: draw_fibers(spec, gen, size), workers)
    )


def sample_fiber(spec: SurfaceSpec, rng: RngStream) -> FiberPoint:
    return fiber_from_array(spec, sample_fiber_many(spec, 1, rng)[0])


def sample_surface_graph(
    spec: PowerSpec, n_samples: int, rng: RngStream, workers: Optional[int] = None
) -> np.ndarray:
    return np.concatenate(
        _chunked(n_samples, rng, lambda gen, size: draw_graph_points(spec, gen, size), workers)
    )


# ---- estimators


def estimate_measure(
    spec: SurfaceSpec,
    set_expr: SetExpr,
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> MeasureEstimate:
    expr = fold_constants(set_expr)

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        points = draw_surface_points(spec, gen, size)
        return np.array([np.count_nonzero(contains(expr, points))])

    hits = _chunked_sums(n_samples, rng, work, workers)[0]
    return MeasureEstimate.from_counts(int(hits), n_samples)


def estimate_rotated_measure(
    spec: SurfaceSpec,
    set_expr: SetExpr,
    alpha: Angle,
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> MeasureEstimate:
    "mu(R_alpha A), using x in R_alpha A <=> R_-alpha x in A"
    expr = fold_constants(set_expr)

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        points = rotate_points(draw_surface_points(spec, gen, size), -alpha.value)
        return np.array([np.count_nonzero(contains(expr, points))])

    hits = _chunked_sums(n_samples, rng, work, workers)[0]
    return MeasureEstimate.from_counts(int(hits), n_samples)


def estimate_rotated_intersections(
    spec: SurfaceSpec,
    set_f: SetExpr,
    theta0: Angle,
    part,
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> List[MeasureEstimate]:
    """mu(R_theta0(F) & E_i^X) for every class i = 1..r of the lifted
    partition `part`, all from one sample set."""
    expr = fold_constants(set_f)
    r = part.r

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        points = draw_surface_points(spec, gen, size)
        in_f = contains(expr, rotate_points(points, -theta0.value))
        classes = part.classify_points(points)
        return np.bincount(classes[in_f], minlength=r + 1)[1:]

    hits = _chunked_sums(n_samples, rng, work, workers)
    return [MeasureEstimate.from_counts(int(h), n_samples) for h in hits]


def estimate_rotated_intersection(
    spec: SurfaceSpec,
    set_f: SetExpr,
    theta0: Angle,
    part,
    i: int,
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> MeasureEstimate:
    if not 1 <= i <= part.r:
        raise ValueError(f"class index {i} is outside 1..{part.r}")
    return estimate_rotated_intersections(spec, set_f, theta0, part, n_samples, rng, workers)[i - 1]


def estimate_base_masses(
    base, n_samples: int, rng: RngStream, workers: Optional[int] = None
) -> List[MeasureEstimate]:
    "mu_1 of each class of a base partition of the circle"

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        return np.bincount(base.classify_many(gen.random(size)), minlength=base.r + 1)[1:]

    hits = _chunked_sums(n_samples, rng, work, workers)
    return [MeasureEstimate.from_counts(int(h), n_samples) for h in hits]


# ---- product disintegration


@dataclass(frozen=True)
class TestFunction:
    """A bounded function of surface points, evaluated on (m, n) arrays"""

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    bound: float

    # not a pytest test class
    __test__ = False

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        values = np.asarray(self.func(points), dtype=float)
        if values.shape == ():
            values = np.full(points.shape[0], float(values))
        worst = float(np.max(np.abs(values))) if values.size else 0.0
        if not worst <= self.bound:
            raise UnboundedFunction(self.name, self.bound, worst)
        return values


def indicator_function(name: str, expr: SetExpr) -> TestFunction:
    return TestFunction(name, lambda points: contains(expr, points).astype(float), 1.0)


@dataclass(frozen=True)
class DisintegrationResult:
    function: str
    lhs: MeanEstimate
    rhs: MeanEstimate
    passed: bool


def _function_sums(test_fns: Sequence[TestFunction], points: np.ndarray) -> np.ndarray:
    sums = []
    for fn in test_fns:
        values = fn.evaluate(points)
        sums.append(float(np.sum(values)))
        sums.append(float(np.sum(values * values)))
    return np.array(sums)


def disintegration_check(
    spec: SurfaceSpec,
    test_fns: Sequence[TestFunction],
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
    z: float = DEFAULT_Z,
    lhs_sampler: Literal["surface", "graph"] = "surface",
) -> List[DisintegrationResult]:
    """
    Compares the integral of each test function under the surface measure
    (lhs) with its iterated integral over uniform theta and nu (rhs). With
    lhs_sampler="graph" the left side of a power surface is drawn by
    `draw_graph_points`, which does not use the product construction.
    """
    if lhs_sampler == "graph":
        if not isinstance(spec, PowerSpec):
            raise ValueError("the graph sampler only exists for power surfaces")
        draw_lhs = lambda gen, size: draw_graph_points(spec, gen, size)
    else:
        draw_lhs = lambda gen, size: draw_surface_points(spec, gen, size)

    def draw_rhs(gen: np.random.Generator, size: int) -> np.ndarray:
        theta = gen.random(size)
        return phi_points(spec, theta, draw_fibers(spec, gen, size))

    lhs_sums = _chunked_sums(
        n_samples, rng.substream(0), lambda gen, size: _function_sums(test_fns, draw_lhs(gen, size)), workers
    )
    rhs_sums = _chunked_sums(
        n_samples, rng.substream(1), lambda gen, size: _function_sums(test_fns, draw_rhs(gen, size)), workers
    )

    results = []
    for index, fn in enumerate(test_fns):
        lhs = MeanEstimate.from_sums(lhs_sums[2 * index], lhs_sums[2 * index + 1], n_samples)
        rhs = MeanEstimate.from_sums(rhs_sums[2 * index], rhs_sums[2 * index + 1], n_samples)
        passed = lhs.agrees_with(rhs, z)
        if not passed:
            log.warning(
                "Disintegration mismatch for %s on %s: %.6f vs %.6f",
                fn.name,
                spec.kind.value,
                lhs.mean,
                rhs.mean,
            )
        results.append(DisintegrationResult(fn.name, lhs, rhs, passed))
    return results
