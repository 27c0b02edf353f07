"""
Runs the rotation argument numerically for one cover and one lifted
partition:

1. slice table: nu(A_m(theta_g)) on a grid of G base angles,
2. index function m(theta): the smallest m whose slice has mass >= 1/t,
3. rotation search over (m, theta0) using the one-dimensional reduction
   mu(R_theta0 F_m & E_i^X) = integral over E_i^C of nu(A_m(theta - theta0)),
4. a certificate re-estimated by sampling the surface directly, and an audit
   of the 1/t lower bound.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from raimipy.circle_partition import PartitionHandle
from raimipy.consts import (
    CERTIFY_STREAM,
    COVER_STREAM,
    DEFAULT_CERTIFY_SAMPLES,
    DEFAULT_GRID,
    DEFAULT_HALVINGS,
    DEFAULT_SAMPLES_PER_CELL,
    DEFAULT_VALIDATE_SAMPLES,
    DEFAULT_Z,
    REPORT_SCHEMA_VERSION,
    SLICE_BLOCK_CELLS,
    SLICE_STREAM,
)
from raimipy.cover_lang import CoverSpec, contains, is_cover_valid, validate_cover
from raimipy.custom_exceptions import InvalidCover
from raimipy.geometry import phi_points
from raimipy.measures import (
    MeanEstimate,
    MeasureEstimate,
    RngStream,
    draw_fibers,
    estimate_rotated_intersections,
)
from raimipy.types import (
    Angle,
    AuditEntryDict,
    Outcome,
    ProvenanceDict,
    VerificationReportDict,
)
from raimipy.utils import fract, make_progressbar, ordered_map

log = logging.getLogger(__name__)


@dataclass
class SliceTable:
    """Hit counts of each cover part among the fiber samples of each grid cell.
    Samples are shared by all parts within a cell."""

    theta_grid: np.ndarray
    counts: np.ndarray
    samples_per_cell: int

    @property
    def grid_size(self) -> int:
        return len(self.theta_grid)

    @property
    def t(self) -> int:
        return self.counts.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self.counts / self.samples_per_cell

    @property
    def std_errs(self) -> np.ndarray:
        p = self.means
        return np.sqrt(p * (1 - p) / self.samples_per_cell)

    def value(self, g: int, m: int) -> MeasureEstimate:
        "nu(A_m(theta_g)) with m numbered from 1"
        return MeasureEstimate.from_counts(int(self.counts[g, m - 1]), self.samples_per_cell)

    def to_frame(self) -> pd.DataFrame:
        columns: Dict[str, np.ndarray] = {}
        means = self.means
        std_errs = self.std_errs
        for m in range(self.t):
            columns[f"hits_{m + 1}"] = self.counts[:, m]
            columns[f"mean_{m + 1}"] = means[:, m]
            columns[f"std_err_{m + 1}"] = std_errs[:, m]
        df = pd.DataFrame(columns, index=pd.Index(self.theta_grid, name="theta"))
        return df


@dataclass
class IndexFunction:
    # m(theta_g) in 1..t
    assignment: np.ndarray
    # cells where no part cleared 1/t and the argmax was used instead
    flagged: np.ndarray

    @property
    def flagged_cells(self) -> int:
        return int(np.count_nonzero(self.flagged))

    def level_set(self, m: int) -> np.ndarray:
        "Grid mask of C_m"
        return self.assignment == m


@dataclass(frozen=True)
class SearchConfig:
    halvings: int = DEFAULT_HALVINGS
    certify_samples: int = DEFAULT_CERTIFY_SAMPLES
    z: float = DEFAULT_Z
    # defaults to t
    max_candidates: Optional[int] = None


@dataclass(frozen=True)
class AuditEntry:
    part: int
    lhs: MeasureEstimate
    rhs: float
    passed: bool

    def to_dict(self) -> AuditEntryDict:
        return {
            "part": self.part,
            "lhs": self.lhs.to_dict(),
            "rhs": float(self.rhs),
            "passed": bool(self.passed),
        }


@dataclass(frozen=True)
class Provenance:
    config_hash: Optional[str]
    seed: int
    streams: Dict[str, int] = field(
        default_factory=lambda: {
            "cover": COVER_STREAM,
            "slices": SLICE_STREAM,
            "certify": CERTIFY_STREAM,
        }
    )

    def to_dict(self) -> ProvenanceDict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "streams": dict(self.streams),
        }


@dataclass
class VerificationReport:
    outcome: Outcome
    chosen_m: int
    chosen_theta0: Angle
    objective: float
    intersections: List[MeasureEstimate]
    reduced_intersections: List[MeanEstimate]
    reduction_consistent: List[bool]
    inequality_audit: List[AuditEntry]
    flagged_cells: int
    candidates_tried: int
    provenance: Provenance

    @property
    def certified(self) -> bool:
        return self.outcome == Outcome.CERTIFIED

    @property
    def audit_passed(self) -> bool:
        return all(entry.passed for entry in self.inequality_audit)

    def to_json_dict(self, created_at: str) -> VerificationReportDict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "created_at": created_at,
            "outcome": self.outcome.value,
            "certified": self.certified,
            "chosen_m": self.chosen_m,
            "chosen_theta0": self.chosen_theta0.value,
            "objective": float(self.objective),
            "intersections": [e.to_dict() for e in self.intersections],
            "reduced_intersections": [e.to_dict() for e in self.reduced_intersections],
            "reduction_consistent": [bool(x) for x in self.reduction_consistent],
            "inequality_audit": [e.to_dict() for e in self.inequality_audit],
            "audit_passed": self.audit_passed,
            "flagged_cells": self.flagged_cells,
            "candidates_tried": self.candidates_tried,
            "provenance": self.provenance.to_dict(),
        }


def build_slice_table(
    cover: CoverSpec,
    G: int,
    samples_per_cell: int,
    rng: RngStream,
    workers: Optional[int] = None,
    progress: bool = False,
) -> SliceTable:
    """Estimate nu(A_m(theta_g)) for every grid angle and part by drawing y ~ nu
    and testing phi(theta_g, y) against each part of the enlarged cover. Cells
    are processed in blocks, each with its own substream."""
    spec = cover.surface
    parts = cover.enlarged().evaluation_parts()
    theta_grid = np.arange(G) / G
    block_count = (G + SLICE_BLOCK_CELLS - 1) // SLICE_BLOCK_CELLS

    def work(block: int) -> np.ndarray:
        gen = rng.substream(block).generator()
        start = block * SLICE_BLOCK_CELLS
        stop = min(G, start + SLICE_BLOCK_CELLS)
        counts = np.zeros((stop - start, len(parts)), dtype=np.int64)
        for row, g in enumerate(range(start, stop)):
            fibers = draw_fibers(spec, gen, samples_per_cell)
            points = phi_points(spec, np.full(samples_per_cell, theta_grid[g]), fibers)
            for m, part in enumerate(parts):
                counts[row, m] = np.count_nonzero(contains(part, points))
        return counts

    log.info(
        "Building slice table: %d cells x %d parts, %d samples per cell",
        G,
        len(parts),
        samples_per_cell,
    )
    if progress:
        bar = make_progressbar(block_count, "slices")
        blocks = ordered_map(work, range(block_count), workers, on_result=bar.update)
        bar.finish()
    else:
        blocks = ordered_map(work, range(block_count), workers)
    return SliceTable(theta_grid, np.vstack(blocks), samples_per_cell)


def index_function(table: SliceTable, t: Optional[int] = None) -> IndexFunction:
    """m(theta_g) = smallest m with nu(A_m) >= 1/t. The threshold is compared
    in integers (count * t >= samples) so ties such as 0.5 with t = 2 are
    exact."""
    if t is None:
        t = table.t
    assert t == table.t, f"slice table has {table.t} parts but t={t}"
    clears = table.counts * t >= table.samples_per_cell
    cleared = clears.any(axis=1)
    first = np.argmax(clears, axis=1)
    fallback = np.argmax(table.counts, axis=1)
    assignment = np.where(cleared, first, fallback) + 1
    result = IndexFunction(assignment, ~cleared)
    if result.flagged_cells:
        log.warning(
            "%d of %d cells have no part clearing 1/%d; used the largest part instead. "
            "Consider raising samples_per_cell",
            result.flagged_cells,
            table.grid_size,
            t,
        )
    return result


def _class_matrix(handle: PartitionHandle, G: int) -> np.ndarray:
    "(G, r) indicator of theta_g in E_i^C"
    classes = handle.base.classify_many(np.arange(G) / G)
    return (classes[:, None] == np.arange(1, handle.r + 1)[None, :]).astype(float)


def _shift_index(G: int) -> np.ndarray:
    "shift[j, g] = (g - j) mod G"
    return ((np.arange(G)[None, :] - np.arange(G)[:, None]) % G).astype(np.int32)


def _shifted(values: np.ndarray, theta0: float) -> np.ndarray:
    """values(theta_g - theta0) for all g, by periodic linear interpolation
    between grid cells"""
    G = len(values)
    positions = np.mod(np.arange(G) - theta0 * G, G)
    return np.interp(positions, np.arange(G + 1), np.append(values, values[0]))


def _reduced_at(
    table: SliceTable, classes: np.ndarray, m: int, theta0: float
) -> List[MeanEstimate]:
    G = table.grid_size
    means = _shifted(table.means[:, m - 1], theta0)
    variances = _shifted(table.std_errs[:, m - 1] ** 2, theta0)
    totals = classes.T @ means / G
    variance_totals = classes.T @ variances / (G * G)
    n = G * table.samples_per_cell
    return [
        MeanEstimate(float(mean), math.sqrt(max(0.0, float(v))), n)
        for mean, v in zip(totals, variance_totals)
    ]


def _objective_at(means_m: np.ndarray, classes: np.ndarray, theta0: float) -> float:
    return float(np.min(classes.T @ _shifted(means_m, theta0)) / len(means_m))


def _grid_intersections(
    means_m: np.ndarray, classes: np.ndarray, shift: np.ndarray
) -> np.ndarray:
    "(G, r): reduced mu(R_{j/G} F_m & E_i^X) for every grid shift j"
    return means_m[shift] @ classes / len(means_m)


def objective_curves(table: SliceTable, handle: PartitionHandle) -> pd.DataFrame:
    """J(m, theta0) = min_i of the reduced intersections, for every part m and
    grid angle theta0, in long format."""
    G = table.grid_size
    classes = _class_matrix(handle, G)
    shift = _shift_index(G)
    frames = []
    for m in range(1, table.t + 1):
        intersections = _grid_intersections(table.means[:, m - 1], classes, shift)
        df = pd.DataFrame(
            intersections,
            columns=[f"intersection_{i + 1}" for i in range(handle.r)],
        )
        df.insert(0, "m", m)
        df.insert(1, "theta0", table.theta_grid)
        df.insert(2, "objective", intersections.min(axis=1))
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


@dataclass(frozen=True)
class _Candidate:
    m: int
    theta0: float
    objective: float


def _refine(means_m: np.ndarray, classes: np.ndarray, j: int, halvings: int) -> Tuple[float, float]:
    "Bisection around grid cell j, moving only on strict improvement"
    G = len(means_m)
    center = j / G
    best = _objective_at(means_m, classes, center)
    step = 1 / (2 * G)
    for _ in range(halvings):
        left = fract(center - step)
        right = fract(center + step)
        left_value = _objective_at(means_m, classes, left)
        right_value = _objective_at(means_m, classes, right)
        if left_value >= right_value and left_value > best:
            center, best = left, left_value
        elif right_value > best:
            center, best = right, right_value
        step /= 2
    return center, best


def _search_candidates(
    table: SliceTable, classes: np.ndarray, halvings: int
) -> List[_Candidate]:
    shift = _shift_index(table.grid_size)
    candidates = []
    for m in range(1, table.t + 1):
        means_m = table.means[:, m - 1]
        objective = _grid_intersections(means_m, classes, shift).min(axis=1)
        j = int(np.argmax(objective))
        theta0, value = _refine(means_m, classes, j, halvings)
        log.debug("m=%d: best grid theta0=%.6f (J=%.6f), refined to %.6f (J=%.6f)",
                  m, j / table.grid_size, objective[j], theta0, value)
        candidates.append(_Candidate(m, theta0, value))
    # stable, so ties keep the smaller m
    return sorted(candidates, key=lambda c: -c.objective)


def _audit(
    idx: IndexFunction,
    classes: np.ndarray,
    m: int,
    theta0: float,
    intersections: List[MeasureEstimate],
    t: int,
    z: float,
) -> List[AuditEntry]:
    """Checks mu(R_theta0 F_m & E_i^X) >= (1/t) mu_1(R_theta0 C_m & E_i^C),
    the right side counted on the grid at the nearest cell. Allowed slack is
    z standard errors plus one grid cell."""
    G = len(idx.assignment)
    j0 = int(round(theta0 * G)) % G
    rotated_c = np.roll(idx.assignment, j0) == m
    entries = []
    for i, lhs in enumerate(intersections):
        rhs = float(np.count_nonzero(rotated_c & (classes[:, i] > 0))) / G / t
        passed = rhs == 0 or lhs.mean >= rhs - z * lhs.std_err - 1 / G
        entries.append(AuditEntry(i + 1, lhs, rhs, passed))
    return entries


def rotation_search(
    cover: CoverSpec,
    handle: PartitionHandle,
    table: SliceTable,
    idx: IndexFunction,
    search_cfg: SearchConfig,
    rng: RngStream,
    workers: Optional[int] = None,
    config_hash: Optional[str] = None,
) -> VerificationReport:
    """
    Ranks the best refined theta0 of every part by the reduced objective and
    certifies candidates in that order by sampling the surface directly. The
    first candidate whose r intersections are all significantly positive is
    reported; otherwise the best-ranked one is, with an outcome saying
    whether the reduction or the direct sampling fell short.
    """
    t = cover.t
    assert table.t == t, "slice table was built for a different cover"
    z = search_cfg.z
    parts = cover.enlarged().evaluation_parts()
    classes = _class_matrix(handle, table.grid_size)
    ranked = _search_candidates(table, classes, search_cfg.halvings)
    max_candidates = search_cfg.max_candidates or t

    chosen: Optional[Tuple[_Candidate, List[MeasureEstimate]]] = None
    first_tried: Optional[Tuple[_Candidate, List[MeasureEstimate]]] = None
    tried = 0
    for index, candidate in enumerate(ranked[:max_candidates]):
        tried += 1
        direct = estimate_rotated_intersections(
            cover.surface,
            parts[candidate.m - 1],
            Angle(candidate.theta0),
            handle,
            search_cfg.certify_samples,
            rng.substream(index),
            workers,
        )
        log.info(
            "Candidate %d: m=%d theta0=%.6f J=%.6f, direct minimum %.6f",
            index + 1,
            candidate.m,
            candidate.theta0,
            candidate.objective,
            min(e.mean for e in direct),
        )
        if first_tried is None:
            first_tried = (candidate, direct)
        if all(e.is_positive(z) for e in direct):
            chosen = (candidate, direct)
            break

    assert first_tried is not None
    if chosen is not None:
        outcome = Outcome.CERTIFIED
        candidate, direct = chosen
    else:
        candidate, direct = first_tried
        best_reduced = _reduced_at(table, classes, candidate.m, candidate.theta0)
        if all(e.is_positive(z) for e in best_reduced):
            outcome = Outcome.SAMPLING_TOO_NOISY
        else:
            outcome = Outcome.SEARCH_EXHAUSTED
        log.warning("No candidate certified (%s)", outcome.value)

    reduced = _reduced_at(table, classes, candidate.m, candidate.theta0)
    consistent = [
        d.agrees_with(r, z, slack=t / table.grid_size) for d, r in zip(direct, reduced)
    ]
    audit = _audit(idx, classes, candidate.m, candidate.theta0, direct, t, z)
    return VerificationReport(
        outcome=outcome,
        chosen_m=candidate.m,
        chosen_theta0=Angle(candidate.theta0),
        objective=candidate.objective,
        intersections=direct,
        reduced_intersections=reduced,
        reduction_consistent=consistent,
        inequality_audit=audit,
        flagged_cells=idx.flagged_cells,
        candidates_tried=tried,
        provenance=Provenance(config_hash, rng.seed),
    )


@dataclass
class PipelineResult:
    uncovered: MeasureEstimate
    table: SliceTable
    index: IndexFunction
    report: VerificationReport


def run_pipeline(
    cover: CoverSpec,
    handle: PartitionHandle,
    seed: int,
    grid: int = DEFAULT_GRID,
    samples_per_cell: int = DEFAULT_SAMPLES_PER_CELL,
    validate_samples: int = DEFAULT_VALIDATE_SAMPLES,
    search_cfg: SearchConfig = SearchConfig(),
    config_hash: Optional[str] = None,
    table: Optional[SliceTable] = None,
    uncovered: Optional[MeasureEstimate] = None,
    workers: Optional[int] = None,
    progress: bool = False,
) -> PipelineResult:
    """validate cover -> slice table -> index function -> rotation search.
    A precomputed `table` (from the cache) skips the slice stage, and the
    `uncovered` estimate of a caller that already validated the cover skips
    validation."""
    assert handle.spec == cover.surface, "partition and cover are on different surfaces"
    if uncovered is None:
        uncovered = validate_cover(cover, validate_samples, RngStream(seed, COVER_STREAM), workers)
    if not is_cover_valid(uncovered, search_cfg.z):
        raise InvalidCover(uncovered.mean, uncovered.std_err)
    if table is None:
        table = build_slice_table(
            cover, grid, samples_per_cell, RngStream(seed, SLICE_STREAM), workers, progress
        )
    idx = index_function(table, cover.t)
    report = rotation_search(
        cover,
        handle,
        table,
        idx,
        search_cfg,
        RngStream(seed, CERTIFY_STREAM),
        workers,
        config_hash,
    )
    return PipelineResult(uncovered, table, idx, report)
