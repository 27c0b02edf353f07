"""
Candidate partitions {E_i^C} of the base circle and their lifts
E_i^X = phi(E_i^C x Y) to a surface, with the axis N adjoined to class 1.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from raimipy.consts import MAX_DIGITS, PARTITION_VALIDATION_SAMPLES, VALIDATION_STREAM
from raimipy.cover_lang import SetExpr, TrueSet, check_dimension, contains, to_text
from raimipy.custom_exceptions import InvalidPartition, OffSurface
from raimipy.geometry import angle_of, as_point, axis_mask, on_surface_mask
from raimipy.measures import (
    MeasureEstimate,
    RngStream,
    estimate_base_masses,
    estimate_rotated_intersections,
)
from raimipy.types import Angle, SurfaceSpec
from raimipy.utils import base_digits, ordered_map

log = logging.getLogger(__name__)


class BasePartition(ABC):
    r: int

    @abstractmethod
    def classify_many(self, theta: np.ndarray) -> np.ndarray:
        "Class index in 1..r for each angle (in turns)"
        raise NotImplementedError()

    @property
    @abstractmethod
    def scheme(self) -> str:
        raise NotImplementedError()

    @abstractmethod
    def parameters(self) -> Dict[str, Any]:
        raise NotImplementedError()

    def _check_r(self):
        if self.r < 2:
            raise InvalidPartition(f"A partition needs r >= 2 classes, got {self.r}")


@dataclass(frozen=True)
class Intervals(BasePartition):
    "E_i^C = [(i-1)/r, i/r)"
    r: int

    def __post_init__(self):
        self._check_r()

    @property
    def scheme(self) -> str:
        return "intervals"

    def parameters(self) -> Dict[str, Any]:
        return {"r": self.r}

    def classify_many(self, theta: np.ndarray) -> np.ndarray:
        cells = np.floor(np.asarray(theta, dtype=float) * self.r).astype(np.int64)
        return np.minimum(cells, self.r - 1) + 1


@dataclass(frozen=True)
class DigitBlocks(BasePartition):
    """
    Reads the base-`base` digits of theta at `positions` and classifies by
    the first of them that is nonzero: class (d mod r) + 1, or class 1 when
    all listed digits vanish.
    """

    r: int
    base: int
    positions: Tuple[int, ...]

    def __post_init__(self):
        self._check_r()
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if self.base < 2:
            raise InvalidPartition(f"digit base must be at least 2, got {self.base}")
        if len(self.positions) == 0:
            raise InvalidPartition("digit_blocks needs at least one position")
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise InvalidPartition(f"positions must be strictly increasing: {self.positions}")
        if self.positions[0] < 1 or self.positions[-1] > MAX_DIGITS:
            raise InvalidPartition(f"positions must lie in 1..{MAX_DIGITS}")

    @property
    def scheme(self) -> str:
        return "digit_blocks"

    def parameters(self) -> Dict[str, Any]:
        return {"r": self.r, "base": self.base, "positions": list(self.positions)}

    def classify_many(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        digits = base_digits(theta, self.base, self.positions[-1])
        listed = digits[:, np.asarray(self.positions) - 1]
        # digits before the first nonzero one are zero, so the running sum
        # up to it is that digit itself
        running = np.cumsum(listed, axis=1)
        nonzero = listed != 0
        first = np.argmax(nonzero, axis=1)
        chosen = running[np.arange(len(theta)), first]
        return np.where(nonzero.any(axis=1), chosen % self.r + 1, 1)


@dataclass(frozen=True)
class Custom(BasePartition):
    """
    Class i (i < r) is the set of angles whose point on the unit circle in R^2
    satisfies expression i, taking the first match; unmatched angles are
    class r.
    """

    r: int
    exprs: Tuple[SetExpr, ...]

    def __post_init__(self):
        self._check_r()
        object.__setattr__(self, "exprs", tuple(self.exprs))
        if not 1 <= len(self.exprs) <= self.r:
            raise InvalidPartition(
                f"custom partitions take between 1 and r={self.r} expressions, got {len(self.exprs)}"
            )
        for expr in self.exprs:
            check_dimension(expr, 2)

    @property
    def scheme(self) -> str:
        return "custom"

    def parameters(self) -> Dict[str, Any]:
        return {"r": self.r, "classes": [to_text(e) for e in self.exprs]}

    def classify_many(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        radians = 2 * np.pi * theta
        embedded = np.column_stack([np.cos(radians), np.sin(radians)])
        result = np.full(len(theta), self.r, dtype=np.int64)
        for index in reversed(range(len(self.exprs))):
            result[contains(self.exprs[index], embedded)] = index + 1
        return result


def make_partition(
    r: int,
    scheme: str,
    validate: bool = True,
    n_samples: int = PARTITION_VALIDATION_SAMPLES,
    workers: Optional[int] = None,
    **params,
) -> BasePartition:
    """Construct a base partition by scheme name and, unless told otherwise,
    check that every class has positive estimated measure."""
    if scheme == "intervals":
        base: BasePartition = Intervals(r)
    elif scheme == "digit_blocks":
        base = DigitBlocks(r, int(params["base"]), tuple(params["positions"]))
    elif scheme == "custom":
        base = Custom(r, tuple(params["exprs"]))
    else:
        raise InvalidPartition(
            f"Unknown partition scheme {scheme!r}; expected intervals, digit_blocks or custom"
        )
    if validate:
        masses = estimate_base_masses(
            base, n_samples, RngStream(0, VALIDATION_STREAM), workers=workers
        )
        empty = [i + 1 for i, mass in enumerate(masses) if mass.mean <= 0]
        if empty:
            raise InvalidPartition(
                f"Classes {empty} of the {scheme} partition have no estimated mass ({n_samples} samples)"
            )
    return base


def classify(base: BasePartition, theta: Angle) -> int:
    return int(base.classify_many(np.array([theta.value]))[0])


@dataclass(frozen=True)
class PartitionHandle:
    "The lift of a base partition to a surface"
    spec: SurfaceSpec
    base: BasePartition

    @property
    def r(self) -> int:
        return self.base.r

    def classify_points(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        classes = self.base.classify_many(angle_of(points))
        return np.where(axis_mask(points), 1, classes)


def classify_surface(handle: PartitionHandle, p) -> int:
    point = as_point(handle.spec, p)
    if not on_surface_mask(handle.spec, point)[0]:
        raise OffSurface(f"{tuple(point)} is not on the {handle.spec.kind.value} surface")
    return int(handle.classify_points(point)[0])


def classify_surface_many(handle: PartitionHandle, points: np.ndarray) -> np.ndarray:
    return handle.classify_points(points)


def partition_masses(
    handle: PartitionHandle,
    n_samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> List[MeasureEstimate]:
    "mu(E_i^X) for i = 1..r"
    return estimate_rotated_intersections(
        handle.spec, TrueSet(), Angle(0.0), handle, n_samples, rng, workers
    )


@dataclass
class ScalePresence:
    depth: int
    # (2**depth, r) class counts, one row per dyadic interval
    counts: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.counts > 0))

    @property
    def missing(self) -> List[Tuple[int, int]]:
        "(interval index, class) pairs that were never hit"
        rows, cols = np.nonzero(self.counts == 0)
        return [(int(row), int(col) + 1) for row, col in zip(rows, cols)]

    def to_frame(self) -> pd.DataFrame:
        intervals = self.counts.shape[0]
        df = pd.DataFrame(
            self.counts,
            columns=[f"class_{i + 1}" for i in range(self.counts.shape[1])],
        )
        df.insert(0, "lo", np.arange(intervals) / intervals)
        df.insert(1, "hi", np.arange(1, intervals + 1) / intervals)
        return df


def scale_presence(
    base: BasePartition,
    depth: int,
    samples_per_interval: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> ScalePresence:
    """Counts the classes hit inside every dyadic interval of length
    2**-depth. Every class present in every such interval implies the same
    for all coarser dyadic intervals."""
    intervals = 1 << depth

    def work(index: int) -> np.ndarray:
        gen = rng.substream(index).generator()
        theta = (index + gen.random(samples_per_interval)) / intervals
        return np.bincount(base.classify_many(theta), minlength=base.r + 1)[1:]

    counts = np.vstack(ordered_map(work, range(intervals), workers))
    result = ScalePresence(depth, counts)
    if not result.passed:
        log.warning("%d (interval, class) pairs missing at depth %d", len(result.missing), depth)
    return result
