import hashlib
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import progressbar

from raimipy.consts import THREADS_ENV_VAR

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def fract(value: float) -> float:
    """Fractional part in [0, 1). Values that round up to 1.0 wrap to 0.0."""
    result = value - math.floor(value)
    if result >= 1.0:
        return 0.0
    return result


def wrap_turns(values: np.ndarray) -> np.ndarray:
    "Vectorized `fract`"
    result = np.mod(np.asarray(values, dtype=float), 1.0)
    return np.where(result >= 1.0, 0.0, result)


def get_worker_count(requested: Optional[int] = None) -> int:
    """Number of estimation workers: `requested` if given, otherwise the cpu
    count, in both cases capped by the RAIMI_THREADS environment variable."""
    count = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV_VAR)
    if cap is not None:
        try:
            count = min(count, int(cap))
        except ValueError:
            log.warning("Ignoring non-integer %s=%r", THREADS_ENV_VAR, cap)
    return max(1, count)


def ordered_map(
    func: Callable[[T], R],
    items: Iterable[T],
    workers: Optional[int] = None,
    on_result: Optional[Callable[[int], None]] = None,
) -> List[R]:
    """Apply `func` to each item on a thread pool and return results in input
    order. Work items must not share mutable state. `on_result` is called on
    the calling thread with the number of results collected so far."""
    items = list(items)
    worker_count = min(get_worker_count(workers), max(1, len(items)))
    results: List[R] = []
    if worker_count == 1:
        for item in items:
            results.append(func(item))
            if on_result is not None:
                on_result(len(results))
        return results
    with ThreadPoolExecutor(max_workers=worker_count) as executor:
        for result in executor.map(func, items):
            results.append(result)
            if on_result is not None:
                on_result(len(results))
    return results


def combine_partial_sums(partials: Sequence[np.ndarray]) -> np.ndarray:
    """Reduce per-chunk partial sums in chunk order with compensated summation,
    so the result does not depend on how the chunks were scheduled."""
    stacked = np.atleast_2d(np.asarray(partials, dtype=float))
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])


def split_into_chunks(total: int, chunk_size: int) -> List[int]:
    assert total > 0, "expected a positive number of samples"
    sizes = [chunk_size] * (total // chunk_size)
    if total % chunk_size:
        sizes.append(total % chunk_size)
    return sizes


def get_file_hash(file_name: str) -> str:
    """Returns the sha256 hash for a file."""
    sha256 = hashlib.sha256()
    with open(file_name, "rb") as fd:
        while True:
            buffer = fd.read(1024 * 1024)
            if len(buffer) == 0:
                break
            sha256.update(buffer)
    return sha256.hexdigest()


def parse_float_list(text: str) -> Tuple[float, ...]:
    "Parse a comma separated list of numbers such as '0, 1.5, -2'"
    parts = [part.strip() for part in text.split(",")]
    if any(part == "" for part in parts):
        raise ValueError(f"{text!r} is not a comma separated list of numbers")
    return tuple(float(part) for part in parts)


def base_digits(theta: np.ndarray, base: int, count: int) -> np.ndarray:
    """Digits d_1..d_count of theta in [0, 1) written in `base`, as an
    (len(theta), count) integer array. Expansion is done by repeated
    multiplication in float arithmetic. In a power-of-two base that is exact,
    so the digits after the last bit of the double are zeros (past position
    53 for theta >= 0.5). In any other base the digits past the precision of
    a double come from rounding in the multiplications rather than from
    theta, though they are still a deterministic function of the input."""
    frac = np.array(theta, dtype=float, copy=True).reshape(-1)
    digits = np.zeros((frac.shape[0], count), dtype=np.int64)
    for position in range(count):
        frac = frac * base
        digit = np.floor(frac)
        # guard against rounding pushing a digit to `base`
        digit = np.minimum(digit, base - 1)
        digits[:, position] = digit
        frac = frac - digit
    return digits


def make_progressbar(max_value: int, label: str) -> progressbar.ProgressBar:
    widgets = [
        f"{label} ",
        progressbar.Bar(left="[", right="]"),
        progressbar.Percentage(),
        " | ",
        progressbar.SimpleProgress(),
        " | ",
        progressbar.ETA(),
    ]
    return progressbar.ProgressBar(max_value=max_value, widgets=widgets)
