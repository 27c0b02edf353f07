"""Goodness-of-fit helpers used by the hypothesis suites and the tests."""
from typing import Tuple

import numpy as np
from scipy import stats

BALL_SHELLS = 8
QUANTILE_BINS = 8


def ks_uniform_pvalue(samples: np.ndarray) -> float:
    "KS test of samples in [0, 1) against the uniform distribution"
    return float(stats.kstest(np.asarray(samples), "uniform").pvalue)


def ks_two_sample_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).pvalue)


def ball_bins(points: np.ndarray) -> np.ndarray:
    """64 bins of the unit 3-ball: 8 shells of equal volume times 8 octants"""
    points = np.atleast_2d(points)
    assert points.shape[1] == 3, "ball_bins expects points in R^3"
    radius_cubed = np.sum(points * points, axis=1) ** 1.5
    shell = np.minimum((radius_cubed * BALL_SHELLS).astype(np.int64), BALL_SHELLS - 1)
    octant = (
        (points[:, 0] > 0).astype(np.int64)
        + 2 * (points[:, 1] > 0).astype(np.int64)
        + 4 * (points[:, 2] > 0).astype(np.int64)
    )
    return shell * 8 + octant


def _quantile_edges(pooled: np.ndarray, bins: int) -> np.ndarray:
    return np.quantile(pooled, np.linspace(0, 1, bins + 1)[1:-1])


def pooled_quantile_bins(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bin two samples of vectors into 64 cells with edges taken from the pooled
    sample: 64 quantile bins of the single coordinate when d = 1, otherwise an
    8 x 8 grid over the first and last coordinates.
    """
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    pooled = np.concatenate([a, b])
    if pooled.shape[1] == 1:
        edges = _quantile_edges(pooled[:, 0], QUANTILE_BINS * QUANTILE_BINS)
        return np.searchsorted(edges, a[:, 0]), np.searchsorted(edges, b[:, 0])
    first = _quantile_edges(pooled[:, 0], QUANTILE_BINS)
    last = _quantile_edges(pooled[:, -1], QUANTILE_BINS)

    def binned(x: np.ndarray) -> np.ndarray:
        return np.searchsorted(first, x[:, 0]) * QUANTILE_BINS + np.searchsorted(last, x[:, -1])

    return binned(a), binned(b)


def chi2_homogeneity_pvalue(bins_a: np.ndarray, bins_b: np.ndarray, n_bins: int = 64) -> float:
    """Chi-square test that two binned samples come from the same distribution.
    Bins empty in both samples are dropped."""
    table = np.vstack(
        [np.bincount(bins_a, minlength=n_bins), np.bincount(bins_b, minlength=n_bins)]
    )
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    _, pvalue, _, _ = stats.chi2_contingency(table, correction=False)
    return float(pvalue)


def uniform_ball_by_rejection(gen: np.random.Generator, count: int, dim: int) -> np.ndarray:
    "Uniform points in the unit d-ball by rejection from the cube"
    accepted = []
    have = 0
    while have < count:
        cube = gen.uniform(-1.0, 1.0, size=(2 * count, dim))
        inside = cube[np.sum(cube * cube, axis=1) < 1.0]
        accepted.append(inside)
        have += inside.shape[0]
    return np.concatenate(accepted)[:count]
