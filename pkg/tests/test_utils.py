import os
from unittest import mock

import numpy as np
import pytest

from raimipy.utils import (
    base_digits,
    combine_partial_sums,
    fract,
    get_file_hash,
    get_worker_count,
    ordered_map,
    parse_float_list,
    split_into_chunks,
    wrap_turns,
)


@pytest.mark.parametrize(
    "value, expected",
    [(0.25, 0.25), (1.0, 0.0), (-0.25, 0.75), (3.5, 0.5), (-1e-18, 0.0), (0.0, 0.0)],
)
def test_fract(value, expected):
    assert fract(value) == expected


def test_wrap_turns():
    wrapped = wrap_turns(np.array([1.0, -0.25, 2.5, -1e-18]))
    assert list(wrapped) == [0.0, 0.75, 0.5, 0.0]
    assert np.all((wrapped >= 0) & (wrapped < 1))


@pytest.mark.parametrize(
    "requested, env, expected",
    [(4, {}, 4), (4, {"RAIMI_THREADS": "2"}, 2), (1, {"RAIMI_THREADS": "8"}, 1), (0, {}, 1), (3, {"RAIMI_THREADS": "x"}, 3)],
)
def test_get_worker_count(requested, env, expected):
    with mock.patch.dict(os.environ, env, clear=False):
        if "RAIMI_THREADS" not in env:
            os.environ.pop("RAIMI_THREADS", None)
        assert get_worker_count(requested) == expected


@pytest.mark.parametrize("workers", [1, 2, 8])
def test_ordered_map_keeps_order(workers):
    seen = []
    results = ordered_map(lambda x: x * x, range(20), workers, on_result=seen.append)
    assert results == [x * x for x in range(20)]
    assert seen == list(range(1, 21))


def test_combine_partial_sums():
    partials = [np.array([1e16, 1.0]), np.array([1.0, 2.0]), np.array([-1e16, 3.0])]
    assert list(combine_partial_sums(partials)) == [1.0, 6.0]


@pytest.mark.parametrize(
    "total, size, expected",
    [(10, 4, [4, 4, 2]), (8, 4, [4, 4]), (3, 4, [3])],
)
def test_split_into_chunks(total, size, expected):
    assert split_into_chunks(total, size) == expected


def test_parse_float_list():
    assert parse_float_list("0, 1.5,-2") == (0.0, 1.5, -2.0)
    with pytest.raises(ValueError):
        parse_float_list("1,,2")
    with pytest.raises(ValueError):
        parse_float_list("1,a")


def test_base_digits():
    digits = base_digits(np.array([0.0, 0.5, 1 / 3, 0.15]), 3, 3)
    # 0.5 = 0.111... and 0.15 = 0.0110... in base 3
    assert digits.tolist() == [[0, 0, 0], [1, 1, 1], [1, 0, 0], [0, 1, 1]]


def test_base_digits_past_double_precision():
    theta = np.random.default_rng(0).uniform(0.5, 1.0, 1000)
    binary = base_digits(theta, 2, 64)
    assert binary[:, 0].tolist() == [1] * 1000
    assert not binary[:, 53:].any()
    ternary = base_digits(theta, 3, 64)
    assert ternary.min() >= 0 and ternary.max() <= 2
    assert np.array_equal(ternary, base_digits(theta.copy(), 3, 64))


def test_get_file_hash(tmpdir):
    p = tmpdir.join("a.txt")
    p.write("abc")
    assert get_file_hash(str(p)) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
