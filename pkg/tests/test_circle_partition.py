import numpy as np
import pytest

from raimipy.circle_partition import (
    Custom,
    DigitBlocks,
    Intervals,
    PartitionHandle,
    classify,
    classify_surface,
    classify_surface_many,
    make_partition,
    partition_masses,
    scale_presence,
)
from raimipy.cover_lang import parse
from raimipy.custom_exceptions import InvalidPartition, OffSurface
from raimipy.geometry import angle_of, axis_mask, rotate_points
from raimipy.measures import RngStream, estimate_base_masses, sample_surface_many
from raimipy.types import Angle, CylinderSpec, PowerSpec, SphereSpec
from raimipy.utils import wrap_turns

Z = 4.0

UNIT_CYLINDER = CylinderSpec(3, 1.0, parse("band[1,0,1]", 1), (0.0,), (1.0,))


@pytest.mark.parametrize(
    "base, theta, expected",
    [
        (Intervals(2), 0.3, 1),
        (Intervals(2), 0.5, 2),
        (Intervals(4), 0.99, 4),
        (Intervals(3), 0.0, 1),
        (DigitBlocks(2, 3, (1, 2, 4, 8)), 1 / 3, 2),
        (DigitBlocks(2, 3, (1, 2, 4, 8)), 0.0, 1),
        # 2/3 = 0.2000... in base 3
        (DigitBlocks(2, 3, (1, 2, 4, 8)), 2 / 3, 1),
        # first digit 0, second digit 1
        (DigitBlocks(2, 3, (1, 2)), 0.15, 2),
        (DigitBlocks(3, 4, (1, 2)), 0.3, 2),
        (DigitBlocks(3, 4, (1, 2)), 0.55, 3),
        (DigitBlocks(3, 4, (1, 2)), 0.8, 1),
        (Custom(2, (parse("sector[0,0.3)", 2),)), 0.1, 1),
        (Custom(2, (parse("sector[0,0.3)", 2),)), 0.5, 2),
        (Custom(3, (parse("halfspace[(1,0),0]", 2), parse("halfspace[(0,1),0]", 2))), 0.1, 1),
        (Custom(3, (parse("halfspace[(1,0),0]", 2), parse("halfspace[(0,1),0]", 2))), 0.4, 2),
        (Custom(3, (parse("halfspace[(1,0),0]", 2), parse("halfspace[(0,1),0]", 2))), 0.6, 3),
    ],
)
def test_classify(base, theta, expected):
    assert classify(base, Angle(theta)) == expected


def test_classify_many_returns_valid_classes():
    theta = np.random.default_rng(0).random(10_000)
    for base in (Intervals(5), DigitBlocks(3, 4, (2, 5, 9)), Custom(2, (parse("sector[0.2,0.9)", 2),))):
        classes = base.classify_many(theta)
        assert classes.min() >= 1 and classes.max() <= base.r


@pytest.mark.parametrize(
    "spec, p, expected",
    [
        (SphereSpec(3), (0, 0, 1), 1),
        (SphereSpec(3), (0, 0, -1), 1),
        (SphereSpec(3), (0, -1, 0), 2),
        (SphereSpec(3), (0.6, 0.8, 0), 1),
        (PowerSpec(3, 2.0, 1.0), (-0.5, 0, 0.25), 2),
        (UNIT_CYLINDER, (1, 0, 0.5), 1),
    ],
)
def test_classify_surface(spec, p, expected):
    assert classify_surface(PartitionHandle(spec, Intervals(2)), p) == expected


def test_classify_surface_rejects_points_off_surface():
    with pytest.raises(OffSurface):
        classify_surface(PartitionHandle(SphereSpec(3), Intervals(2)), (1, 1, 1))


def test_lift_commutes_with_rotation():
    spec = SphereSpec(4)
    handle = PartitionHandle(spec, DigitBlocks(2, 3, (1, 2, 3)))
    points = sample_surface_many(spec, 10_000, RngStream(0, 0))
    assert not axis_mask(points).any()
    alpha = 0.37
    lifted = classify_surface_many(handle, rotate_points(points, alpha))
    expected = handle.base.classify_many(wrap_turns(angle_of(points) + alpha))
    assert np.array_equal(lifted, expected)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(r=2, scheme="sectors"),
        dict(r=1, scheme="intervals"),
        dict(r=2, scheme="digit_blocks", base=1, positions=(1,)),
        dict(r=2, scheme="digit_blocks", base=3, positions=(2, 1)),
        dict(r=2, scheme="digit_blocks", base=3, positions=()),
        dict(r=2, scheme="digit_blocks", base=3, positions=(65,)),
        dict(r=2, scheme="custom", exprs=()),
        # classes 2 and 3 are empty
        dict(r=3, scheme="custom", exprs=(parse("TRUE", 2),)),
    ],
)
def test_invalid_partitions(kwargs):
    with pytest.raises(InvalidPartition):
        make_partition(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(r=3, scheme="intervals"),
        dict(r=2, scheme="digit_blocks", base=3, positions=(8, 9, 10, 11, 12)),
        dict(r=3, scheme="digit_blocks", base=4, positions=(1, 2)),
        dict(r=2, scheme="custom", exprs=(parse("halfspace[(1,0),0]", 2),)),
    ],
)
def test_valid_partitions(kwargs):
    base = make_partition(**kwargs)
    assert base.r == kwargs["r"]
    assert base.scheme == kwargs["scheme"]
    assert base.parameters()["r"] == kwargs["r"]


@pytest.mark.parametrize("r", [2, 3, 5])
def test_interval_masses_on_surface(r):
    handle = PartitionHandle(PowerSpec(3, 2.0, 1.0), Intervals(r))
    masses = partition_masses(handle, 100_000, RngStream(1, 4))
    assert len(masses) == r
    for mass in masses:
        assert abs(mass.mean - 1 / r) <= Z * mass.std_err
    assert sum(mass.mean for mass in masses) == pytest.approx(1.0, abs=1e-12)


def test_lifted_masses_match_base_masses():
    base = DigitBlocks(2, 3, (1, 2, 3))
    lifted = partition_masses(PartitionHandle(UNIT_CYLINDER, base), 100_000, RngStream(2, 4))
    direct = estimate_base_masses(base, 100_000, RngStream(2, 5))
    for a, b in zip(lifted, direct):
        assert a.agrees_with(b, Z)


def test_scale_presence_of_deep_digit_blocks():
    base = DigitBlocks(2, 3, (8, 9, 10, 11, 12))
    presence = scale_presence(base, 10, 1000, RngStream(3, 0))
    assert presence.counts.shape == (1024, 2)
    assert presence.passed
    assert presence.missing == []
    df = presence.to_frame()
    assert list(df.columns) == ["lo", "hi", "class_1", "class_2"]
    assert df["hi"].iloc[-1] == 1.0


def test_scale_presence_detects_coarse_partitions():
    presence = scale_presence(Intervals(2), 4, 100, RngStream(4, 0))
    assert not presence.passed
    # interval [0, 1/16) never sees class 2
    assert (0, 2) in presence.missing
    assert (15, 1) in presence.missing


@pytest.mark.slow
def test_scale_presence_full_size():
    base = DigitBlocks(2, 3, (8, 9, 10, 11, 12))
    assert scale_presence(base, 10, 10_000, RngStream(5, 0)).passed
