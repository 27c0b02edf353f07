from contextlib import ExitStack
from unittest import mock

import pytest

from raimipy.cover_lang import parse
from raimipy.hypotheses import (
    GEOMETRIC_SAMPLE_CAP,
    SuiteResult,
    angle_uniformity_suite,
    archimedes_suite,
    default_invariance_sets,
    default_test_functions,
    describe,
    disintegration_suite,
    equivariance_suite,
    group_law_suite,
    pushforward_suite,
    rotation_invariance_suite,
    round_trip_suite,
    run_all,
)
from raimipy.measures import RngStream, estimate_measure
from raimipy.types import CylinderSpec, PowerSpec, SphereSpec

# statistical checks in this file use family-wise thresholds
Z = 4.0
P_MIN = 1e-3

SURFACES = [
    SphereSpec(3),
    SphereSpec(4),
    SphereSpec(5),
    PowerSpec(3, 1.0, 1.0),
    PowerSpec(3, 2.0, 1.0),
    PowerSpec(4, 2.0, 1.0),
    PowerSpec(3, 0.5, 1.0),
    CylinderSpec(3, 1.0, parse("band[1,0,1]", 1), (0.0,), (1.0,)),
    CylinderSpec(4, 2.0, parse("cap[(1,0),0] | band[2,0,0.5]", 2), (-1.0, -1.0), (1.0, 1.0)),
]

FAMILIES = [SphereSpec(4), PowerSpec(3, 2.0, 1.0), SURFACES[-1]]


@pytest.mark.parametrize("spec", SURFACES, ids=describe)
def test_geometric_suites(spec):
    for suite in (equivariance_suite, round_trip_suite, group_law_suite):
        result = suite(spec, 100_000, RngStream(1, 5))
        assert result.passed, f"{result.name}: {result.statistic}"


@pytest.mark.parametrize("spec", SURFACES, ids=describe)
def test_angle_uniformity(spec):
    result = angle_uniformity_suite(spec, 100_000, RngStream(2, 5), p_min=P_MIN)
    assert result.passed, result.detail


@pytest.mark.parametrize("spec", SURFACES, ids=describe)
def test_pushforward(spec):
    result = pushforward_suite(spec, 100_000, RngStream(3, 5), p_min=P_MIN)
    assert result.passed, result.detail


@pytest.mark.parametrize("spec", FAMILIES, ids=describe)
def test_disintegration(spec):
    result = disintegration_suite(spec, 100_000, RngStream(4, 5), z=Z)
    assert result.passed, result.detail
    assert result.detail == "10 functions"


def test_default_test_functions():
    fns = default_test_functions(PowerSpec(3, 2.0, 1.5))
    assert len(fns) == 10
    assert len({fn.name for fn in fns}) == 10
    # x_n reaches R^k = 2.25 on this surface
    assert fns[1].bound == pytest.approx(2.25)


def test_archimedes():
    result = archimedes_suite(5, 100_000, RngStream(5, 5), p_min=P_MIN)
    assert result.passed, result.detail


@pytest.mark.parametrize("spec", FAMILIES, ids=describe)
def test_rotation_invariance(spec):
    assert len(default_invariance_sets(spec)) == 4
    result = rotation_invariance_suite(spec, 100_000, RngStream(6, 5), z=Z)
    assert result.passed, result.detail
    assert result.detail == "12 triples"


def test_rotation_invariance_detects_broken_rotation():
    # comparing a set with a different one must fail
    spec = SphereSpec(3)
    sets = [parse("sector[0,0.5) & halfspace[(1,0,0),0]", 3)]
    base = rotation_invariance_suite(spec, 20_000, RngStream(7, 5), z=Z, sets=sets, alphas=(0.0,))
    assert base.passed
    wrong = parse("sector[0,0.9)", 3)
    with mock.patch(
        "raimipy.hypotheses.estimate_rotated_measure",
        side_effect=lambda spec, expr, alpha, n, rng, workers: estimate_measure(spec, wrong, n, rng, workers),
    ):
        broken = rotation_invariance_suite(spec, 20_000, RngStream(7, 5), z=Z, sets=sets, alphas=(0.0,))
    assert not broken.passed


def test_run_all():
    results = run_all(SphereSpec(4), 50_000, RngStream(8, 5), z=Z, p_min=P_MIN)
    assert [r.name for r in results] == [
        "equivariance",
        "round_trip",
        "group_law",
        "disintegration",
        "pushforward",
        "angle_uniformity",
        "rotation_invariance",
        "archimedes",
    ]
    assert all(r.passed for r in results)


def test_run_all_sample_sizes():
    names = [
        "equivariance",
        "round_trip",
        "group_law",
        "disintegration",
        "pushforward",
        "angle_uniformity",
        "rotation_invariance",
        "archimedes",
    ]
    with ExitStack() as stack:
        suites = {
            name: stack.enter_context(
                mock.patch(f"raimipy.hypotheses.{name}_suite", return_value=SuiteResult(name, True, 0.0))
            )
            for name in names
        }
        run_all(SphereSpec(4), 1_000_000, RngStream(8, 5))
    sizes = {name: suite.call_args.args[1] for name, suite in suites.items()}
    assert sizes == {
        "equivariance": GEOMETRIC_SAMPLE_CAP,
        "round_trip": GEOMETRIC_SAMPLE_CAP,
        "group_law": GEOMETRIC_SAMPLE_CAP,
        "disintegration": 1_000_000,
        "pushforward": GEOMETRIC_SAMPLE_CAP,
        "angle_uniformity": 1_000_000,
        "rotation_invariance": GEOMETRIC_SAMPLE_CAP,
        "archimedes": 1_000_000,
    }


@pytest.mark.parametrize(
    "spec, text",
    [
        (SphereSpec(3), "sphere n=3"),
        (PowerSpec(3, 0.5, 2.0), "power n=3 k=0.5 R=2.0"),
        (SURFACES[7], "cylinder n=3 R=1.0 omega=band[1,0.0,1.0]"),
    ],
)
def test_describe(spec, text):
    assert describe(spec) == text


@pytest.mark.slow
@pytest.mark.parametrize("spec", FAMILIES, ids=describe)
def test_disintegration_full_size(spec):
    result = disintegration_suite(spec, 1_000_000, RngStream(9, 5), z=Z)
    assert result.passed, result.detail


@pytest.mark.slow
def test_archimedes_full_size():
    result = archimedes_suite(5, 1_000_000, RngStream(10, 5), p_min=P_MIN)
    assert result.passed, result.detail
