import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raimipy.cover_lang import (
    AxisSet,
    Band,
    Cap,
    Complement,
    CoverSpec,
    DigitCond,
    EmptySet,
    HalfSpace,
    Intersect,
    Minus,
    Sector,
    TrueSet,
    Union,
    contains,
    fold_constants,
    indicator,
    is_cover_valid,
    parse,
    to_text,
    validate_cover,
)
from raimipy.custom_exceptions import (
    ArityError,
    CoverLanguageError,
    CoverSyntaxError,
    DimensionError,
)
from raimipy.measures import RngStream
from raimipy.types import PowerSpec, SphereSpec


def _on_circle(theta, z=0.0):
    r = math.sqrt(1 - z * z)
    return (r * math.cos(2 * math.pi * theta), r * math.sin(2 * math.pi * theta), z)


def test_parse_precedence_of_complement_and_intersection():
    expr = parse("cap[(0,0,1),0.5] & !band[3,-0.2,0.2]", 3)
    assert expr == Intersect(Cap((0, 0, 1), 0.5), Complement(Band(3, -0.2, 0.2)))


@pytest.mark.parametrize(
    "text, expected",
    [
        ("TRUE | EMPTY & axis", Union(TrueSet(), Intersect(EmptySet(), AxisSet()))),
        ("TRUE | EMPTY \\ axis", Union(TrueSet(), Minus(EmptySet(), AxisSet()))),
        ("TRUE \\ EMPTY & axis", Minus(TrueSet(), Intersect(EmptySet(), AxisSet()))),
        ("TRUE \\ EMPTY \\ axis", Minus(Minus(TrueSet(), EmptySet()), AxisSet())),
        ("(TRUE | EMPTY) & axis", Intersect(Union(TrueSet(), EmptySet()), AxisSet())),
        ("!!true", Complement(Complement(TrueSet()))),
        ("Sector[0.25, 1)", Sector(0.25, 1.0)),
        ("digit[3, 2, 1]", DigitCond(3, 2, 1)),
        ("halfspace[(1e-3,-2,+4),-.5]", HalfSpace((0.001, -2.0, 4.0), -0.5)),
    ],
)
def test_parse(text, expected):
    assert parse(text, 3) == expected


def test_operators_build_nodes():
    a = Sector(0, 0.5)
    b = Band(3, 0, 1)
    assert (a | b) == Union(a, b)
    assert (a & b) == Intersect(a, b)
    assert (a - b) == Minus(a, b)
    assert ~a == Complement(a)
    assert str(a | ~b) == "(sector[0,0.5) | !band[3,0,1])"


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("sector[0,0.5", 1, 13),
        ("foo[1]", 1, 1),
        ("TRUE |\n  bogus", 2, 3),
        ("TRUE )", 1, 6),
        ("TRUE $ EMPTY", 1, 6),
        ("sector[0,0.5]", 1, 13),
        ("sector[0.5,0.5)", 1, 1),
        ("band[1.5,0,1]", 1, 6),
        ("(TRUE | EMPTY", 1, 14),
    ],
)
def test_syntax_errors_report_position(text, line, column):
    with pytest.raises(CoverSyntaxError) as exc_info:
        parse(text, 3)
    assert exc_info.value.line == line
    assert exc_info.value.column == column
    assert f"line {line}, column {column}" in str(exc_info.value)


@pytest.mark.parametrize("text", ["band[1,2]", "cap[0.5,(0,0,1)]", "sector[0]", "band[1,2)", "digit[(3),1,1]"])
def test_arity_errors(text):
    with pytest.raises(ArityError):
        parse(text, 3)


@pytest.mark.parametrize(
    "text, dimension",
    [
        ("cap[(0,1),0.5]", 3),
        ("halfspace[(0,0,0,1),0]", 3),
        ("band[4,0,1]", 3),
        ("sector[0,0.5)", 1),
        ("digit[3,1,1]", 1),
    ],
)
def test_dimension_errors(text, dimension):
    with pytest.raises(DimensionError):
        parse(text, dimension)


def test_evaluating_on_the_wrong_dimension_fails():
    with pytest.raises(DimensionError):
        contains(Cap((0, 0, 1), 0.5), np.zeros((4, 2)))


def test_mixed_vector_dimensions_are_rejected():
    with pytest.raises(DimensionError):
        contains(Union(Cap((0, 0, 1), 0.5), HalfSpace((1, 0), 0)), np.zeros((4, 3)))


@pytest.mark.parametrize(
    "expr, point, expected",
    [
        (HalfSpace((0, 0, 1), 0), (0.6, 0.8, 0), True),
        (HalfSpace((0, 0, 1), 0.1), (0.6, 0.8, 0), False),
        (Cap((0, 0, 2), 0.5), (0, 0.6, 0.8), True),
        (Cap((0, 0, 2), 0.9), (0, 0.6, 0.8), False),
        (Band(3, -0.2, 0.2), (1, 0, 0.2), True),
        (Sector(0, 0.5), (0, 0, 1), True),
        (Sector(0.5, 1), (0, 0, 1), False),
        # wrapping sector [0.8, 1) u [0, 0.1)
        (Sector(0.8, 0.1), _on_circle(0.05), True),
        (Sector(0.8, 0.1), _on_circle(0.9), True),
        (Sector(0.8, 0.1), _on_circle(0.5), False),
        (Sector(0.8, 0.1), (0, 0, 1), False),
        (DigitCond(3, 1, 0), (0, 0, 1), True),
        (DigitCond(3, 1, 1), _on_circle(0.4), True),
        (DigitCond(3, 2, 2), _on_circle(0.3), True),
        (AxisSet(), (0, 0, -1), True),
        (AxisSet(), _on_circle(0.2), False),
        (EmptySet(), (0, 0, 1), False),
        (TrueSet(), (0, 0, 1), True),
        (parse("sector[0,0.25) | sector[0.5,0.75)", 3), _on_circle(0.6), True),
        (parse("sector[0,0.25) | sector[0.5,0.75)", 3), _on_circle(0.3), False),
        (parse("TRUE \\ sector[0,0.5)", 3), _on_circle(0.3), False),
    ],
)
def test_indicator(expr, point, expected):
    assert indicator(expr, point) == expected


@pytest.mark.parametrize(
    "text, expected",
    [
        ("TRUE | sector[0,0.5)", TrueSet()),
        ("EMPTY | sector[0,0.5)", Sector(0, 0.5)),
        ("!TRUE & sector[0,0.5)", EmptySet()),
        ("sector[0,0.5) \\ EMPTY", Sector(0, 0.5)),
        ("sector[0,0.5) \\ TRUE", EmptySet()),
        ("!EMPTY", TrueSet()),
        ("sector[0,0.5) & !band[3,0,1]", parse("sector[0,0.5) & !band[3,0,1]", 3)),
    ],
)
def test_fold_constants(text, expected):
    assert fold_constants(parse(text, 3)) == expected


def test_enlarged_cover_adjoins_axis_to_first_part():
    cover = CoverSpec.from_texts(["sector[0.5,1)", "sector[0,0.5)"], SphereSpec(3))
    enlarged = cover.enlarged()
    assert enlarged.parts[0] == Union(Sector(0.5, 1), AxisSet())
    assert enlarged.parts[1] == cover.parts[1]
    assert enlarged.enlarged() == enlarged
    assert cover.t == 2


def test_cover_parts_must_match_surface_dimension():
    with pytest.raises(DimensionError):
        CoverSpec.from_texts(["cap[(0,0,0,1),0]"], SphereSpec(3))


def test_cover_needs_parts():
    with pytest.raises(CoverLanguageError):
        CoverSpec((), SphereSpec(3))


@pytest.mark.parametrize(
    "texts, uncovered",
    [
        (["sector[0,0.5)", "sector[0.5,1)"], 0.0),
        (["sector[0,0.4)"], 0.6),
        (["cap[(0,0,1),0]", "cap[(0,0,-1),0]"], 0.0),
        (["band[3,0.5,1]"], 0.75),
    ],
)
def test_validate_cover(texts, uncovered):
    cover = CoverSpec.from_texts(texts, SphereSpec(3))
    estimate = validate_cover(cover, 100_000, RngStream(7, 1))
    assert abs(estimate.mean - uncovered) <= 4 * estimate.std_err + 1e-12
    assert is_cover_valid(estimate, z=4) == (uncovered == 0.0)


def test_validate_cover_of_whole_surface_is_exact():
    cover = CoverSpec.from_texts(["TRUE"], PowerSpec(3, 2.0, 1.0))
    estimate = validate_cover(cover, 1000, RngStream(7, 1))
    assert estimate.mean == 0.0
    assert estimate.std_err == 0.0


# ---- properties over random expressions in R^3

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite)


@st.composite
def bands(draw):
    lo, hi = sorted((draw(finite), draw(finite)))
    return Band(draw(st.integers(1, 3)), lo, hi)


@st.composite
def sectors(draw):
    lo = draw(st.floats(0, 1, exclude_max=True))
    hi = draw(st.floats(0, 1, exclude_min=True).filter(lambda x: x != lo))
    return Sector(lo, hi)


@st.composite
def digit_conds(draw):
    base = draw(st.integers(2, 10))
    return DigitCond(base, draw(st.integers(1, 64)), draw(st.integers(0, base - 1)))


leaves = st.one_of(
    st.builds(HalfSpace, vectors, finite),
    st.builds(
        Cap,
        vectors.filter(lambda c: any(abs(x) > 1e-3 for x in c)),
        st.floats(-1, 1),
    ),
    sectors(),
    bands(),
    digit_conds(),
    st.just(TrueSet()),
    st.just(EmptySet()),
    st.just(AxisSet()),
)

expressions = st.recursive(
    leaves,
    lambda children: st.one_of(
        st.builds(Union, children, children),
        st.builds(Intersect, children, children),
        st.builds(Minus, children, children),
        st.builds(Complement, children),
    ),
    max_leaves=8,
)


@settings(max_examples=300)
@given(expressions)
def test_printed_expressions_parse_back(expr):
    assert parse(to_text(expr), 3) == expr


@settings(max_examples=100)
@given(expressions, expressions, st.integers(0, 2**32 - 1))
def test_de_morgan(a, b, seed):
    gen = np.random.default_rng(seed)
    points = gen.uniform(-2, 2, (200, 3))
    points[:20, :2] = 0.0
    lhs = contains(Complement(Union(a, b)), points)
    rhs = contains(Intersect(Complement(a), Complement(b)), points)
    assert np.array_equal(lhs, rhs)
    lhs = contains(Complement(Intersect(a, b)), points)
    rhs = contains(Union(Complement(a), Complement(b)), points)
    assert np.array_equal(lhs, rhs)


@settings(max_examples=100)
@given(expressions)
def test_folding_preserves_membership(expr):
    points = np.random.default_rng(0).uniform(-2, 2, (200, 3))
    assert np.array_equal(contains(expr, points), contains(fold_constants(expr), points))
