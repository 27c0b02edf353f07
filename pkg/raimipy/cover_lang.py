"""
A small set-algebra language for measurable sets and finite covers.

Expressions combine leaf predicates on points of R^n with infix operators.
Precedence from tightest to loosest is `!` (complement), `&` (intersect),
`\\` (minus), `|` (union); binary operators are left-associative. See
docs/Definitions.md for the grammar.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pyparsing import (
    Forward,
    Group,
    Literal,
    OpAssoc,
    Opt,
    ParseBaseException,
    ParserElement,
    ParseResults,
    Regex,
    Suppress,
    Word,
    ZeroOrMore,
    alphanums,
    alphas,
    col,
    infix_notation,
)

from raimipy.consts import AXIS_TOLERANCE, DEFAULT_Z, MAX_DIGITS
from raimipy.custom_exceptions import (
    ArityError,
    CoverLanguageError,
    CoverSyntaxError,
    DimensionError,
)
from raimipy.utils import base_digits

log = logging.getLogger(__name__)

Span = Optional[Tuple[int, int]]


class SetExpr:
    """Base class of every node of a set expression. Nodes are immutable and
    compare equal regardless of where in the source text they came from."""

    def __or__(self, other: "SetExpr") -> "SetExpr":
        return Union(self, other)

    def __and__(self, other: "SetExpr") -> "SetExpr":
        return Intersect(self, other)

    def __sub__(self, other: "SetExpr") -> "SetExpr":
        return Minus(self, other)

    def __invert__(self) -> "SetExpr":
        return Complement(self)

    def __str__(self) -> str:
        return to_text(self)


def _check_finite(name: str, *values: float):
    for value in values:
        if not math.isfinite(value):
            raise CoverLanguageError(f"{name} parameters must be finite, got {value}")


@dataclass(frozen=True)
class HalfSpace(SetExpr):
    "{x : x . normal >= offset} (closed)"
    normal: Tuple[float, ...]
    offset: float
    span: Span = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_finite("halfspace", *self.normal, self.offset)


@dataclass(frozen=True)
class Cap(SetExpr):
    "{x : x . center / |center| >= cos_min}"
    center: Tuple[float, ...]
    cos_min: float
    span: Span = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_finite("cap", *self.center, self.cos_min)
        if math.sqrt(sum(c * c for c in self.center)) == 0:
            raise CoverLanguageError("cap center must be a nonzero vector")


@dataclass(frozen=True)
class Sector(SetExpr):
    """
    {x : theta(x) in [lo, hi)}, or [lo, 1) u [0, hi) when lo > hi. Contains
    the axis N exactly when lo == 0.
    """

    lo: float
    hi: float
    span: Span = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_finite("sector", self.lo, self.hi)
        if not (0 <= self.lo < 1 and 0 < self.hi <= 1 and self.lo != self.hi):
            raise CoverLanguageError(
                f"sector bounds must satisfy 0 <= lo < 1, 0 < hi <= 1, lo != hi; got [{self.lo},{self.hi})"
            )

    @property
    def wraps(self) -> bool:
        return self.lo > self.hi

    @property
    def contains_axis(self) -> bool:
        return self.lo == 0


@dataclass(frozen=True)
class Band(SetExpr):
    "{x : lo <= x_coord_index <= hi}, coordinates numbered from 1"
    coord_index: int
    lo: float
    hi: float
    span: Span = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_finite("band", self.lo, self.hi)
        if self.coord_index < 1:
            raise CoverLanguageError("band coordinates are numbered from 1")
        if self.lo > self.hi:
            raise CoverLanguageError(f"band is empty: {self.lo} > {self.hi}")


@dataclass(frozen=True)
class DigitCond(SetExpr):
    "{x : digit `position` of theta(x) in `base` equals `digit`}; N counts as theta = 0"
    base: int
    position: int
    digit: int
    span: Span = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.base < 2:
            raise CoverLanguageError("digit base must be at least 2")
        if not 1 <= self.position <= MAX_DIGITS:
            raise CoverLanguageError(f"digit position must be in 1..{MAX_DIGITS}")
        if not 0 <= self.digit < self.base:
            raise CoverLanguageError(f"digit must be in 0..{self.base - 1}")


@dataclass(frozen=True)
class TrueSet(SetExpr):
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class EmptySet(SetExpr):
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AxisSet(SetExpr):
    "The exceptional set N = {x1 = x2 = 0}"
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Union(SetExpr):
    left: SetExpr
    right: SetExpr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Intersect(SetExpr):
    left: SetExpr
    right: SetExpr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Minus(SetExpr):
    left: SetExpr
    right: SetExpr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Complement(SetExpr):
    operand: SetExpr
    span: Span = field(default=None, compare=False, repr=False)


# ---- printing


def _fmt(value: float) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _fmt_vector(values: Sequence[float]) -> str:
    return "(" + ",".join(_fmt(v) for v in values) + ")"


def to_text(expr: SetExpr) -> str:
    """Canonical text of an expression. Binary nodes are always parenthesized,
    so parse(to_text(e)) == e."""
    if isinstance(expr, Union):
        return f"({to_text(expr.left)} | {to_text(expr.right)})"
    elif isinstance(expr, Intersect):
        return f"({to_text(expr.left)} & {to_text(expr.right)})"
    elif isinstance(expr, Minus):
        return f"({to_text(expr.left)} \\ {to_text(expr.right)})"
    elif isinstance(expr, Complement):
        return f"!{to_text(expr.operand)}"
    elif isinstance(expr, HalfSpace):
        return f"halfspace[{_fmt_vector(expr.normal)},{_fmt(expr.offset)}]"
    elif isinstance(expr, Cap):
        return f"cap[{_fmt_vector(expr.center)},{_fmt(expr.cos_min)}]"
    elif isinstance(expr, Sector):
        return f"sector[{_fmt(expr.lo)},{_fmt(expr.hi)})"
    elif isinstance(expr, Band):
        return f"band[{expr.coord_index},{_fmt(expr.lo)},{_fmt(expr.hi)}]"
    elif isinstance(expr, DigitCond):
        return f"digit[{expr.base},{expr.position},{expr.digit}]"
    elif isinstance(expr, TrueSet):
        return "TRUE"
    elif isinstance(expr, EmptySet):
        return "EMPTY"
    elif isinstance(expr, AxisSet):
        return "axis"
    else:
        raise Exception(f"Unknown expression node: {type(expr)}")


# ---- parsing

# infix grammars backtrack heavily without memoization
ParserElement.enable_packrat()

# leaf name -> (argument shape, closing bracket); "v" is a vector, "n" a number
LEAF_SIGNATURES: Dict[str, Tuple[str, str]] = {
    "halfspace": ("vn", "]"),
    "cap": ("vn", "]"),
    "sector": ("nn", ")"),
    "band": ("nnn", "]"),
    "digit": ("nnn", "]"),
}
CONSTANTS: Dict[str, Callable[[Span], SetExpr]] = {
    "true": lambda span: TrueSet(span=span),
    "empty": lambda span: EmptySet(span=span),
    "axis": lambda span: AxisSet(span=span),
}


@dataclass(frozen=True)
class _Located:
    "A parsed argument or closing bracket with its offset in the source text"
    value: Any
    loc: int
    text: str


def _join(first: Span, last: Span) -> Span:
    if first is None or last is None:
        return None
    return (first[0], last[1])


def _check_vector(name: str, vector: Tuple[float, ...], dimension: int):
    if len(vector) != dimension:
        raise DimensionError(
            f"{name} vector has {len(vector)} coordinates but the dimension is {dimension}"
        )


def _check_angular(name: str, dimension: int):
    if dimension < 2:
        raise DimensionError(f"{name} needs points with at least 2 coordinates")


def _integer(name: str, arg: _Located, text: str) -> int:
    if not float(arg.value).is_integer():
        raise CoverSyntaxError(f"{name} expects an integer here, got {arg.text}", text, arg.loc)
    return int(arg.value)


def _build_leaf(text: str, loc: int, tokens: ParseResults, dimension: int) -> SetExpr:
    """The grammar accepts any name followed by any bracketed argument list;
    the checks live here so each mistake is reported at the offending token.
    The argument shape is checked before the closing bracket."""
    name_text = tokens[0]
    name = name_text.lower()
    if name in CONSTANTS:
        if len(tokens) > 1:
            raise CoverSyntaxError(f"{name_text} takes no arguments", text, loc)
        return CONSTANTS[name]((loc, loc + len(name_text)))
    if name not in LEAF_SIGNATURES:
        raise CoverSyntaxError(f"Unknown set {name_text!r}", text, loc)
    if len(tokens) == 1:
        raise CoverSyntaxError(f"{name} expects an argument list", text, loc + len(name_text))

    args: List[_Located] = list(tokens[1])
    closer: _Located = tokens[2]
    shape, closing = LEAF_SIGNATURES[name]
    kinds = "".join("v" if isinstance(arg.value, tuple) else "n" for arg in args)
    if kinds != shape:
        described = ", ".join("vector" if k == "v" else "number" for k in shape)
        raise ArityError(
            f"{name} expects ({described}) but got {len(args)} argument(s) at column {col(loc, text)}"
        )
    if closer.value != closing:
        raise CoverSyntaxError(f"Expected {closing!r} to close the argument list", text, closer.loc)

    span = (loc, closer.loc + 1)
    values = [arg.value for arg in args]
    try:
        if name == "halfspace":
            _check_vector(name, values[0], dimension)
            return HalfSpace(values[0], values[1], span=span)
        elif name == "cap":
            _check_vector(name, values[0], dimension)
            return Cap(values[0], values[1], span=span)
        elif name == "sector":
            _check_angular(name, dimension)
            return Sector(values[0], values[1], span=span)
        elif name == "band":
            index = _integer(name, args[0], text)
            if not 1 <= index <= dimension:
                raise DimensionError(f"band coordinate {index} is outside 1..{dimension}")
            return Band(index, values[1], values[2], span=span)
        else:
            assert name == "digit"
            _check_angular(name, dimension)
            base, position, digit = (_integer(name, arg, text) for arg in args)
            return DigitCond(base, position, digit, span=span)
    except CoverLanguageError as ex:
        if isinstance(ex, (DimensionError, CoverSyntaxError)):
            raise
        raise CoverSyntaxError(str(ex), text, loc) from ex


def _binary(node_type: Callable[..., SetExpr]) -> Callable[[ParseResults], SetExpr]:
    def action(tokens: ParseResults) -> SetExpr:
        # operands and operator symbols alternate
        operands = tokens[0][0::2]
        result = operands[0]
        for operand in operands[1:]:
            result = node_type(result, operand, span=_join(result.span, operand.span))
        return result

    return action


def _complement(text: str, loc: int, tokens: ParseResults) -> SetExpr:
    operand = tokens[0][1]
    return Complement(operand, span=_join((loc, loc), operand.span))


@lru_cache(maxsize=None)
def _grammar(dimension: int) -> ParserElement:
    number = Regex(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
    number.set_parse_action(lambda text, loc, t: _Located(float(t[0]), loc, t[0]))
    vector = Suppress("(") - number + ZeroOrMore(Suppress(",") - number) - Suppress(")")
    vector.set_parse_action(
        lambda text, loc, t: _Located(tuple(arg.value for arg in t), loc, "vector")
    )
    argument = vector | number
    arguments = Group(argument + ZeroOrMore(Suppress(",") - argument))
    closer = Literal("]") | Literal(")")
    closer.set_parse_action(lambda text, loc, t: _Located(t[0], loc, t[0]))

    leaf = Word(alphas + "_", alphanums + "_") + Opt(Suppress("[") - arguments - closer)
    leaf.set_parse_action(lambda text, loc, t: _build_leaf(text, loc, t, dimension))

    expression = Forward()
    operand = leaf | (Suppress("(") - expression - Suppress(")"))
    # tightest first
    expression <<= infix_notation(
        operand,
        [
            (Literal("!"), 1, OpAssoc.RIGHT, _complement),
            (Literal("&"), 2, OpAssoc.LEFT, _binary(Intersect)),
            (Literal("\\"), 2, OpAssoc.LEFT, _binary(Minus)),
            (Literal("|"), 2, OpAssoc.LEFT, _binary(Union)),
        ],
    )
    return expression


def parse(text: str, dimension: int) -> SetExpr:
    """Parse `text` into an expression over R^dimension."""
    try:
        result = _grammar(dimension).parse_string(text, parse_all=True)
    except ParseBaseException as ex:
        found = repr(text[ex.loc]) if ex.loc < len(text) else "end of input"
        raise CoverSyntaxError(f"{ex.msg} but found {found}", text, ex.loc) from None
    return result[0]


# ---- evaluation


@lru_cache(maxsize=1024)
def _dimension_requirements(expr: SetExpr) -> Tuple[Optional[int], int]:
    "(exact dimension demanded by vector leaves or None, minimum dimension)"
    if isinstance(expr, (HalfSpace, Cap)):
        vector = expr.normal if isinstance(expr, HalfSpace) else expr.center
        return len(vector), len(vector)
    elif isinstance(expr, Band):
        return None, expr.coord_index
    elif isinstance(expr, (Sector, DigitCond, AxisSet)):
        return None, 2
    elif isinstance(expr, (TrueSet, EmptySet)):
        return None, 0
    elif isinstance(expr, Complement):
        return _dimension_requirements(expr.operand)
    elif isinstance(expr, (Union, Intersect, Minus)):
        left_exact, left_min = _dimension_requirements(expr.left)
        right_exact, right_min = _dimension_requirements(expr.right)
        if left_exact is not None and right_exact is not None and left_exact != right_exact:
            raise DimensionError(
                f"expression mixes {left_exact}- and {right_exact}-dimensional vectors"
            )
        exact = left_exact if left_exact is not None else right_exact
        return exact, max(left_min, right_min)
    else:
        raise Exception(f"Unknown expression node: {type(expr)}")


def check_dimension(expr: SetExpr, dimension: int):
    exact, minimum = _dimension_requirements(expr)
    if (exact is not None and exact != dimension) or dimension < minimum:
        raise DimensionError(
            f"expression {to_text(expr)} cannot be evaluated on {dimension}-dimensional points"
        )


class _Evaluation:
    """Evaluates one expression on a batch of points, computing the polar
    angle and the axis mask at most once."""

    def __init__(self, points: np.ndarray):
        self.points = points
        self._theta: Optional[np.ndarray] = None
        self._axis: Optional[np.ndarray] = None

    @property
    def theta(self) -> np.ndarray:
        if self._theta is None:
            from raimipy.geometry import angle_of

            self._theta = angle_of(self.points)
        return self._theta

    @property
    def axis(self) -> np.ndarray:
        if self._axis is None:
            from raimipy.geometry import axis_mask

            self._axis = axis_mask(self.points)
        return self._axis

    def run(self, expr: SetExpr) -> np.ndarray:
        points = self.points
        if isinstance(expr, Union):
            return self.run(expr.left) | self.run(expr.right)
        elif isinstance(expr, Intersect):
            return self.run(expr.left) & self.run(expr.right)
        elif isinstance(expr, Minus):
            return self.run(expr.left) & ~self.run(expr.right)
        elif isinstance(expr, Complement):
            return ~self.run(expr.operand)
        elif isinstance(expr, HalfSpace):
            return points @ np.asarray(expr.normal) >= expr.offset
        elif isinstance(expr, Cap):
            center = np.asarray(expr.center)
            return points @ (center / np.linalg.norm(center)) >= expr.cos_min
        elif isinstance(expr, Band):
            coord = points[:, expr.coord_index - 1]
            return (coord >= expr.lo) & (coord <= expr.hi)
        elif isinstance(expr, Sector):
            theta = self.theta
            if expr.wraps:
                inside = (theta >= expr.lo) | (theta < expr.hi)
            else:
                inside = (theta >= expr.lo) & (theta < expr.hi)
            return np.where(self.axis, expr.contains_axis, inside)
        elif isinstance(expr, DigitCond):
            theta = np.where(self.axis, 0.0, self.theta)
            digits = base_digits(theta, expr.base, expr.position)
            return digits[:, expr.position - 1] == expr.digit
        elif isinstance(expr, TrueSet):
            return np.ones(points.shape[0], dtype=bool)
        elif isinstance(expr, EmptySet):
            return np.zeros(points.shape[0], dtype=bool)
        elif isinstance(expr, AxisSet):
            return self.axis.copy()
        else:
            raise Exception(f"Unknown expression node: {type(expr)}")


def contains(expr: SetExpr, points: np.ndarray) -> np.ndarray:
    """Vectorized indicator: a boolean array with one entry per row of `points`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    check_dimension(expr, points.shape[1])
    return _Evaluation(points).run(expr)


def indicator(expr: SetExpr, p: Sequence[float]) -> bool:
    return bool(contains(expr, np.asarray(p, dtype=float)[None, :])[0])


def fold_constants(expr: SetExpr) -> SetExpr:
    "Absorb TRUE and EMPTY operands. No other simplification is attempted."
    if isinstance(expr, Complement):
        operand = fold_constants(expr.operand)
        if isinstance(operand, TrueSet):
            return EmptySet()
        if isinstance(operand, EmptySet):
            return TrueSet()
        return Complement(operand, span=expr.span)
    if not isinstance(expr, (Union, Intersect, Minus)):
        return expr
    left = fold_constants(expr.left)
    right = fold_constants(expr.right)
    if isinstance(expr, Union):
        if isinstance(left, TrueSet) or isinstance(right, TrueSet):
            return TrueSet()
        if isinstance(left, EmptySet):
            return right
        if isinstance(right, EmptySet):
            return left
        return Union(left, right, span=expr.span)
    elif isinstance(expr, Intersect):
        if isinstance(left, EmptySet) or isinstance(right, EmptySet):
            return EmptySet()
        if isinstance(left, TrueSet):
            return right
        if isinstance(right, TrueSet):
            return left
        return Intersect(left, right, span=expr.span)
    else:
        if isinstance(left, EmptySet) or isinstance(right, TrueSet):
            return EmptySet()
        if isinstance(right, EmptySet):
            return left
        return Minus(left, right, span=expr.span)


# ---- covers


@dataclass(frozen=True)
class CoverSpec:
    """A finite indexed family of sets that should cover `surface`. Parts may
    overlap; their positions are the indices m = 1..t."""

    parts: Tuple[SetExpr, ...]
    surface: object

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if len(self.parts) == 0:
            raise CoverLanguageError("a cover needs at least one part")
        for part in self.parts:
            check_dimension(part, self.surface.n)

    @property
    def t(self) -> int:
        return len(self.parts)

    @classmethod
    def from_texts(cls, texts: Sequence[str], surface) -> "CoverSpec":
        return cls(tuple(parse(text, surface.n) for text in texts), surface)

    def union(self) -> SetExpr:
        result = self.parts[0]
        for part in self.parts[1:]:
            result = Union(result, part)
        return result

    def enlarged(self) -> "CoverSpec":
        "The same cover with the axis N adjoined to part 1"
        first = self.parts[0]
        if isinstance(first, Union) and isinstance(first.right, AxisSet):
            return self
        return CoverSpec((Union(first, AxisSet()),) + self.parts[1:], self.surface)

    def evaluation_parts(self) -> Tuple[SetExpr, ...]:
        return tuple(fold_constants(part) for part in self.parts)


def validate_cover(cover: CoverSpec, n_samples: int, rng, workers: Optional[int] = None):
    """Estimate the mass the cover leaves uncovered. The estimate is taken on
    the enlarged cover (N joined to part 1), which differs by a null set."""
    from raimipy.measures import estimate_measure

    enlarged = cover.enlarged()
    uncovered = fold_constants(Complement(enlarged.union()))
    estimate = estimate_measure(cover.surface, uncovered, n_samples, rng, workers=workers)
    log.info(
        "Cover of %d parts leaves %.6f +/- %.6f uncovered",
        cover.t,
        estimate.mean,
        estimate.std_err,
    )
    return estimate


def is_cover_valid(uncovered, z: float = DEFAULT_Z) -> bool:
    "A cover passes when its uncovered mass is not significantly positive"
    return uncovered.mean <= z * uncovered.std_err
