"""
Experiment files are INI documents read with configparser:

    [surface]      kind = sphere | power | cylinder, n, and k, R, omega,
                   omega_lo, omega_hi as the kind requires
    [partition]    scheme = intervals | digit_blocks | custom, r, and
                   base + positions, or class1 .. class<r-1>
    [cover]        part1 .. part<t>, one set expression each
    [harness]      grid, samples_per_cell, halvings, certify_samples,
                   validate_samples, z, max_candidates (all optional)
    [run]          seed (required), report, slices, plot_data

Relative output paths are resolved against the directory of the file.
"""
import configparser
import os
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

from raimipy.circle_partition import BasePartition, PartitionHandle, make_partition
from raimipy.consts import (
    DEFAULT_CERTIFY_SAMPLES,
    DEFAULT_GRID,
    DEFAULT_HALVINGS,
    DEFAULT_SAMPLES_PER_CELL,
    DEFAULT_VALIDATE_SAMPLES,
    DEFAULT_Z,
)
from raimipy.cover_lang import CoverSpec, parse
from raimipy.custom_exceptions import (
    ConfigError,
    CoverLanguageError,
    InvalidPartition,
    InvalidSurfaceSpec,
)
from raimipy.geometry import validate_surface
from raimipy.harness import SearchConfig
from raimipy.types import CylinderSpec, PowerSpec, SphereSpec, SurfaceSpec
from raimipy.utils import get_file_hash, parse_float_list

T = TypeVar("T")

REQUIRED_SECTIONS = ("surface", "partition", "cover", "run")
NUMBERED_KEY = re.compile(r"^(part|class)(\d+)$")


@dataclass
class ExperimentConfig:
    path: str
    config_hash: str
    surface: SurfaceSpec
    partition: BasePartition
    cover: CoverSpec
    cover_texts: Tuple[str, ...]
    grid: int
    samples_per_cell: int
    validate_samples: int
    search: SearchConfig
    seed: int
    report_path: str
    slices_path: Optional[str]
    plot_data_path: Optional[str]

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.path))[0]

    @property
    def handle(self) -> PartitionHandle:
        return PartitionHandle(self.surface, self.partition)


def _get(
    parser: configparser.ConfigParser,
    section: str,
    key: str,
    convert: Callable[[str], T],
    default: Optional[T] = None,
    required: bool = False,
) -> T:
    if not parser.has_option(section, key):
        if required:
            raise ConfigError("missing required key", section, key)
        return default  # type: ignore
    raw = parser.get(section, key).strip()
    try:
        return convert(raw)
    except (ValueError, TypeError) as ex:
        raise ConfigError(f"cannot read {raw!r}: {ex}", section, key) from ex


def _numbered(parser: configparser.ConfigParser, section: str, prefix: str) -> List[Tuple[str, str]]:
    "Values of <prefix>1, <prefix>2, ... which must be numbered without gaps"
    found: Dict[int, Tuple[str, str]] = {}
    for key in parser.options(section):
        m = NUMBERED_KEY.match(key)
        if m is None or m.group(1) != prefix:
            continue
        found[int(m.group(2))] = (key, parser.get(section, key).strip())
    if sorted(found) != list(range(1, len(found) + 1)):
        raise ConfigError(
            f"{prefix} keys must be numbered 1..N without gaps, found {sorted(found)}", section
        )
    return [found[i] for i in range(1, len(found) + 1)]


def _parse_expr(text: str, dimension: int, section: str, key: str):
    try:
        return parse(text, dimension)
    except CoverLanguageError as ex:
        raise ConfigError(str(ex), section, key) from ex


def _load_surface(parser: configparser.ConfigParser) -> SurfaceSpec:
    kind = _get(parser, "surface", "kind", str, required=True)
    n = _get(parser, "surface", "n", int, required=True)
    try:
        if kind == "sphere":
            spec: SurfaceSpec = SphereSpec(n)
        elif kind == "power":
            spec = PowerSpec(
                n,
                _get(parser, "surface", "k", float, required=True),
                _get(parser, "surface", "R", float, default=1.0),
            )
        elif kind == "cylinder":
            omega_text = _get(parser, "surface", "omega", str, required=True)
            spec = CylinderSpec(
                n,
                _get(parser, "surface", "R", float, default=1.0),
                _parse_expr(omega_text, n - 2, "surface", "omega"),
                _get(parser, "surface", "omega_lo", parse_float_list, required=True),
                _get(parser, "surface", "omega_hi", parse_float_list, required=True),
            )
        else:
            raise ConfigError(f"unknown surface kind {kind!r}", "surface", "kind")
        validate_surface(spec)
    except (InvalidSurfaceSpec, CoverLanguageError) as ex:
        raise ConfigError(str(ex), "surface") from ex
    return spec


def _parse_positions(text: str) -> Tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(","))


def _load_partition(parser: configparser.ConfigParser, workers: Optional[int]) -> BasePartition:
    scheme = _get(parser, "partition", "scheme", str, default="intervals")
    r = _get(parser, "partition", "r", int, required=True)
    params = {}
    if scheme == "digit_blocks":
        params["base"] = _get(parser, "partition", "base", int, required=True)
        params["positions"] = _get(parser, "partition", "positions", _parse_positions, required=True)
    elif scheme == "custom":
        params["exprs"] = tuple(
            _parse_expr(text, 2, "partition", key)
            for key, text in _numbered(parser, "partition", "class")
        )
    try:
        return make_partition(r, scheme, workers=workers, **params)
    except InvalidPartition as ex:
        raise ConfigError(str(ex), "partition") from ex


def _resolve(base_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    path = os.path.expanduser(path)
    if os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def load_config(path: str, workers: Optional[int] = None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    # keys are case sensitive (R vs r)
    parser.optionxform = str  # type: ignore
    try:
        with open(path, "rt") as fd:
            parser.read_file(fd)
    except configparser.Error as ex:
        raise ConfigError(f"{path}: {ex}") from ex
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            raise ConfigError(f"{path} has no [{section}] section")
    if not parser.has_section("harness"):
        parser.add_section("harness")

    surface = _load_surface(parser)
    partition = _load_partition(parser, workers)

    cover_items = _numbered(parser, "cover", "part")
    if not cover_items:
        raise ConfigError("a cover needs at least part1", "cover")
    cover_texts = tuple(text for _, text in cover_items)
    cover = CoverSpec(
        tuple(_parse_expr(text, surface.n, "cover", key) for key, text in cover_items),
        surface,
    )

    search = SearchConfig(
        halvings=_get(parser, "harness", "halvings", int, DEFAULT_HALVINGS),
        certify_samples=_get(parser, "harness", "certify_samples", int, DEFAULT_CERTIFY_SAMPLES),
        z=_get(parser, "harness", "z", float, DEFAULT_Z),
        max_candidates=_get(parser, "harness", "max_candidates", int, None),
    )
    grid = _get(parser, "harness", "grid", int, DEFAULT_GRID)
    samples_per_cell = _get(parser, "harness", "samples_per_cell", int, DEFAULT_SAMPLES_PER_CELL)
    validate_samples = _get(parser, "harness", "validate_samples", int, DEFAULT_VALIDATE_SAMPLES)
    for key, value in (
        ("grid", grid),
        ("samples_per_cell", samples_per_cell),
        ("validate_samples", validate_samples),
        ("certify_samples", search.certify_samples),
    ):
        if value <= 0:
            raise ConfigError("must be positive", "harness", key)

    seed = _get(parser, "run", "seed", int, required=True)
    if seed < 0:
        raise ConfigError("seed must be a non-negative integer", "run", "seed")
    base_dir = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    report_path = _resolve(base_dir, _get(parser, "run", "report", str, f"{stem}.report.json"))
    assert report_path is not None

    return ExperimentConfig(
        path=path,
        config_hash=get_file_hash(path),
        surface=surface,
        partition=partition,
        cover=cover,
        cover_texts=cover_texts,
        grid=grid,
        samples_per_cell=samples_per_cell,
        validate_samples=validate_samples,
        search=search,
        seed=seed,
        report_path=report_path,
        slices_path=_resolve(base_dir, _get(parser, "run", "slices", str, None)),
        plot_data_path=_resolve(base_dir, _get(parser, "run", "plot_data", str, None)),
    )
