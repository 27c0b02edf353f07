import argparse
import glob
import json
import logging
import os
import sys
import traceback
from datetime import datetime, timezone
from typing import List, Optional

import colorful as cf

from raimipy.circle_partition import DigitBlocks, partition_masses, scale_presence
from raimipy.config import ExperimentConfig, load_config
from raimipy.consts import (
    COVER_STREAM,
    DEFAULT_CACHE_DIR,
    DEFAULT_Z,
    HYPOTHESIS_STREAM,
    MASS_STREAM,
    SLICE_STREAM,
    VALIDATION_STREAM,
)
from raimipy.cover_lang import is_cover_valid, parse, validate_cover
from raimipy.custom_exceptions import InvalidCover, RaimiException
from raimipy.format_utils import TABLE_FORMATS, write_json_report, write_table
from raimipy.geometry import validate_surface
from raimipy.harness import SliceTable, build_slice_table, objective_curves, run_pipeline
from raimipy.hypotheses import DEFAULT_P_MIN, GEOMETRIC_SAMPLE_CAP, describe, run_all
from raimipy.measures import MeasureEstimate, RngStream, estimate_base_masses
from raimipy.simple_cache import SliceTableCache
from raimipy.types import CylinderSpec, PowerSpec, SphereSpec, SurfaceSpec
from raimipy.utils import parse_float_list

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2


def _show_progress() -> bool:
    return sys.stderr.isatty()


def _get_cache(args: argparse.Namespace) -> Optional[SliceTableCache]:
    if args.no_cache:
        return None
    cache_dir = args.cache_dir if args.cache_dir is not None else DEFAULT_CACHE_DIR
    return SliceTableCache(cache_dir)


def _validate(config: ExperimentConfig, args: argparse.Namespace) -> MeasureEstimate:
    uncovered = validate_cover(
        config.cover, config.validate_samples, RngStream(config.seed, COVER_STREAM), args.workers
    )
    if not is_cover_valid(uncovered, config.search.z):
        raise InvalidCover(uncovered.mean, uncovered.std_err)
    return uncovered


def _slice_table(config: ExperimentConfig, args: argparse.Namespace) -> SliceTable:
    """Returns the slice table of an already validated cover, from the cache
    when the same experiment file was run before."""
    cache = _get_cache(args)
    table = cache.get(config.config_hash) if cache is not None else None
    if table is not None:
        print(cf.orange("Using cached slice table for {}".format(config.name)))
        return table
    table = build_slice_table(
        config.cover,
        config.grid,
        config.samples_per_cell,
        RngStream(config.seed, SLICE_STREAM),
        args.workers,
        progress=_show_progress(),
    )
    if cache is not None:
        cache.put(config.config_hash, table)
    return table


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _verify_config(config: ExperimentConfig, args: argparse.Namespace, report_path: Optional[str] = None) -> int:
    uncovered = _validate(config, args)
    table = _slice_table(config, args)
    result = run_pipeline(
        config.cover,
        config.handle,
        config.seed,
        grid=config.grid,
        samples_per_cell=config.samples_per_cell,
        validate_samples=config.validate_samples,
        search_cfg=config.search,
        config_hash=config.config_hash,
        table=table,
        uncovered=uncovered,
        workers=args.workers,
    )
    report = result.report
    destination = report_path or config.report_path
    write_json_report(report.to_json_dict(_now()), destination)
    if config.slices_path is not None:
        write_table(result.table.to_frame(), config.slices_path, "csv")
    if config.plot_data_path is not None:
        write_table(objective_curves(result.table, config.handle), config.plot_data_path, "csv")

    intersections = ", ".join(
        "{:.4f}±{:.4f}".format(e.mean, e.std_err) for e in report.intersections
    )
    if report.flagged_cells:
        print(
            cf.orange(
                "{} grid cells had no part clearing 1/t; consider raising samples_per_cell".format(
                    report.flagged_cells
                )
            )
        )
    if report.certified:
        print(
            cf.green(
                "{}: certified m={} theta0={:.6f} intersections [{}]".format(
                    config.name, report.chosen_m, report.chosen_theta0.value, intersections
                )
            )
        )
        if not all(report.reduction_consistent):
            print(cf.orange("{}: direct and reduced intersections disagree".format(config.name)))
        if not report.audit_passed:
            print(cf.red("{}: the 1/t inequality audit failed".format(config.name)))
            return EXIT_ERROR
        return EXIT_OK
    print(
        cf.orange(
            "{}: not certified ({}); best m={} theta0={:.6f} intersections [{}]".format(
                config.name,
                report.outcome.value,
                report.chosen_m,
                report.chosen_theta0.value,
                intersections,
            )
        )
    )
    return EXIT_NOT_CERTIFIED


def verify(args) -> int:
    config = load_config(args.config, workers=args.workers)
    return _verify_config(config, args, args.report)


def _surface_from_args(args) -> SurfaceSpec:
    if args.surface == "sphere":
        return SphereSpec(args.n)
    elif args.surface == "power":
        if args.k is None:
            raise RaimiException("--k is required for power surfaces")
        return PowerSpec(args.n, args.k, args.R)
    else:
        assert args.surface == "cylinder"
        if args.omega is None or args.omega_lo is None or args.omega_hi is None:
            raise RaimiException("--omega, --omega-lo and --omega-hi are required for cylinders")
        try:
            omega_lo = parse_float_list(args.omega_lo)
            omega_hi = parse_float_list(args.omega_hi)
        except ValueError as ex:
            raise RaimiException(str(ex)) from ex
        spec = CylinderSpec(args.n, args.R, parse(args.omega, args.n - 2), omega_lo, omega_hi)
        validate_surface(spec)
        return spec


def check_hypotheses(args) -> int:
    if args.config is not None:
        spec = load_config(args.config, workers=args.workers).surface
    elif args.surface is not None:
        spec = _surface_from_args(args)
    else:
        raise RaimiException("either --config or --surface must be given")

    print("Checking hypotheses on {}".format(describe(spec)))
    results = run_all(
        spec,
        args.samples,
        RngStream(args.seed, HYPOTHESIS_STREAM),
        z=args.z,
        p_min=args.p_min,
        workers=args.workers,
    )
    for result in results:
        line = "  {:<20} {:>12.4g}  {}".format(result.name, result.statistic, result.detail)
        print(cf.green(line) if result.passed else cf.red(line))
    if all(result.passed for result in results):
        print(cf.green("All suites passed"))
        return EXIT_OK
    print(cf.red("Some suites failed"))
    return EXIT_NOT_CERTIFIED


def partition_stats(args) -> int:
    config = load_config(args.config, workers=args.workers)
    handle = config.handle
    lifted = partition_masses(
        handle, args.samples, RngStream(config.seed, MASS_STREAM), args.workers
    )
    base = estimate_base_masses(
        config.partition, args.samples, RngStream(config.seed, VALIDATION_STREAM), args.workers
    )
    lift_ok = [s.agrees_with(b, DEFAULT_Z) for s, b in zip(lifted, base)]
    stats = {
        "schema_version": "1",
        "partition": {"scheme": config.partition.scheme, **config.partition.parameters()},
        "surface_masses": [e.to_dict() for e in lifted],
        "base_masses": [e.to_dict() for e in base],
        "lift_identity": lift_ok,
        "total_mass": sum(e.mean for e in lifted),
    }
    passed = all(lift_ok)
    if isinstance(config.partition, DigitBlocks):
        presence = scale_presence(
            config.partition,
            args.depth,
            args.samples_per_interval,
            RngStream(config.seed, MASS_STREAM).substream(1),
            args.workers,
        )
        stats["scale_presence"] = {
            "depth": args.depth,
            "passed": presence.passed,
            "missing": presence.missing[:100],
        }
        passed = passed and presence.passed

    for i, (s, b) in enumerate(zip(lifted, base)):
        line = "  class {}: surface {:.4f}±{:.4f}  base {:.4f}±{:.4f}".format(
            i + 1, s.mean, s.std_err, b.mean, b.std_err
        )
        print(cf.green(line) if lift_ok[i] else cf.red(line))

    if args.write_filename is not None:
        write_json_report(stats, args.write_filename)
    else:
        print(json.dumps(stats, sort_keys=True, indent=2))
    return EXIT_OK if passed else EXIT_NOT_CERTIFIED


def slices(args) -> int:
    config = load_config(args.config, workers=args.workers)
    _validate(config, args)
    table = _slice_table(config, args)
    write_table(table.to_frame(), args.output, args.format)
    print(cf.green("Wrote {} x {} slice table to {}".format(table.grid_size, table.t, args.output)))
    return EXIT_OK


def plot_data(args) -> int:
    config = load_config(args.config, workers=args.workers)
    _validate(config, args)
    table = _slice_table(config, args)
    write_table(objective_curves(table, config.handle), args.output, "csv")
    print(cf.green("Wrote objective curves to {}".format(args.output)))
    return EXIT_OK


def _run_guarded(command, args) -> int:
    try:
        return command(args)
    except RaimiException as ex:
        print(cf.red(str(ex)))
        if args.verbose:
            traceback.print_exc()
        return EXIT_ERROR


def corpus(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.directory, "*.cfg")))
    if not paths:
        raise RaimiException("no *.cfg files in {}".format(args.directory))
    codes = {}
    for path in paths:
        codes[path] = _run_guarded(
            lambda a: _verify_config(load_config(path, workers=a.workers), a), args
        )
    certified = sum(1 for code in codes.values() if code == EXIT_OK)
    print("{} of {} experiments certified".format(certified, len(codes)))
    for path, code in codes.items():
        if code != EXIT_OK:
            print(cf.orange("  {} exited with {}".format(os.path.basename(path), code)))
    if any(code == EXIT_ERROR for code in codes.values()):
        return EXIT_ERROR
    if any(code == EXIT_NOT_CERTIFIED for code in codes.values()):
        return EXIT_NOT_CERTIFIED
    return EXIT_OK


def _add_config_argument(subparser):
    subparser.add_argument("--config", required=True, help="Experiment file")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raimi")

    parser.add_argument(
        "--workers", type=int, help="Number of estimation threads (capped by RAIMI_THREADS)"
    )
    parser.add_argument(
        "--cache-dir", help="Directory holding the slice table cache (default ~/.raimi)"
    )
    parser.add_argument(
        "--no-cache", action="store_true", help="Neither read nor write cached slice tables"
    )
    parser.add_argument("--verbose", action="store_true", help="Log progress and show tracebacks")

    subparsers = parser.add_subparsers(title="commands", dest="command")

    parser_verify = subparsers.add_parser(
        "verify", help="Run the full pipeline and write a verification report"
    )
    _add_config_argument(parser_verify)
    parser_verify.add_argument(
        "--report", help="Where to write the JSON report. Defaults to [run] report in the config"
    )
    parser_verify.set_defaults(func=verify)

    parser_check = subparsers.add_parser(
        "check-hypotheses",
        help="Run the equivariance and disintegration suites on one surface",
    )
    parser_check.add_argument("--config", help="Take the surface from this experiment file")
    parser_check.add_argument("--surface", choices=["sphere", "power", "cylinder"])
    parser_check.add_argument("--n", type=int, default=3)
    parser_check.add_argument("--k", type=float)
    parser_check.add_argument("--R", type=float, default=1.0)
    parser_check.add_argument("--omega", help="Set expression over R^(n-2)")
    parser_check.add_argument("--omega-lo", help="Comma separated lower corner of omega's box")
    parser_check.add_argument("--omega-hi", help="Comma separated upper corner of omega's box")
    parser_check.add_argument(
        "--samples",
        type=int,
        default=1_000_000,
        help="Samples for the disintegration, angle uniformity and Archimedes checks; "
        f"the other suites use at most {GEOMETRIC_SAMPLE_CAP}",
    )
    parser_check.add_argument("--seed", type=int, default=0)
    parser_check.add_argument("--z", type=float, default=DEFAULT_Z)
    parser_check.add_argument("--p-min", type=float, default=DEFAULT_P_MIN)
    parser_check.set_defaults(func=check_hypotheses)

    parser_stats = subparsers.add_parser(
        "partition-stats", help="Class masses of the lifted partition and scale presence"
    )
    _add_config_argument(parser_stats)
    parser_stats.add_argument("--samples", type=int, default=100_000)
    parser_stats.add_argument("--depth", type=int, default=10)
    parser_stats.add_argument("--samples-per-interval", type=int, default=10_000)
    parser_stats.add_argument(
        "--write-filename",
        help="If set, will write the statistics to WRITE_FILENAME. Otherwise, will write to stdout",
    )
    parser_stats.set_defaults(func=partition_stats)

    parser_slices = subparsers.add_parser("slices", help="Dump the slice table")
    _add_config_argument(parser_slices)
    parser_slices.add_argument("--output", required=True)
    parser_slices.add_argument("--format", choices=list(TABLE_FORMATS), default="csv")
    parser_slices.set_defaults(func=slices)

    parser_plot = subparsers.add_parser(
        "plot-data", help="Write the objective J(m, theta0) on the grid as CSV"
    )
    _add_config_argument(parser_plot)
    parser_plot.add_argument("--output", required=True)
    parser_plot.set_defaults(func=plot_data)

    parser_corpus = subparsers.add_parser(
        "corpus", help="Verify every *.cfg experiment in a directory"
    )
    parser_corpus.add_argument("directory")
    parser_corpus.set_defaults(func=corpus)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return _run_guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
