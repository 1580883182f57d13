#!/usr/bin/env python
# encoding: utf-8

"""Command line: validate | analyze | synth

Exit codes: 0 success, 1 data or validation failure, 2 I/O failure,
3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .affinity import AffinityException
from .base_reader import BaseReaderException
from .choropleth import ChoroplethException
from .csv_table_reader import TableReaderException
from .geojson_reader import GeoJsonReaderException
from .pipeline import analyze, build_report, load_region, write_analysis, write_synth
from .region import RegionIngestException, ValidationReport
from .regression import RegressionException
from .run_config import RunConfig
from .settings import SettingsException
from .spatial_stats import SpatialStatsException
from .synth import SynthException
from .weights import WeightsException

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


EXIT_OK, EXIT_DATA, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

DATA_ERRORS = (
    SettingsException,
    BaseReaderException,
    TableReaderException,
    GeoJsonReaderException,
    RegionIngestException,
    AffinityException,
    WeightsException,
    SynthException,
    ChoroplethException,
)

NUMERIC_ERRORS = (SpatialStatsException, RegressionException, np.linalg.LinAlgError)


def exit_code(exc: BaseException) -> int:
    """Map an exception onto the exit code contract"""

    if isinstance(exc, OSError):
        return EXIT_IO

    if isinstance(exc, NUMERIC_ERRORS):
        return EXIT_NUMERIC

    if isinstance(exc, DATA_ERRORS):
        return EXIT_DATA

    raise exc


def cmd_validate(config: RunConfig) -> ValidationReport:
    """Load and join the inputs; print the join summary"""

    _, report, _ = load_region(config)
    print(report.summary())
    return report


def cmd_analyze(config: RunConfig) -> dict[str, Any]:
    """Run the analysis and write all artifacts. Returns the report."""

    analysis = analyze(config)
    write_analysis(analysis)
    return build_report(analysis)


def cmd_synth(config: RunConfig) -> list[Path]:
    """Write the synthetic scenario's input files"""

    files = write_synth(config)
    for file in files:
        print(file)
    return files


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def parser() -> argparse.ArgumentParser:
    """The argument parser"""

    rtn = argparse.ArgumentParser(prog="chronic-affinity",
        description="Chronic disease affinity scores and their spatial clustering")
    rtn.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    rtn.add_argument("command", choices=list(COMMANDS), help="What to do")
    rtn.add_argument("--config", required=True, type=Path, help="TOML run config")
    rtn.add_argument("--out", type=Path, default=None, help="Output directory (overrides config)")
    rtn.add_argument("--seed", type=int, default=None, help="Random seed (overrides config)")
    rtn.add_argument("--jobs", type=int, default=None, help="Parallel workers for permutations")
    rtn.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    return rtn


def load_config(args: argparse.Namespace) -> RunConfig:
    """The config file plus command line overrides"""

    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["INFERENCE_SEED"] = args.seed
    if args.out is not None:
        overrides["OUTPUT_DIR"] = str(args.out.resolve())
    if args.jobs is not None:
        overrides["INFERENCE_N_JOBS"] = args.jobs

    return RunConfig.from_toml(args.config, **overrides)


def main(argv: None|Sequence[str] = None) -> int:
    """Entry point of the console script"""

    args = parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args)
        COMMANDS[args.command](config)
    except (OSError, *DATA_ERRORS, *NUMERIC_ERRORS) as exc:
        code = exit_code(exc)
        logger.error("%s failed (exit %s): %s", args.command, code, exc)
        print(f"error: {exc}", file=sys.stderr)
        return code

    return EXIT_OK
