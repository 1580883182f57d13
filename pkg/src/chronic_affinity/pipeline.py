#!/usr/bin/env python
# encoding: utf-8

"""Load, analyze and write: the steps behind the command line"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import __version__
from . import spatial_stats, synth
from .affinity import (AFFINITY, AffinityResult, affinity_correlates, affinity_scores,
    correlation_matrix, descriptive_stats)
from .choropleth import render_choropleth
from .csv_table_reader import parse_indicator_csv, parse_prevalence_csv
from .geojson_reader import parse_geometry
from .region import StudyRegion, ValidationReport, join_region
from .regression import AffinityModel, fit_affinity_models
from .run_config import RunConfig
from .spatial_stats import HotSpotResult, MoranResult
from .weights import WeightsBuilder, WeightsMatrix
from .writers import ArtifactSet, output_lock, write_geojson, write_json, write_table_csv, write_text

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


REPORT_FILE = "report.json"
RESULTS_FILE = "results.geojson"

SYNTH_FILES = ("prevalence.csv", "indicators.csv", "geometry.geojson")

# Indicator maps, if the indicator exists
INDICATOR_MAPS = ("poverty", "unemployment", "crime")


@dataclass
class Analysis:
    """Everything computed by analyze()"""

    config: RunConfig
    region: StudyRegion
    affinity: AffinityResult
    w_moran: WeightsMatrix
    w_gi: WeightsMatrix
    moran: MoranResult
    hotspots: HotSpotResult
    models: dict[str, AffinityModel]
    input_digests: dict[str, str] = field(default_factory=dict)

    def results_frame(self) -> pd.DataFrame:
        """Per-tract inputs and results, as written to the result GeoJSON"""

        rtn = pd.concat([self.region.prevalence, self.region.indicators], axis=1)
        rtn[AFFINITY] = self.affinity.score.astype(int)
        rtn["gi_z"] = self.hotspots.gi_z
        rtn["gi_p"] = self.hotspots.p
        rtn["hotspot_cat"] = self.hotspots.category
        rtn["hotspot_cat_raw"] = self.hotspots.category_raw
        return rtn


def load_region(config: RunConfig) -> tuple[StudyRegion, ValidationReport, dict[str, str]]:
    """Read the input files (or generate the synthetic scenario) and join them.
    Also returns SHA-256 digests of the input files."""

    if config.is_synth:
        data = synth.generate_scenario(config.scenario())
        region, report = join_region(data.prevalence, data.indicators, data.geometry,
            config.SCHEMA_MISSING_POLICY)
        report.warnings += data.warnings
        return region, report, {}

    files = {
        "prevalence": config.path(config.INPUTS_PREVALENCE),
        "indicators": config.path(config.INPUTS_INDICATORS),
        "geometry": config.path(config.INPUTS_GEOMETRY),
    }

    # OSError, e.g. missing files, propagates
    raw = {name: file.read_bytes() for name, file in files.items()}
    digests = {name: hashlib.sha256(data).hexdigest() for name, data in raw.items()}

    prevalence = parse_prevalence_csv(raw["prevalence"], config.prevalence_schema())
    indicators = parse_indicator_csv(raw["indicators"], config.indicator_schema())
    geometry = parse_geometry(raw["geometry"], config.SCHEMA_GEOMETRY_ID)

    region, report = join_region(prevalence, indicators, geometry, config.SCHEMA_MISSING_POLICY)
    return region, report, digests


def build_weights(config: RunConfig, region: StudyRegion) -> tuple[WeightsMatrix, WeightsMatrix]:
    """Moran's I weights and Gi* weights (binary, including self)"""

    w_moran = WeightsBuilder(config.WEIGHTS_KIND).build(
        region.geometry, transform=config.WEIGHTS_TRANSFORM, **config.weights_params())

    w_gi = WeightsBuilder(config.WEIGHTS_GI_KIND).build(
        region.geometry, transform="binary", include_self=True, **config.weights_params(gi=True))

    return w_moran, w_gi


def analyze(config: RunConfig) -> Analysis:
    """affinity -> weights -> Moran's I and Gi* -> regression"""

    region, _, digests = load_region(config)
    affinity = affinity_scores(region)
    score = affinity.score.to_numpy(dtype=float)

    w_moran, w_gi = build_weights(config, region)

    if config.INFERENCE_N_PERM > 0:
        moran = spatial_stats.morans_i_permutation(score, w_moran,
            config.INFERENCE_N_PERM, config.INFERENCE_SEED, config.INFERENCE_N_JOBS)
    else:
        moran = spatial_stats.morans_i(score, w_moran)

    hotspots = spatial_stats.getis_ord_gi_star(score, w_gi, config.INFERENCE_ALPHAS)

    models = fit_affinity_models(region, config.REGRESSION_MODELS, config.REGRESSION_METHODS,
        config.REGRESSION_PRIMARY, config.irls_config())

    return Analysis(config, region, affinity, w_moran, w_gi, moran, hotspots, models, digests)


def _table1(analysis: Analysis) -> dict[str, Any]:
    region = analysis.region
    stats = descriptive_stats(region, affinity=analysis.affinity).table
    prevalence_schema = analysis.config.prevalence_schema()
    indicator_schema = analysis.config.indicator_schema()

    rtn = {}
    for name, row in stats.iterrows():
        if name in region.condition_names:
            group = "condition"
            label = prevalence_schema.label(name) if name in prevalence_schema.names else name
        elif name == AFFINITY:
            group = "affinity"
            label = "Number of chronic conditions above the regional mean"
        else:
            group = "indicator"
            label = indicator_schema.label(name) if name in indicator_schema.names else name

        rtn[name] = {"group": group, "label": label, **row.to_dict(), "n": int(row["n"])}

    return rtn


def _table2(analysis: Analysis) -> dict[str, Any]:
    corr = correlation_matrix(analysis.region, affinity=analysis.affinity)
    return {
        "variables": corr.names,
        "n": corr.n,
        "r": corr.r.to_numpy().tolist(),
        "p": corr.p.to_numpy().tolist(),
    }


def build_report(analysis: Analysis) -> dict[str, Any]:
    """The JSON report. Contains nothing that depends on the output location
    or the number of workers."""

    config = analysis.config
    affinity = analysis.affinity
    hotspots = analysis.hotspots

    correlates = affinity_correlates(analysis.region, affinity=affinity)

    warnings = list(analysis.region.validation.warnings)
    warnings += list(analysis.moran.warnings)
    warnings += list(hotspots.warnings)
    for name, model in analysis.models.items():
        if model.error:
            warnings.append(f"{name}: {model.error}")
        for fit in model.fits.values():
            warnings += [f"{name}/{fit.method}: {x}" for x in fit.warnings]

    return {
        "metadata": {
            "package": "chronic_affinity",
            "version": __version__,
            "config_hash": config.config_hash(),
            "seed": config.INFERENCE_SEED,
            "rng": {"permutation": spatial_stats.RNG_NAME, "synth": synth.RNG_NAME},
            "numpy": np.__version__,
            "source": "synthetic" if config.is_synth else "files",
            "input_sha256": analysis.input_digests,
            "n_tracts": analysis.region.n,
        },
        "validation": analysis.region.validation.as_dict(),
        "affinity": {
            "k": affinity.k,
            "thresholds": affinity.thresholds.to_dict(),
            "distribution": affinity.distribution(),
            "share_max": affinity.share_max,
            "correlates": {x: {"r": r, "p": p} for x, (r, p) in correlates.items()},
        },
        "table1": _table1(analysis),
        "table2": _table2(analysis),
        "weights": {
            "moran": analysis.w_moran.describe(),
            "moran_params": analysis.w_moran.params,
            "moran_islands": [analysis.w_moran.tract_ids[i] for i in analysis.w_moran.islands],
            "gi": analysis.w_gi.describe(),
            "gi_params": analysis.w_gi.params,
        },
        "moran": analysis.moran.as_dict(),
        "hotspots": {
            "weights": hotspots.weights,
            "alpha_levels": list(hotspots.alpha_levels),
            "correction": "benjamini-hochberg",
            "counts": hotspots.counts(),
            "counts_raw": hotspots.counts(raw=True),
        },
        "table3": {
            "primary": config.REGRESSION_PRIMARY,
            "models": {name: model.as_dict() for name, model in analysis.models.items()},
        },
        "warnings": warnings,
    }


def write_analysis(analysis: Analysis, out_dir: None|Path = None) -> list[Path]:
    """Write all artifacts. On failure, the files of this run are removed."""

    config = analysis.config
    out_dir = out_dir or config.output_dir
    report = build_report(analysis)
    config_hash = report["metadata"]["config_hash"]
    geometry = analysis.region.geometry
    results = analysis.results_frame()

    with output_lock(out_dir):
        artifacts = ArtifactSet(out_dir)
        try:
            write_json(artifacts.path(REPORT_FILE), report)
            write_geojson(artifacts.path(RESULTS_FILE), geometry, results, config.SCHEMA_GEOMETRY_ID)

            maps = {
                "choropleth_affinity.svg": dict(values=results[AFFINITY].to_list(),
                    title="Chronic affinity"),
                "choropleth_hotspots.svg": dict(categories=analysis.hotspots.category,
                    title="Gi* hot spots (FDR)"),
                "choropleth_hotspots_raw.svg": dict(categories=analysis.hotspots.category_raw,
                    title="Gi* hot spots (uncorrected)"),
            }
            if config.OUTPUT_INDICATOR_MAPS:
                for name in INDICATOR_MAPS:
                    if name in results.columns:
                        maps[f"choropleth_{name}.svg"] = dict(values=results[name].to_list(), title=name)

            for name, kvargs in maps.items():
                svg = render_choropleth(geometry, bins=config.OUTPUT_BINS,
                    alphas=analysis.hotspots.alpha_levels, description=f"config_hash={config_hash}",
                    **kvargs)
                write_text(artifacts.path(name), svg.svg)

            if config.OUTPUT_WEIGHTS:
                write_text(artifacts.path("weights_moran.json"), analysis.w_moran.to_json() + "\n")
                write_text(artifacts.path("weights_gi.json"), analysis.w_gi.to_json() + "\n")
        except BaseException:
            artifacts.remove()
            raise

    logger.info("Written to %s: %s", out_dir, ", ".join(artifacts.names))
    return artifacts.files


def write_synth(config: RunConfig, out_dir: None|Path = None) -> list[Path]:
    """Generate the scenario and write CSV and GeoJSON files that the
    'analyze' command reads with the default schemas"""

    scenario = config.scenario()
    data = synth.generate_scenario(scenario)

    prevalence_schema = synth.prevalence_schema(scenario.conditions)
    prevalence_schema.ID_COLUMN = config.SCHEMA_ID_COLUMN
    indicator_schema = synth.indicator_schema()
    indicator_schema.ID_COLUMN = config.SCHEMA_ID_COLUMN

    out_dir = out_dir or config.output_dir
    with output_lock(out_dir):
        artifacts = ArtifactSet(out_dir)
        try:
            write_table_csv(artifacts.path(SYNTH_FILES[0]), data.prevalence, prevalence_schema)
            write_table_csv(artifacts.path(SYNTH_FILES[1]), data.indicators, indicator_schema)
            write_geojson(artifacts.path(SYNTH_FILES[2]), data.geometry,
                pd.DataFrame(index=data.geometry.tract_ids), config.SCHEMA_GEOMETRY_ID)
        except BaseException:
            artifacts.remove()
            raise

    logger.info("Synthetic region with %s tracts written to %s (planted: %s)",
        scenario.lattice.n, out_dir, len(data.planted))
    return artifacts.files
