#!/usr/bin/env python
# encoding: utf-8

"""The joined, tract level study region and the tables it is built from"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import pandas as pd
from shapely.geometry.base import BaseGeometry

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


JOIN_POLICIES = ("drop_incomplete", "strict")

SOURCES = ("prevalence", "indicators", "geometry")


class RegionIngestException(Exception):
    """RegionIngestException"""


@dataclass(frozen=True)
class TractTable:
    """Numeric per-tract values. Index: tract id, one column per variable.
    Missing values are NaN."""

    data: pd.DataFrame
    flagged: frozenset[tuple[str, str]] = frozenset()
    warnings: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        """Variable names in column order"""
        return list(self.data.columns)

    @property
    def tract_ids(self) -> list[str]:
        """Tract ids in file order"""
        return list(self.data.index)

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class PrevalenceTable(TractTable):
    """Crude prevalence of each chronic condition, in percent of adults"""

    @property
    def condition_names(self) -> list[str]:
        """The conditions, in column order"""
        return self.names


@dataclass(frozen=True)
class IndicatorTable(TractTable):
    """Socio-economic indicators and demographic controls"""

    @property
    def indicator_names(self) -> list[str]:
        """The indicators, in column order"""
        return self.names


@dataclass(frozen=True)
class GeometrySet:
    """Polygons or multipolygons keyed by tract id. Planar coordinates,
    closed rings, exterior rings counter-clockwise."""

    geometries: dict[str, BaseGeometry]
    crs_note: str = ""
    warnings: tuple[str, ...] = ()

    # (tract id or feature position, message) of features that were excluded
    errors: tuple[tuple[str, str], ...] = ()

    @property
    def tract_ids(self) -> list[str]:
        """Ids in stored order"""
        return list(self.geometries.keys())

    def __len__(self) -> int:
        return len(self.geometries)

    def __iter__(self) -> Iterator[str]:
        return iter(self.geometries)

    def __getitem__(self, tract_id: str) -> BaseGeometry:
        return self.geometries[tract_id]

    def __contains__(self, tract_id: str) -> bool:
        return tract_id in self.geometries

    def subset(self, tract_ids: Sequence[str]) -> "GeometrySet":
        """The geometries for 'tract_ids', in that order"""
        return GeometrySet(
            {x: self.geometries[x] for x in tract_ids},
            crs_note=self.crs_note,
            warnings=self.warnings,
            errors=self.errors,
        )

    def centroids(self) -> np.ndarray:
        """Area weighted centroids, shape (n, 2), in stored order"""
        return np.array([[g.centroid.x, g.centroid.y] for g in self.geometries.values()])

    def bounds(self) -> tuple[float, float, float, float]:
        """(minx, miny, maxx, maxy) of all geometries"""
        if not self.geometries:
            raise RegionIngestException("Empty geometry set has no bounds")

        arr = np.array([g.bounds for g in self.geometries.values()])
        return (arr[:, 0].min(), arr[:, 1].min(), arr[:, 2].max(), arr[:, 3].max())

    def diagonal(self) -> float:
        """Length of the bounding box diagonal"""
        minx, miny, maxx, maxy = self.bounds()
        return float(np.hypot(maxx - minx, maxy - miny))


@dataclass
class ValidationReport:
    """What happened during the join. Every input tract is either joined
    or listed in 'dropped'."""

    dropped: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    # (tract id, variable) of values outside their valid range, kept as is
    flagged: list[tuple[str, str]] = field(default_factory=list)

    # Number of tracts per source, and after the join
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """No tract was dropped"""
        return not self.dropped

    def summary(self) -> str:
        """Multi-line human readable summary"""
        lines = [f"{src}: {self.counts.get(src, 0)} tracts" for src in SOURCES]
        lines.append(f"joined: {self.counts.get('joined', 0)} tracts")
        lines.append(f"dropped: {len(self.dropped)} tracts")
        lines += [f"  {tract_id}: {reason}" for tract_id, reason in self.dropped]
        lines.append(f"out of range: {len(self.flagged)} values")
        lines += [f"  {tract_id}: {name}" for tract_id, name in self.flagged]
        lines.append(f"warnings: {len(self.warnings)}")
        lines += [f"  {x}" for x in self.warnings]
        return "\n".join(lines)

    def as_dict(self) -> dict:
        """For the JSON report"""
        return {
            "counts": dict(self.counts),
            "dropped": [{"tract_id": x, "reason": y} for x, y in self.dropped],
            "flagged": [{"tract_id": x, "variable": y} for x, y in self.flagged],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class StudyRegion:
    """Prevalences, indicators and geometries aligned to one canonical tract
    order (lexicographically sorted tract ids)."""

    tract_ids: tuple[str, ...]
    prevalence: pd.DataFrame
    indicators: pd.DataFrame
    geometry: GeometrySet
    validation: ValidationReport

    @property
    def n(self) -> int:
        """Number of tracts"""
        return len(self.tract_ids)

    @property
    def condition_names(self) -> list[str]:
        """The chronic conditions"""
        return list(self.prevalence.columns)

    @property
    def indicator_names(self) -> list[str]:
        """The indicators and controls"""
        return list(self.indicators.columns)

    def column(self, name: str) -> pd.Series:
        """A prevalence or indicator column by name"""
        if name in self.prevalence.columns:
            return self.prevalence[name]

        if name in self.indicators.columns:
            return self.indicators[name]

        raise RegionIngestException(f"Variable not found in region: '{name}'")

    def frame(self) -> pd.DataFrame:
        """Prevalences and indicators side by side"""
        return pd.concat([self.prevalence, self.indicators], axis=1)

    def tables(self) -> tuple[PrevalenceTable, IndicatorTable, GeometrySet]:
        """The region's own tables, e.g. to join them again"""
        return (
            PrevalenceTable(self.prevalence.copy()),
            IndicatorTable(self.indicators.copy()),
            self.geometry,
        )


def join_region(prevalence: PrevalenceTable,
    indicators: IndicatorTable,
    geometry: GeometrySet,
    policy: str = "drop_incomplete"
) -> tuple[StudyRegion, ValidationReport]:
    """Inner join of the three sources on the tract id.

    'drop_incomplete' drops tracts missing from any source, or having any
    missing prevalence or indicator value. 'strict' raises instead, and also
    raises on values flagged out of range, which 'drop_incomplete' keeps and
    lists in the report.
    """

    if policy not in JOIN_POLICIES:
        raise RegionIngestException(f"Invalid missing-data policy: '{policy}'")

    present = {
        "prevalence": set(prevalence.data.index),
        "indicators": set(indicators.data.index),
        "geometry": set(geometry.tract_ids),
    }

    incomplete_prevalence = set(prevalence.data.index[prevalence.data.isna().any(axis=1)])
    incomplete_indicators = set(indicators.data.index[indicators.data.isna().any(axis=1)])

    report = ValidationReport()
    report.counts = {src: len(ids) for src, ids in present.items()}
    report.warnings += list(prevalence.warnings)
    report.warnings += list(indicators.warnings)
    report.warnings += list(geometry.warnings)
    report.warnings += [f"geometry feature {x}: {msg}" for x, msg in geometry.errors]
    report.flagged = sorted(prevalence.flagged | indicators.flagged)

    joined = []
    for tract_id in sorted(set().union(*present.values())):
        reasons = [f"no {src}" for src in SOURCES if tract_id not in present[src]]
        if tract_id in incomplete_prevalence:
            reasons.append("missing prevalence values")
        if tract_id in incomplete_indicators:
            reasons.append("missing indicator values")

        if reasons:
            report.dropped.append((tract_id, "; ".join(reasons)))
        else:
            joined.append(tract_id)

    if report.dropped and policy == "strict":
        names = ", ".join(f"{x} ({y})" for x, y in report.dropped)
        raise RegionIngestException(f"Sources do not match (strict policy): {names}")

    if report.flagged and policy == "strict":
        names = ", ".join(f"{x} ({y})" for x, y in report.flagged)
        raise RegionIngestException(f"Values out of range (strict policy): {names}")

    for tract_id, reason in report.dropped:
        logger.warning("Dropped tract %s: %s", tract_id, reason)

    report.counts["joined"] = len(joined)
    if len(joined) < 2:
        raise RegionIngestException(
            f"Joined region has {len(joined)} tract(s); at least 2 are required")

    region = StudyRegion(
        tract_ids=tuple(joined),
        prevalence=prevalence.data.loc[joined].astype(float),
        indicators=indicators.data.loc[joined].astype(float),
        geometry=geometry.subset(joined),
        validation=report,
    )

    logger.debug("Joined region: %s tracts, %s dropped", region.n, len(report.dropped))
    return region, report
