#!/usr/bin/env python
# encoding: utf-8

"""Synthetic study regions: lattice tracts, spatially autocorrelated
deprivation, planted hot spots and condition prevalences driven by it"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.sparse.csgraph import dijkstra
from shapely import box

from .region import GeometrySet, IndicatorTable, PrevalenceTable
from .table_schema import IndicatorSchema, PrevalenceSchema
from .weights import WeightsBuilder, WeightsMatrix

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


RNG_NAME = "numpy.random.PCG64, SeedSequence(seed, spawn_key=(component,))"

# Share of clipped cells above which the generator warns
CLIP_WARN_SHARE = 0.01

DECIMALS = 4

# name -> (baseline prevalence in percent, spread per unit of deprivation)
CONDITIONS = {
    "arthritis": (25.0, 5.0),
    "asthma": (10.0, 2.5),
    "diabetes": (12.0, 3.0),
    "heart_disease": (7.0, 1.75),
    "obesity": (32.0, 6.0),
    "stroke": (4.0, 1.0),
}

# name -> (kind, intercept, slope on deprivation, noise sd)
INDICATORS = {
    "poverty": ("percent", 22.0, 6.0, 4.0),
    "unemployment": ("percent", 12.0, 3.0, 2.0),
    "crime": ("index", 200.0, 50.0, 40.0),
    "smoking": ("percent", 22.0, 4.0, 3.0),
    "male": ("percent", 48.0, 0.0, 2.0),
    "age67": ("percent", 12.0, -1.0, 3.0),
    "population": ("count", 4000.0, 0.0, 1000.0),
}

# Random streams of one seed
SAR_STREAM, CONDITION_STREAM, INDICATOR_STREAM = 0, 1, 2


class SynthException(Exception):
    """SynthException"""


@dataclass(frozen=True)
class LatticeSpec:
    """rows x cols square cells with side 'cell_size'"""

    rows: int
    cols: int
    cell_size: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.rows, int) and isinstance(self.cols, int)
                and self.rows >= 1 and self.cols >= 1):
            raise SynthException(f"rows and cols must be positive integers: {self}")

        if self.rows * self.cols < 4:
            raise SynthException(f"A lattice needs at least 4 cells: {self}")

        if not self.cell_size > 0:
            raise SynthException(f"cell_size must be > 0: {self.cell_size}")

    @property
    def n(self) -> int:
        """Number of cells"""
        return self.rows * self.cols


@dataclass(frozen=True)
class SarSpec:
    """x = (I - rho W)^-1 eps with eps ~ N(0, sigma^2)"""

    rho: float
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise SynthException(f"rho must be in (-1, 1): {self.rho}")

        if not self.sigma > 0:
            raise SynthException(f"sigma must be > 0: {self.sigma}")


@dataclass(frozen=True)
class HotspotSpec:
    """Add 'delta' (in units of the field's sd) within 'radius' graph steps"""

    row: int
    col: int
    radius: int = 2
    delta: float = 3.0


@dataclass(frozen=True)
class Scenario:
    """Everything needed to generate one synthetic region"""

    lattice: LatticeSpec
    sar: SarSpec
    hotspots: tuple[HotspotSpec, ...] = ()
    conditions: tuple[str, ...] = tuple(CONDITIONS)
    loadings: None|tuple[float, ...] = None
    noise_sd: float = 0.5
    weights: str = "rook"

    @property
    def seed(self) -> int:
        """The seed of all random streams"""
        return self.sar.seed


@dataclass
class SynthDataset:
    """The generated tables, ready to be written or joined"""

    prevalence: PrevalenceTable
    indicators: IndicatorTable
    geometry: GeometrySet
    deprivation: pd.Series
    planted: frozenset[str] = frozenset()
    clip_events: int = 0
    warnings: list[str] = field(default_factory=list)


def component_rng(seed: int, component: int) -> np.random.Generator:
    """One independent stream per generator component"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(component,))))


def cell_id(row: int, col: int) -> str:
    """e.g. r0c1"""
    return f"r{row}c{col}"


def generate_lattice_region(spec: LatticeSpec) -> tuple[GeometrySet, list[str]]:
    """rows x cols squares, ids 'r{i}c{j}'. Row 0 is at the bottom."""

    cs = spec.cell_size
    cells = {
        cell_id(i, j): box(j * cs, i * cs, (j + 1) * cs, (i + 1) * cs, ccw=True)
        for i in range(spec.rows)
        for j in range(spec.cols)
    }

    ids = sorted(cells)
    return GeometrySet({x: cells[x] for x in ids}, crs_note="synthetic lattice"), ids


def generate_sar_field(w: WeightsMatrix, spec: SarSpec) -> np.ndarray:
    """Simultaneous autoregressive field, by a dense direct solve"""

    if w.standardization != "row_standardized":
        raise SynthException("The SAR generator requires row standardized weights")

    if w.islands:
        raise SynthException(f"The SAR generator requires weights without islands: {w.islands}")

    eps = component_rng(spec.seed, SAR_STREAM).normal(0.0, spec.sigma, w.n)
    if spec.rho == 0:
        return eps

    system = np.identity(w.n) - spec.rho * w.to_dense()
    try:
        return scipy.linalg.solve(system, eps)
    except scipy.linalg.LinAlgError as exc:
        raise SynthException(f"(I - rho W) is singular for rho={spec.rho}") from exc


def graph_ball(w: WeightsMatrix, center_index: int, radius_steps: int) -> list[int]:
    """Indices within 'radius_steps' edges of the center (breadth first)"""

    if not 0 <= center_index < w.n:
        raise SynthException(f"Center index out of range [0, {w.n}): {center_index}")

    if radius_steps < 0:
        raise SynthException(f"radius_steps must be >= 0: {radius_steps}")

    dist = dijkstra(w.matrix, directed=False, unweighted=True,
        indices=center_index, limit=radius_steps + 0.5)
    return [int(i) for i in np.flatnonzero(np.isfinite(dist))]


def plant_hotspot(x: Sequence[float], w: WeightsMatrix, center_index: int,
    radius_steps: int, delta: float
) -> tuple[np.ndarray, list[int]]:
    """Add delta to every tract within radius_steps (graph distance on w).
    Returns the new values and the planted indices."""

    x = np.array(x, dtype=float)
    if len(x) != w.n:
        raise SynthException(f"Expected {w.n} values, found {len(x)}")

    planted = graph_ball(w, center_index, radius_steps)
    x[planted] += delta
    return x, planted


def _standardize(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    return (values - values.mean()) / sd if sd > 0 else values - values.mean()


def _clip(values: np.ndarray, kind: str) -> tuple[np.ndarray, int]:
    upper = 100.0 if kind == "percent" else np.inf
    clipped = np.clip(values, 0.0, upper)
    events = int((clipped != values).sum())
    if kind == "count":
        clipped = np.round(clipped)
    else:
        clipped = np.round(clipped, DECIMALS)
    return clipped, events


def generate_condition_table(deprivation: Sequence[float],
    tract_ids: Sequence[str],
    conditions: Sequence[str] = tuple(CONDITIONS),
    loadings: None|Sequence[float] = None,
    noise_sd: float = 0.5,
    seed: int = 0
) -> tuple[PrevalenceTable, IndicatorTable, int]:
    """condition_k = a_k + b_k (loading_k z + noise_sd e), with z the
    standardized deprivation. Indicators are affine in z plus independent
    noise. Values are clipped to their valid range; returns the number of
    clipped cells as well."""

    z = _standardize(np.asarray(deprivation, dtype=float))
    if len(z) != len(tract_ids):
        raise SynthException("Number of deprivation values and tract ids differ")

    if loadings is None:
        loadings = [1.0] * len(conditions)

    if len(loadings) != len(conditions):
        raise SynthException(f"Expected {len(conditions)} loadings, found {len(loadings)}")

    if any(x < 0 for x in loadings):
        raise SynthException(f"Loadings must not be negative: {loadings}")

    if noise_sd < 0:
        raise SynthException(f"noise_sd must be >= 0: {noise_sd}")

    index = pd.Index(list(tract_ids), name="tract_id")
    events = 0

    rng = component_rng(seed, CONDITION_STREAM)
    prevalence = pd.DataFrame(index=index)
    for name, loading in zip(conditions, loadings):
        base, spread = CONDITIONS.get(name, (10.0, 2.5))
        noise = rng.standard_normal(len(z))
        values, clipped = _clip(base + spread * (loading * z + noise_sd * noise), "percent")
        prevalence[name] = values
        events += clipped

    rng = component_rng(seed, INDICATOR_STREAM)
    indicators = pd.DataFrame(index=index)
    for name, (kind, intercept, slope, sd) in INDICATORS.items():
        noise = rng.standard_normal(len(z))
        values, clipped = _clip(intercept + slope * z + sd * noise, kind)
        indicators[name] = values
        events += clipped

    return PrevalenceTable(prevalence), IndicatorTable(indicators), events


def generate_scenario(scenario: Scenario) -> SynthDataset:
    """Lattice, SAR deprivation, planted hot spots and the tables"""

    lattice = scenario.lattice
    geometry, ids = generate_lattice_region(lattice)

    w = WeightsBuilder(scenario.weights).build(geometry, transform="row_standardized")
    deprivation = generate_sar_field(w, scenario.sar)

    planted: set[str] = set()
    sd = float(deprivation.std())
    for spot in scenario.hotspots:
        if not (0 <= spot.row < lattice.rows and 0 <= spot.col < lattice.cols):
            raise SynthException(f"Hot spot outside the lattice: {spot}")

        center = ids.index(cell_id(spot.row, spot.col))
        deprivation, idx = plant_hotspot(deprivation, w, center, spot.radius, spot.delta * sd)
        planted.update(ids[i] for i in idx)

    prevalence, indicators, events = generate_condition_table(
        deprivation, ids, scenario.conditions, scenario.loadings, scenario.noise_sd, scenario.seed)

    rtn = SynthDataset(
        prevalence,
        indicators,
        geometry,
        pd.Series(deprivation, index=pd.Index(ids, name="tract_id"), name="deprivation"),
        frozenset(planted),
        events,
    )

    cells = prevalence.data.size + indicators.data.size
    if events > CLIP_WARN_SHARE * cells:
        rtn.warnings.append(f"{events} of {cells} generated values were clipped")
        logger.warning(rtn.warnings[-1])

    logger.debug("Synthetic region: %s tracts, %s planted, %s clip events",
        lattice.n, len(planted), events)
    return rtn


def prevalence_schema(conditions: Sequence[str]) -> PrevalenceSchema:
    """The default schema, restricted to 'conditions'. Unknown conditions
    use their name as CSV header."""

    default = PrevalenceSchema()
    known = dict(zip(default.names, default.columns))
    return default.with_columns({x: known.get(x, x) for x in conditions})


def indicator_schema() -> IndicatorSchema:
    """The default indicator schema"""
    return IndicatorSchema()
