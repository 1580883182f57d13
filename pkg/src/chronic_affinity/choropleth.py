#!/usr/bin/env python
# encoding: utf-8

"""SVG choropleth maps of per-tract values or hot spot categories"""

import io
import logging
from dataclasses import dataclass
from typing import Sequence

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.colors import to_hex
from matplotlib.figure import Figure
from matplotlib.patches import PathPatch, Patch
from matplotlib.path import Path as MplPath
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from .region import GeometrySet
from .spatial_stats import DEFAULT_ALPHAS, category_names

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


# Diverging red (hot) to blue (cold)
HOTSPOT_COLORS = {
    "hot99": "#d62f27",
    "hot95": "#ed7551",
    "hot90": "#fab984",
    "notsig": "#f2f2ee",
    "cold90": "#c0d6e8",
    "cold95": "#7ba7cf",
    "cold99": "#4575b5",
}

CONTINUOUS_CMAP = "YlOrRd"

# Fixed ids and no timestamp, so that identical inputs give identical files
SVG_RC = {"svg.hashsalt": "chronic-affinity", "svg.fonttype": "none"}


class ChoroplethException(Exception):
    """ChoroplethException"""


@dataclass(frozen=True)
class ChoroplethMap:
    """The SVG document, plus the fill color per tract and the legend"""

    svg: str
    fills: dict[str, str]
    legend: list[tuple[str, str]]

    @property
    def colors(self) -> set[str]:
        """Distinct fill colors used by the tracts"""
        return set(self.fills.values())


def geometry_path(geom: BaseGeometry) -> MplPath:
    """Polygon or MultiPolygon (incl. holes) as one compound path"""

    if isinstance(geom, Polygon):
        polygons = [geom]
    elif isinstance(geom, MultiPolygon):
        polygons = list(geom.geoms)
    else:
        raise ChoroplethException(f"Unsupported geometry: {geom.geom_type}")

    vertices, codes = [], []
    for poly in polygons:
        for ring in [poly.exterior, *poly.interiors]:
            coords = np.asarray(ring.coords)[:, :2]
            vertices.append(coords)
            codes += [MplPath.MOVETO] + [MplPath.LINETO] * (len(coords) - 2) + [MplPath.CLOSEPOLY]

    return MplPath(np.concatenate(vertices), codes)


def quantile_classes(values: Sequence[float], bins: int = 5) -> tuple[list[int], list[str]]:
    """Class index per value and the class labels. Duplicate quantile
    edges are merged, so fewer classes may result."""

    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise ChoroplethException("Values must be finite")

    if bins < 1:
        raise ChoroplethException(f"bins must be >= 1: {bins}")

    edges = np.unique(np.quantile(values, np.linspace(0, 1, bins + 1)))
    if len(edges) < 2:
        return [0] * len(values), [f"{edges[0]:.6g}"]

    classes = pd.cut(values, edges, include_lowest=True, labels=False)
    labels = [f"{lo:.6g} - {hi:.6g}" for lo, hi in zip(edges[:-1], edges[1:])]
    return [int(x) for x in classes], labels


def render_choropleth(geometry: GeometrySet,
    values: None|Sequence[float] = None,
    categories: None|Sequence[str] = None,
    title: str = "",
    bins: int = 5,
    cmap: str = CONTINUOUS_CMAP,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    description: str = ""
) -> ChoroplethMap:
    """Continuous values are quantile binned; hot spot categories use the
    fixed hot/cold palette. 'description' is stored in the SVG metadata
    (e.g. the config hash)."""

    if len(geometry) == 0:
        raise ChoroplethException("Empty geometry set")

    if (values is None) == (categories is None):
        raise ChoroplethException("Provide either values or categories")

    ids = geometry.tract_ids
    data = values if values is not None else categories
    if len(data) != len(ids):
        raise ChoroplethException(f"Expected {len(ids)} values, found {len(data)}")

    if values is not None:
        classes, labels = quantile_classes(values, bins)
        palette = matplotlib.colormaps[cmap].resampled(max(len(labels), 2))
        colors = [to_hex(palette(i)) for i in range(len(labels))]
        fills = {x: colors[c] for x, c in zip(ids, classes)}
        legend = list(zip(labels, colors))
    else:
        names = category_names(alphas)
        unknown = sorted(set(categories) - set(names))
        if unknown:
            raise ChoroplethException(f"Unknown categories: {unknown}")

        fills = {x: HOTSPOT_COLORS[c] for x, c in zip(ids, categories)}
        legend = [(x, HOTSPOT_COLORS[x]) for x in names]

    svg = _draw(geometry, fills, legend, title, description)
    return ChoroplethMap(svg, fills, legend)


def _draw(geometry: GeometrySet, fills: dict[str, str], legend: list[tuple[str, str]],
    title: str, description: str
) -> str:

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(7, 6))
        ax = fig.add_subplot()
        for tract_id in geometry.tract_ids:
            patch = PathPatch(geometry_path(geometry[tract_id]),
                facecolor=fills[tract_id], edgecolor="#606060", linewidth=0.3)
            patch.set_gid(tract_id)
            ax.add_patch(patch)

        minx, miny, maxx, maxy = geometry.bounds()
        ax.set_xlim(minx, maxx)
        ax.set_ylim(miny, maxy)
        ax.set_aspect("equal")
        ax.set_axis_off()
        if title:
            ax.set_title(title)

        handles = [Patch(facecolor=color, edgecolor="#606060", label=label) for label, color in legend]
        ax.legend(handles=handles, loc="center left", bbox_to_anchor=(1.0, 0.5), frameon=False)

        buf = io.StringIO()
        fig.savefig(buf, format="svg", bbox_inches="tight",
            metadata={"Date": None, "Title": title or None, "Description": description or None})

    return buf.getvalue()
