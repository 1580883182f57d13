#!/usr/bin/env python
# encoding: utf-8

"""GeoJSON FeatureCollection reader for tract polygons"""

import json
import logging
import math
from typing import Any

from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.polygon import orient
from shapely.validation import explain_validity

from .base_reader import BaseTableReader, TSource
from .region import GeometrySet

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


class GeoJsonReaderException(Exception):
    """GeoJsonReaderException"""


class GeoJsonReader(BaseTableReader):
    """Read Polygon and MultiPolygon features. Coordinates must be planar
    (pre-projected); nothing is reprojected."""

    def __init__(self, id_property: str = "GEOID"):
        super().__init__(id_property)
        self.errors: list[tuple[str, str]] = []


    def load_file(self, raw: bytes) -> dict[str, Any]:
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GeoJsonReaderException(f"Unable to parse GeoJSON: {exc}") from exc

        if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
            raise GeoJsonReaderException("Expected a GeoJSON FeatureCollection")

        return data


    def apply_schema(self, data: dict[str, Any]) -> GeometrySet:
        self.errors = []
        geometries = {}

        for pos, feature in enumerate(data.get("features") or []):
            props = feature.get("properties") or {}
            if props.get(self.id_field) in (None, ""):
                raise GeoJsonReaderException(
                    f"Feature #{pos} has no '{self.id_field}' property")

            tract_id = str(props[self.id_field])
            if tract_id in geometries:
                raise GeoJsonReaderException(f"Duplicate tract id: '{tract_id}'")

            try:
                geometries[tract_id] = self.to_geometry(tract_id, feature.get("geometry") or {})
            except GeoJsonReaderException as exc:
                logger.warning("Feature %s excluded: %s", tract_id, exc)
                self.errors.append((tract_id, str(exc)))

        crs = data.get("crs") or {}
        crs_note = str((crs.get("properties") or {}).get("name", "")) if isinstance(crs, dict) else ""

        return GeometrySet(
            dict(sorted(geometries.items())),
            crs_note=crs_note,
            warnings=tuple(self.warnings),
            errors=tuple(self.errors),
        )


    def to_geometry(self, tract_id: str, geometry: dict[str, Any]) -> Polygon|MultiPolygon:
        """Validate and normalize a GeoJSON geometry"""

        if not isinstance(geometry, dict):
            raise GeoJsonReaderException(f"Not a geometry object: {geometry!r}")

        gtype = geometry.get("type")
        coords = geometry.get("coordinates")

        if gtype == "Polygon":
            return self.to_polygon(tract_id, coords)

        if gtype == "MultiPolygon":
            if not coords or not isinstance(coords, list):
                raise GeoJsonReaderException("Empty or malformed MultiPolygon")

            parts = [self.to_polygon(tract_id, x) for x in coords]
            rtn = MultiPolygon(parts)
            if not rtn.is_valid:
                raise GeoJsonReaderException(f"Invalid MultiPolygon: {explain_validity(rtn)}")

            return rtn

        raise GeoJsonReaderException(f"Unsupported geometry type: '{gtype}'")


    def to_polygon(self, tract_id: str, rings) -> Polygon:
        """Close open rings, check vertex count and validity, orient the
        exterior ring counter-clockwise"""

        if not rings:
            raise GeoJsonReaderException("Polygon without rings")

        try:
            rings = [[self.to_point(pt) for pt in ring] for ring in rings]
        except (ValueError, TypeError, IndexError) as exc:
            raise GeoJsonReaderException(f"Malformed coordinates: {exc}") from exc

        closed = []
        for ring in rings:
            if len(ring) >= 1 and ring[0] != ring[-1]:
                self.warn("tract %s: ring auto-closed", tract_id)
                ring.append(ring[0])

            if len(ring) < 4:
                raise GeoJsonReaderException(f"Ring with {len(ring)} vertices; at least 4 required")

            closed.append(ring)

        poly = Polygon(closed[0], closed[1:])
        if not poly.is_valid:
            raise GeoJsonReaderException(f"Invalid polygon: {explain_validity(poly)}")

        return orient(poly, sign=1.0)


    @staticmethod
    def to_point(pt) -> tuple[float, float]:
        """A finite 2D position; extra dimensions are ignored"""

        if isinstance(pt, (str, bytes)) or len(pt) < 2:
            raise ValueError(f"Not a position: {pt!r}")

        x, y = float(pt[0]), float(pt[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"Not a finite position: {pt!r}")

        return x, y


def parse_geometry(source: TSource, id_property: str = "GEOID") -> GeometrySet:
    """Parse a GeoJSON FeatureCollection of tract polygons"""

    with GeoJsonReader(id_property) as reader:
        return reader.load(source)
