#!/usr/bin/env python
# encoding: utf-8

"""Write the report, result GeoJSON, synthetic input files and weights.

All writers produce deterministic bytes: fixed key order, '\\n' line ends
and shortest round-trip float formatting (which never loses digits).
"""

import json
import logging
import math
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
import pandas as pd
from shapely.geometry import mapping

from .region import GeometrySet, TractTable
from .table_schema import TableSchema

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


LOCK_FILE = ".chronic_affinity.lock"


def to_jsonable(data: Any) -> Any:
    """numpy and pandas scalars to Python; NaN to null, +-inf to "inf"/"-inf"
    (JSON has neither)"""

    if isinstance(data, dict):
        return {str(k): to_jsonable(v) for k, v in data.items()}

    if isinstance(data, (list, tuple, set, frozenset)):
        items = sorted(data) if isinstance(data, (set, frozenset)) else data
        return [to_jsonable(x) for x in items]

    if isinstance(data, np.ndarray):
        return [to_jsonable(x) for x in data.tolist()]

    if isinstance(data, (bool, np.bool_)):
        return bool(data)

    if isinstance(data, (int, np.integer)):
        return int(data)

    if isinstance(data, (float, np.floating)):
        data = float(data)
        if math.isnan(data):
            return None
        if math.isinf(data):
            return "inf" if data > 0 else "-inf"
        return data

    return data


def dumps(data: Any) -> str:
    """Deterministic JSON text"""
    return json.dumps(to_jsonable(data), indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def write_text(file: Path, text: str) -> Path:
    """UTF-8, '\\n' line ends"""
    with open(file, "w", encoding="utf-8", newline="\n") as fd:
        fd.write(text)

    logger.debug("Written: %s", file)
    return file


def write_json(file: Path, data: Any) -> Path:
    """See dumps()"""
    return write_text(file, dumps(data))


def feature_collection(geometry: GeometrySet, properties: pd.DataFrame,
    id_property: str = "GEOID", crs_note: str = ""
) -> dict[str, Any]:
    """GeoJSON FeatureCollection, one feature per tract in 'properties' order"""

    features = []
    for tract_id, row in properties.iterrows():
        props = {id_property: tract_id}
        props.update(row.to_dict())
        features.append({
            "type": "Feature",
            "properties": props,
            "geometry": mapping(geometry[tract_id]),
        })

    rtn: dict[str, Any] = {"type": "FeatureCollection"}
    if crs_note:
        rtn["crs"] = {"type": "name", "properties": {"name": crs_note}}

    rtn["features"] = features
    return rtn


def write_geojson(file: Path, geometry: GeometrySet, properties: pd.DataFrame,
    id_property: str = "GEOID"
) -> Path:
    """Properties may be empty (no columns)"""
    return write_json(file, feature_collection(geometry, properties, id_property, geometry.crs_note))


def table_csv(table: TractTable, schema: TableSchema) -> str:
    """CSV text with the schema's header names. Counts are written as integers."""

    data = pd.DataFrame(index=table.data.index)
    for name, column in zip(schema.names, schema.columns):
        values = table.data[name]
        if schema.kind(name) == "count":
            values = values.round().astype("Int64")
        data[column] = values

    data.index.name = schema.ID_COLUMN
    return data.to_csv(lineterminator="\n")


def write_table_csv(file: Path, table: TractTable, schema: TableSchema) -> Path:
    """See table_csv()"""
    return write_text(file, table_csv(table, schema))


def lock_is_stale(lock: Path) -> bool:
    """True if the lock file names a process that no longer exists. A lock
    without a readable pid is never stale; it may still be being written."""

    try:
        pid = int(lock.read_text(encoding="ascii").strip())
    except (OSError, ValueError):
        return False

    # Signal 0 terminates the process on Windows
    if pid <= 0 or os.name == "nt":
        return False

    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return True
    except (OSError, OverflowError):
        return False

    return False


@contextmanager
def output_lock(out_dir: Path) -> Iterator[Path]:
    """Exclusive use of the output directory. A lock held by a live process
    is an OSError; the lock of a process that has died is removed."""

    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        if not lock_is_stale(lock):
            raise FileExistsError(f"Output directory is locked by another run: {lock}") from exc

        logger.warning("Removing stale lock of a process that no longer exists: %s", lock)
        lock.unlink(missing_ok=True)
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)

    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


class ArtifactSet:
    """Track written files, to remove them if the run fails"""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[Path] = []


    def path(self, name: str) -> Path:
        """Register a file name in the output directory"""
        rtn = self.out_dir / name
        self.files.append(rtn)
        return rtn


    def remove(self):
        """Delete everything registered so far"""
        for file in self.files:
            if file.exists():
                file.unlink()
                logger.info("Removed partial artifact: %s", file)

        self.files = []


    @property
    def names(self) -> list[str]:
        """The registered file names"""
        return [x.name for x in self.files]


def read_results_properties(source: Path|str, names: Sequence[str], id_property: str = "GEOID") -> pd.DataFrame:
    """Selected feature properties of a results GeoJSON, indexed by tract id"""

    data = json.loads(Path(source).read_text(encoding="utf-8"))
    rows = {x["properties"][id_property]: [x["properties"].get(n) for n in names]
            for x in data["features"]}
    return pd.DataFrame.from_dict(rows, orient="index", columns=list(names))
