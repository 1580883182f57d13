#!/usr/bin/env python
# encoding: utf-8

"""Spatial weights: contiguity, k-nearest neighbors and distance bands"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist
from shapely import box
from shapely.strtree import STRtree

from .region import GeometrySet

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


STANDARDIZATIONS = ("binary", "row_standardized")

# Relative to the bounding box diagonal
DEFAULT_SNAP_FACTOR = 1e-9


class WeightsException(Exception):
    """WeightsException"""


@dataclass(frozen=True)
class WeightsMatrix:
    """Sparse neighbor structure over the tracts, in 'tract_ids' order"""

    tract_ids: tuple[str, ...]
    matrix: sp.csr_matrix
    standardization: str = "binary"
    includes_self: bool = False
    kind: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape != (self.n, self.n):
            raise WeightsException(
                f"Matrix shape {self.matrix.shape} does not match {self.n} tracts")

        if self.standardization not in STANDARDIZATIONS:
            raise WeightsException(f"Invalid standardization: '{self.standardization}'")

        if (self.matrix.data < 0).any():
            raise WeightsException("Weights must be non-negative")

        if not self.includes_self and self.matrix.diagonal().any():
            raise WeightsException("Self-loops found, but includes_self is False")

    @property
    def n(self) -> int:
        """Number of tracts"""
        return len(self.tract_ids)

    @property
    def w_sum(self) -> float:
        """Sum of all weights (S0)"""
        return float(self.matrix.sum())

    @property
    def islands(self) -> list[int]:
        """Indices of tracts without neighbors (other than themselves)"""
        counts = np.asarray((self.matrix != 0).sum(axis=1)).ravel()
        counts -= (self.matrix.diagonal() != 0).astype(counts.dtype)
        return [int(i) for i in np.flatnonzero(counts == 0)]

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        """(index, weight) pairs of row i"""
        start, end = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return [(int(j), float(w))
                for j, w in zip(self.matrix.indices[start:end], self.matrix.data[start:end])]

    def edges(self) -> set[tuple[int, int]]:
        """All (i, j) with a non-zero weight, i != j"""
        coo = self.matrix.tocoo()
        return {(int(i), int(j)) for i, j, w in zip(coo.row, coo.col, coo.data) if i != j and w != 0}

    def degrees(self) -> np.ndarray:
        """Number of neighbors (excluding self) per tract"""
        rtn = np.zeros(self.n, dtype=int)
        for i, _ in self.edges():
            rtn[i] += 1
        return rtn

    def is_symmetric(self) -> bool:
        """Structural and numerical symmetry"""
        return (abs(self.matrix - self.matrix.T) > 1e-12).nnz == 0

    def s1(self) -> float:
        """1/2 * sum_ij (w_ij + w_ji)^2"""
        total = self.matrix + self.matrix.T
        return float(0.5 * total.multiply(total).sum())

    def s2(self) -> float:
        """sum_i (w_i. + w_.i)^2"""
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        cols = np.asarray(self.matrix.sum(axis=0)).ravel()
        return float(((rows + cols) ** 2).sum())

    def to_dense(self) -> np.ndarray:
        """Dense n x n array"""
        return self.matrix.toarray()

    def describe(self) -> str:
        """e.g. 'queen/row_standardized'"""
        return f"{self.kind}/{self.standardization}" + ("+self" if self.includes_self else "")

    def to_json(self) -> str:
        """Adjacency list: {id, neighbors: [{id, weight}]}"""
        data = {
            "kind": self.kind,
            "standardization": self.standardization,
            "includes_self": self.includes_self,
            "params": self.params,
            "tracts": [
                {"id": tract_id,
                 "neighbors": [{"id": self.tract_ids[j], "weight": w} for j, w in self.neighbors(i)]}
                for i, tract_id in enumerate(self.tract_ids)
            ],
        }
        return json.dumps(data, indent=1)

    @classmethod
    def from_json(cls, text: str|bytes) -> "WeightsMatrix":
        """The inverse of to_json()"""
        data = json.loads(text)
        ids = tuple(x["id"] for x in data["tracts"])
        pos = {x: i for i, x in enumerate(ids)}
        rows, cols, vals = [], [], []
        try:
            for i, elem in enumerate(data["tracts"]):
                for nb in elem["neighbors"]:
                    rows.append(i)
                    cols.append(pos[nb["id"]])
                    vals.append(float(nb["weight"]))
        except KeyError as exc:
            raise WeightsException(f"Unknown tract in weights file: {exc}") from exc

        return cls(
            ids,
            _to_csr(len(ids), rows, cols, vals),
            standardization=data.get("standardization", "binary"),
            includes_self=bool(data.get("includes_self", False)),
            kind=data.get("kind", "custom"),
            params=data.get("params", {}),
        )


def _to_csr(n: int, rows, cols, vals) -> sp.csr_matrix:
    rtn = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))),
        shape=(n, n))
    rtn.sum_duplicates()
    rtn.eliminate_zeros()
    rtn.sort_indices()
    return rtn


def _from_pairs(tract_ids: Sequence[str], pairs, kind: str, params: dict, symmetric: bool,
    include_self: bool = False
) -> WeightsMatrix:
    pairs = sorted(set(pairs))
    rows = [i for i, _ in pairs]
    cols = [j for _, j in pairs]
    if symmetric:
        rows, cols = rows + cols, cols + rows

    n = len(tract_ids)
    if include_self:
        rows += list(range(n))
        cols += list(range(n))

    matrix = _to_csr(n, rows, cols, np.ones(len(rows)))
    matrix.data[:] = 1.0
    rtn = WeightsMatrix(tuple(tract_ids), matrix, "binary", include_self, kind, params)

    islands = rtn.islands
    if islands:
        names = [tract_ids[i] for i in islands]
        logger.warning("%s weights: %s island(s) without neighbors: %s", kind, len(names), names)

    return rtn


def _contiguity(geometry: GeometrySet, snap_tol: None|float, rook: bool) -> WeightsMatrix:
    if len(geometry) == 0:
        raise WeightsException("Empty geometry set")

    if snap_tol is None:
        snap_tol = DEFAULT_SNAP_FACTOR * geometry.diagonal()

    if snap_tol < 0:
        raise WeightsException(f"snap_tol must be >= 0: {snap_tol}")

    geoms = [geometry[x] for x in geometry.tract_ids]
    tree = STRtree(geoms)
    snapped = [g.buffer(snap_tol) if snap_tol > 0 else g for g in geoms]

    pairs = []
    for i, geom in enumerate(geoms):
        minx, miny, maxx, maxy = geom.bounds
        envelope = box(minx - snap_tol, miny - snap_tol, maxx + snap_tol, maxy + snap_tol)
        for j in sorted(int(x) for x in tree.query(envelope)):
            if j <= i:
                continue

            if geom.distance(geoms[j]) > snap_tol:
                continue

            # A shared point yields at most 2 * snap_tol of boundary inside
            # the snapped neighbor; a shared edge yields its length.
            if rook and geom.boundary.intersection(snapped[j]).length <= 4 * snap_tol:
                continue

            pairs.append((i, j))

    kind = "rook" if rook else "queen"
    return _from_pairs(geometry.tract_ids, pairs, kind, {"snap_tol": snap_tol}, symmetric=True)


def queen_contiguity(geometry: GeometrySet, snap_tol: None|float = None) -> WeightsMatrix:
    """Neighbors share at least one boundary point (within snap_tol)"""
    return _contiguity(geometry, snap_tol, rook=False)


def rook_contiguity(geometry: GeometrySet, snap_tol: None|float = None) -> WeightsMatrix:
    """Neighbors share a boundary segment of positive length"""
    return _contiguity(geometry, snap_tol, rook=True)


def knn_weights(centroids: np.ndarray, k: int, tract_ids: Sequence[str]) -> WeightsMatrix:
    """Directed k nearest neighbors. Ties are broken by tract id."""

    centroids = np.asarray(centroids, dtype=float)
    n = len(centroids)
    if len(tract_ids) != n:
        raise WeightsException("Number of centroids and tract ids differ")

    if not 1 <= k < n:
        raise WeightsException(f"k must be in [1, {n - 1}]: {k}")

    dist = cdist(centroids, centroids)
    id_rank = np.argsort(np.argsort(np.asarray(tract_ids)))

    pairs = []
    for i in range(n):
        order = np.lexsort((id_rank, dist[i]))
        order = order[order != i][:k]
        pairs += [(i, int(j)) for j in order]

    return _from_pairs(tract_ids, pairs, "knn", {"k": k}, symmetric=False)


def default_distance_band(centroids: np.ndarray) -> float:
    """The largest nearest neighbor distance. Guarantees no islands."""

    dist = cdist(centroids, centroids)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).max())


def distance_band_weights(centroids: np.ndarray,
    distance: None|float,
    tract_ids: Sequence[str],
    include_self: bool = False
) -> WeightsMatrix:
    """Neighbors within 'distance' (inclusive). include_self adds w_ii = 1,
    which is what Gi* requires."""

    centroids = np.asarray(centroids, dtype=float)
    if len(tract_ids) != len(centroids):
        raise WeightsException("Number of centroids and tract ids differ")

    if distance is None:
        distance = default_distance_band(centroids)

    if not distance > 0:
        raise WeightsException(f"Distance band must be > 0: {distance}")

    dist = cdist(centroids, centroids)
    rows, cols = np.nonzero(dist <= distance)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if i < j]

    return _from_pairs(tract_ids, pairs, "distance_band", {"distance": float(distance)},
        symmetric=True, include_self=include_self)


def add_self(w: WeightsMatrix) -> WeightsMatrix:
    """Set w_ii = 1 (binary) for every tract"""

    if w.includes_self:
        return w

    if w.standardization != "binary":
        raise WeightsException("Self weights can only be added to binary weights")

    matrix = (w.matrix + sp.identity(w.n, format="csr")).tocsr()
    matrix.sort_indices()
    return replace(w, matrix=matrix, includes_self=True)


def row_standardize(w: WeightsMatrix) -> WeightsMatrix:
    """Rescale every non-island row to sum 1. Islands stay untouched."""

    if w.standardization == "row_standardized":
        return w

    sums = np.asarray(w.matrix.sum(axis=1)).ravel()
    scale = np.ones_like(sums)
    scale[sums > 0] = 1.0 / sums[sums > 0]

    matrix = sp.csr_matrix(sp.diags(scale) @ w.matrix)
    matrix.sort_indices()

    rtn = replace(w, matrix=matrix, standardization="row_standardized")
    if rtn.islands:
        logger.warning("Row standardization: islands left untouched: %s",
            [w.tract_ids[i] for i in rtn.islands])

    return rtn


class WeightsBuilder:
    """Build weights from a name as found in the run config
    (e.g. "queen", "distance_band")."""

    _map: dict[str, Callable[..., WeightsMatrix]] = {
        "queen": lambda g, **kv: queen_contiguity(g, kv.get("snap_tol")),
        "rook": lambda g, **kv: rook_contiguity(g, kv.get("snap_tol")),
        "knn": lambda g, **kv: knn_weights(g.centroids(), kv.get("k", 4), g.tract_ids),
        "distance_band": lambda g, **kv: distance_band_weights(
            g.centroids(), kv.get("distance"), g.tract_ids),
    }

    def __init__(self, kind: str):
        self.kind = kind
        if kind not in self._map:
            raise WeightsException(f"Weights with name '{kind}' not found")


    @classmethod
    def kinds(cls) -> list[str]:
        """All supported names"""
        return list(cls._map.keys())


    def build(self, geometry: GeometrySet,
        transform: str = "binary",
        include_self: bool = False,
        **params
    ) -> WeightsMatrix:
        """Build, optionally add self weights, then standardize"""

        rtn = self._map[self.kind](geometry, **params)
        if include_self:
            rtn = add_self(rtn)

        if transform == "row_standardized":
            rtn = row_standardize(rtn)
        elif transform != "binary":
            raise WeightsException(f"Invalid transform: '{transform}'")

        logger.debug("Weights %s: n=%s, S0=%s, islands=%s",
            rtn.describe(), rtn.n, rtn.w_sum, len(rtn.islands))
        return rtn
