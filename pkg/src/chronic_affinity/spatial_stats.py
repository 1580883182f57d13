#!/usr/bin/env python
# encoding: utf-8

"""Global Moran's I, local Getis-Ord Gi* and hot/cold spot classification"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs
from scipy import stats
from statsmodels.stats.multitest import multipletests

from .weights import WeightsMatrix

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


DEFAULT_ALPHAS = (0.10, 0.05, 0.01)

MIN_PERMUTATIONS = 99

RNG_NAME = "numpy.random.PCG64, SeedSequence(seed, spawn_key=(replicate,))"


class SpatialStatsException(Exception):
    """SpatialStatsException"""


@dataclass(frozen=True)
class MoranResult:
    """Global Moran's I with inference under the randomization assumption"""

    i: float
    expected: float
    variance_randomization: float
    z: float
    p_analytic: float
    n: int
    weights: str = ""
    p_permutation: None|float = None
    n_perm: int = 0
    seed: None|int = None
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        """For the JSON report"""
        return {
            "I": self.i,
            "expected": self.expected,
            "variance_randomization": self.variance_randomization,
            "z": self.z,
            "p_analytic": self.p_analytic,
            "p_analytic_label": "two-sided normal, randomization variance",
            "p_permutation": self.p_permutation,
            "p_permutation_label": "pseudo p, two-sided, (1 + #extreme) / (n_perm + 1)",
            "n_perm": self.n_perm,
            "seed": self.seed,
            "n": self.n,
            "weights": self.weights,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class HotSpotResult:
    """Per-tract Gi* z-values, p-values and hot/cold categories"""

    tract_ids: tuple[str, ...]
    gi_z: np.ndarray
    p: np.ndarray
    category: list[str]
    category_raw: list[str]
    alpha_levels: tuple[float, ...] = DEFAULT_ALPHAS
    weights: str = ""
    warnings: tuple[str, ...] = field(default=())

    def counts(self, raw: bool = False) -> dict[str, int]:
        """Number of tracts per category, in legend order"""
        cats = self.category_raw if raw else self.category
        return {x: cats.count(x) for x in category_names(self.alpha_levels)}


def two_sided_p(z) -> np.ndarray:
    """Two-sided standard normal p-values"""
    return 2.0 * stats.norm.sf(np.abs(np.asarray(z, dtype=float)))


def _check_x(x, w: WeightsMatrix) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != w.n:
        raise SpatialStatsException(f"Expected {w.n} values, found {len(x)}")

    if not np.isfinite(x).all():
        raise SpatialStatsException("Values must be finite")

    if np.ptp(x) == 0:
        raise SpatialStatsException("zero variance: the values are constant")

    return x


def _moran_statistic(z: np.ndarray, w: WeightsMatrix, s0: float, zz: float) -> float:
    return float(len(z) / s0 * (z @ (w.matrix @ z)) / zz)


def morans_i(x: Sequence[float], w: WeightsMatrix) -> MoranResult:
    """Global Moran's I with the analytic randomization variance"""

    x = _check_x(x, w)
    n = len(x)
    if n < 3:
        raise SpatialStatsException(f"At least 3 tracts are required: {n}")

    if w.includes_self:
        raise SpatialStatsException("Moran's I requires weights without self-loops")

    s0 = w.w_sum
    if s0 == 0:
        raise SpatialStatsException("All tracts are islands; Moran's I is undefined")

    warnings = []
    if w.islands:
        warnings.append(f"{len(w.islands)} island(s) contribute nothing to I")
        logger.warning(warnings[-1])

    z = x - x.mean()
    zz = float(z @ z)
    value = _moran_statistic(z, w, s0, zz)
    expected = -1.0 / (n - 1)

    if n < 4:
        warnings.append("N < 4: randomization variance undefined")
        logger.warning(warnings[-1])
        variance = zscore = p_value = math.nan
    else:
        s1, s2 = w.s1(), w.s2()
        b2 = n * float((z ** 4).sum()) / zz ** 2
        n2 = n * n
        a = n * ((n2 - 3 * n + 3) * s1 - n * s2 + 3 * s0 ** 2)
        b = b2 * ((n2 - n) * s1 - 2 * n * s2 + 6 * s0 ** 2)
        variance = (a - b) / ((n - 1) * (n - 2) * (n - 3) * s0 ** 2) - expected ** 2
        zscore = (value - expected) / math.sqrt(variance) if variance > 0 else math.nan
        p_value = float(two_sided_p(zscore)) if variance > 0 else math.nan

    logger.debug("Moran's I=%s, E=%s, z=%s (%s)", value, expected, zscore, w.describe())
    return MoranResult(value, expected, variance, zscore, p_value, n,
        weights=w.describe(), warnings=tuple(warnings))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream per replicate, no matter how replicates are scheduled"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def _permuted_statistics(z: np.ndarray, w: WeightsMatrix, s0: float, zz: float,
    seed: int, start: int, stop: int
) -> np.ndarray:
    rtn = np.empty(stop - start)
    for pos, replicate in enumerate(range(start, stop)):
        perm = replicate_rng(seed, replicate).permutation(len(z))
        rtn[pos] = _moran_statistic(z[perm], w, s0, zz)
    return rtn


def permutation_statistics(x: Sequence[float], w: WeightsMatrix, n_perm: int, seed: int,
    n_jobs: int = 1
) -> np.ndarray:
    """Moran's I for n_perm random relabelings of x over fixed weights"""

    x = np.asarray(x, dtype=float)
    z = x - x.mean()
    zz = float(z @ z)
    s0 = w.w_sum

    if n_jobs == 1:
        return _permuted_statistics(z, w, s0, zz, seed, 0, n_perm)

    workers = effective_n_jobs(n_jobs)
    bounds = np.linspace(0, n_perm, min(workers, n_perm) + 1).astype(int)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_permuted_statistics)(z, w, s0, zz, seed, int(a), int(b))
        for a, b in zip(bounds[:-1], bounds[1:]))
    return np.concatenate(parts)


def morans_i_permutation(x: Sequence[float], w: WeightsMatrix,
    n_perm: int = 999,
    seed: None|int = None,
    n_jobs: int = 1
) -> MoranResult:
    """Moran's I with analytic inference plus a permutation pseudo p-value"""

    if n_perm < MIN_PERMUTATIONS:
        raise SpatialStatsException(f"n_perm must be >= {MIN_PERMUTATIONS}: {n_perm}")

    if seed is None:
        raise SpatialStatsException("A seed is required for permutation inference")

    rtn = morans_i(x, w)
    sims = permutation_statistics(x, w, n_perm, seed, n_jobs)

    observed = abs(rtn.i - rtn.expected)
    extreme = int((np.abs(sims - rtn.expected) >= observed - 1e-12 * max(1.0, observed)).sum())
    p_sim = (1 + extreme) / (n_perm + 1)

    return MoranResult(rtn.i, rtn.expected, rtn.variance_randomization, rtn.z, rtn.p_analytic,
        rtn.n, weights=rtn.weights, p_permutation=p_sim, n_perm=n_perm, seed=seed,
        warnings=rtn.warnings)


def getis_ord_gi_star(x: Sequence[float], w: WeightsMatrix,
    alphas: Sequence[float] = DEFAULT_ALPHAS
) -> HotSpotResult:
    """Local Gi* z-values. The weights must include each tract itself."""

    if not w.includes_self:
        raise SpatialStatsException("Gi* requires weights with includes_self=True")

    x = _check_x(x, w)
    n = len(x)

    # Centered; values may carry a large common offset
    z = x - x.mean()
    sd = float(np.sqrt((z * z).mean()))

    wi = np.asarray(w.matrix.sum(axis=1)).ravel()
    s1i = np.asarray(w.matrix.multiply(w.matrix).sum(axis=1)).ravel()

    numerator = w.matrix @ z
    spread = (n * s1i - wi ** 2) / (n - 1)

    warnings = []
    degenerate = spread <= 1e-12 * np.maximum(n * s1i, 1e-300)
    if degenerate.any():
        names = [w.tract_ids[i] for i in np.flatnonzero(degenerate)]
        warnings.append(f"Gi* neighborhood covers the whole region for {names}; z set to 0")
        logger.warning(warnings[-1])

    gi_z = np.zeros(n)
    ok = ~degenerate
    gi_z[ok] = numerator[ok] / (sd * np.sqrt(spread[ok]))

    alphas = tuple(alphas)
    return HotSpotResult(
        tract_ids=w.tract_ids,
        gi_z=gi_z,
        p=two_sided_p(gi_z),
        category=fdr_classify(gi_z, alphas),
        category_raw=raw_classify(gi_z, alphas),
        alpha_levels=alphas,
        weights=w.describe(),
        warnings=tuple(warnings),
    )


def _level(alpha: float) -> int:
    return int(round((1.0 - alpha) * 100))


def category_names(alphas: Sequence[float] = DEFAULT_ALPHAS) -> list[str]:
    """e.g. hot99, hot95, hot90, notsig, cold90, cold95, cold99"""
    levels = sorted(_level(x) for x in alphas)
    return [f"hot{x}" for x in reversed(levels)] + ["notsig"] + [f"cold{x}" for x in levels]


def _classify(z: np.ndarray, alphas: Sequence[float], rejector) -> list[str]:
    z = np.asarray(z, dtype=float)
    if not np.isfinite(z).all():
        raise SpatialStatsException("z-values must be finite")

    p = two_sided_p(z)
    rtn = ["notsig"] * len(z)

    # Loosest alpha first; stricter levels overwrite
    for alpha in sorted(alphas, reverse=True):
        reject = rejector(p, alpha)
        for i in np.flatnonzero(reject):
            rtn[i] = f"{'hot' if z[i] > 0 else 'cold'}{_level(alpha)}"

    return rtn


def fdr_classify(z: Sequence[float], alphas: Sequence[float] = DEFAULT_ALPHAS) -> list[str]:
    """Benjamini-Hochberg step-up at each alpha. The category is the strictest
    alpha at which the tract remains significant, signed by z."""

    def _bh(p, alpha):
        return multipletests(p, alpha=alpha, method="fdr_bh")[0]

    return _classify(np.asarray(z, dtype=float), alphas, _bh)


def raw_classify(z: Sequence[float], alphas: Sequence[float] = DEFAULT_ALPHAS) -> list[str]:
    """Like fdr_classify(), without multiple testing correction"""
    return _classify(np.asarray(z, dtype=float), alphas, lambda p, alpha: p <= alpha)
