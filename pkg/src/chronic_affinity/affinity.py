#!/usr/bin/env python
# encoding: utf-8

"""Affinity scores, descriptive statistics and correlations"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .region import StudyRegion

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


AFFINITY = "affinity"


class AffinityException(Exception):
    """AffinityException"""


@dataclass(frozen=True)
class AffinityResult:
    """Per-tract exceedance flags and affinity scores.

    A tract's score is the number of conditions whose prevalence is strictly
    greater than the regional (unweighted tract) mean.
    """

    thresholds: pd.Series
    flags: pd.DataFrame
    score: pd.Series

    @property
    def k(self) -> int:
        """Number of conditions"""
        return self.flags.shape[1]

    @property
    def share_max(self) -> float:
        """Fraction of tracts with score == K"""
        return float((self.score == self.k).mean())

    def distribution(self) -> dict[int, int]:
        """Number of tracts per score 0..K"""
        counts = self.score.value_counts()
        return {i: int(counts.get(i, 0)) for i in range(self.k + 1)}

    def leave_one_out(self) -> pd.DataFrame:
        """Per condition, the score computed without that condition"""
        return pd.DataFrame(
            {name: self.score - self.flags[name] for name in self.flags.columns},
            index=self.score.index,
        )


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson r with two-sided p-values (t distribution, N-2 df)"""

    names: list[str]
    r: pd.DataFrame
    p: pd.DataFrame
    n: int

    def pair(self, a: str, b: str) -> tuple[float, float]:
        """(r, p) of two variables"""
        return float(self.r.loc[a, b]), float(self.p.loc[a, b])


@dataclass(frozen=True)
class DescriptiveStats:
    """Mean, sample sd (N-1), min, max and N per variable"""

    table: pd.DataFrame

    def __getitem__(self, name: str) -> pd.Series:
        return self.table.loc[name]


def condition_thresholds(region: StudyRegion) -> pd.Series:
    """Unweighted arithmetic mean prevalence per condition"""

    rtn = region.prevalence.mean(axis=0)

    # Summation may round the mean of a constant column away from the value
    low, high = region.prevalence.min(axis=0), region.prevalence.max(axis=0)
    rtn[low == high] = low[low == high]
    return rtn


def exceedance_flags(region: StudyRegion, thresholds: pd.Series|Sequence[float]) -> pd.DataFrame:
    """1 where the prevalence is strictly greater than the threshold, else 0"""

    values = region.prevalence
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (values.shape[1],):
        raise AffinityException(
            f"Expected {values.shape[1]} thresholds, found {thresholds.size}")

    flags = (values.to_numpy() > thresholds[np.newaxis, :]).astype(np.int64)
    return pd.DataFrame(flags, index=values.index, columns=values.columns)


def affinity_scores(region: StudyRegion) -> AffinityResult:
    """Thresholds, flags and scores for the region"""

    thresholds = condition_thresholds(region)
    flags = exceedance_flags(region, thresholds)
    score = flags.sum(axis=1).rename(AFFINITY)

    rtn = AffinityResult(thresholds, flags, score)
    logger.debug("Affinity: K=%s, mean=%.3f, share_max=%.3f", rtn.k, score.mean(), rtn.share_max)
    return rtn


def variables_frame(region: StudyRegion, affinity: None|AffinityResult = None) -> pd.DataFrame:
    """Prevalences, the affinity score and the indicators in one frame"""

    if affinity is None:
        affinity = affinity_scores(region)

    return pd.concat(
        [region.prevalence, affinity.score.astype(float), region.indicators], axis=1)


def descriptive_stats(region: StudyRegion,
    variables: None|Sequence[str] = None,
    affinity: None|AffinityResult = None
) -> DescriptiveStats:
    """Per-variable summary statistics. Default: all conditions, affinity, all indicators"""

    if region.n < 2:
        raise AffinityException("At least 2 tracts are required for a standard deviation")

    data = variables_frame(region, affinity)
    if variables is not None:
        data = _select(data, variables)

    table = pd.DataFrame({
        "mean": data.mean(axis=0),
        "sd": data.std(axis=0, ddof=1),
        "min": data.min(axis=0),
        "max": data.max(axis=0),
        "n": data.count(axis=0),
    })
    return DescriptiveStats(table)


def correlation_matrix(region: StudyRegion,
    variables: None|Sequence[str] = None,
    affinity: None|AffinityResult = None
) -> CorrelationMatrix:
    """Pairwise Pearson correlations. Default: the conditions"""

    data = variables_frame(region, affinity)
    data = _select(data, variables if variables is not None else region.condition_names)
    return pearson_matrix(data)


def affinity_correlates(region: StudyRegion,
    indicators: None|Sequence[str] = None,
    affinity: None|AffinityResult = None
) -> dict[str, tuple[float, float]]:
    """Pearson (r, p) of the affinity score with each indicator"""

    names = list(indicators if indicators is not None else region.indicator_names)
    data = _select(variables_frame(region, affinity), [AFFINITY] + names)

    # Constant indicators have no correlation
    names = [x for x in names if data[x].std(ddof=0) > 0]
    if data[AFFINITY].std(ddof=0) == 0:
        logger.warning("Affinity is constant; no correlates")
        return {}

    corr = pearson_matrix(data[[AFFINITY] + names])
    return {x: corr.pair(AFFINITY, x) for x in names}


def pearson_matrix(data: pd.DataFrame) -> CorrelationMatrix:
    """Pearson r and two-sided t-test p-values of all column pairs"""

    n = len(data)
    if n < 3:
        raise AffinityException("At least 3 observations are required for correlation p-values")

    values = data.to_numpy(dtype=float)
    dev = values - values.mean(axis=0)
    k = dev.shape[1]
    ss = np.array([np.dot(dev[:, i], dev[:, i]) for i in range(k)])

    zero = [name for name, x in zip(data.columns, ss) if x == 0]
    if zero:
        raise AffinityException(f"Zero variance: {zero}")

    # Pairwise dot products (same summation order as 'ss'), so that
    # r(x, x) == 1 and r(x, -x) == -1 exactly
    r = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            value = np.dot(dev[:, i], dev[:, j]) / np.sqrt(ss[i] * ss[j])
            r[i, j] = r[j, i] = min(1.0, max(-1.0, value))

    df = n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt(df / (1.0 - r * r))
    p = 2 * stats.t.sf(np.abs(t), df)
    p[np.abs(r) == 1.0] = 0.0

    names = list(data.columns)
    return CorrelationMatrix(
        names,
        pd.DataFrame(r, index=names, columns=names),
        pd.DataFrame(p, index=names, columns=names),
        n,
    )


def _select(data: pd.DataFrame, variables: Sequence[str]) -> pd.DataFrame:
    missing = [x for x in variables if x not in data.columns]
    if missing:
        raise AffinityException(f"Variables not found: {missing}")

    return data[list(variables)]
