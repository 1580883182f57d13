#!/usr/bin/env python
# encoding: utf-8

# pylint: disable=missing-class-docstring, missing-function-docstring, invalid-name

import numpy as np
import pandas as pd
import pytest
from shapely import box

from chronic_affinity.affinity import (AFFINITY, AffinityException, affinity_correlates,
    affinity_scores, condition_thresholds, correlation_matrix, descriptive_stats,
    exceedance_flags, pearson_matrix)
from chronic_affinity.region import GeometrySet, IndicatorTable, PrevalenceTable, join_region


CONDITIONS = ["arthritis", "asthma", "diabetes", "heart_disease", "obesity", "stroke"]


def make_region(prevalence: dict, indicators: None|dict = None):
    data = pd.DataFrame(prevalence)
    ids = [f"t{i:03d}" for i in range(len(data))]
    data.index = pd.Index(ids, name="tract_id")

    if indicators is None:
        indicators = {"poverty": np.linspace(5, 40, len(ids))}
    ind = pd.DataFrame(indicators, index=data.index)

    geometry = GeometrySet({x: box(i, 0, i + 1, 1) for i, x in enumerate(ids)})
    region, _ = join_region(PrevalenceTable(data), IndicatorTable(ind), geometry)
    return region


def random_region(rng, n=10, k=6):
    return make_region({CONDITIONS[j] if j < 6 else f"c{j}": rng.uniform(0, 50, n) for j in range(k)})


def test_thresholds():
    region = make_region({"asthma": [10.0, 12.0], "obesity": [0.1, 0.1]})
    thresholds = condition_thresholds(region)
    assert thresholds["asthma"] == 11.0

    # Constant column: the threshold is the value itself
    assert thresholds["obesity"] == 0.1


def test_flags():
    region = make_region({"asthma": [10.0, 12.0, 11.0], "obesity": [30.0, 32.0, 31.0]})
    flags = exceedance_flags(region, condition_thresholds(region))

    # Strictly greater: the tract at the mean gets no flag
    assert flags.loc["t002"].to_list() == [0, 0]
    assert flags.loc["t001"].to_list() == [1, 1]
    assert flags.loc["t000"].to_list() == [0, 0]

    flags = exceedance_flags(region, [11.0, 40.0])
    assert flags.loc["t001"].to_list() == [1, 0]

    with pytest.raises(AffinityException, match="thresholds"):
        exceedance_flags(region, [1.0])


def test_worked_example():
    # Above the mean in asthma and obesity only
    prevalence = {x: [10.0, 10.0, 10.0] for x in CONDITIONS}
    prevalence["asthma"] = [12.0, 9.0, 9.0]
    prevalence["obesity"] = [40.0, 30.0, 29.0]
    result = affinity_scores(make_region(prevalence))
    assert result.score["t000"] == 2
    assert result.score["t001"] == 0
    assert result.k == 6


def test_identical_tracts():
    prevalence = {x: [17.3] * 5 for x in CONDITIONS}
    result = affinity_scores(make_region(prevalence))
    assert (result.score == 0).all()
    assert result.share_max == 0.0
    assert result.distribution() == {0: 5, 1: 0, 2: 0, 3: 0, 4: 0, 5: 0, 6: 0}


def test_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(200):
        region = random_region(rng, n=int(rng.integers(3, 15)))
        result = affinity_scores(region)
        values = region.prevalence.to_numpy()
        n, k = values.shape
        for i in range(n):
            expected = 0
            for j in range(k):
                mean = sum(values[:, j]) / n
                if values[i, j] > mean:
                    expected += 1
            assert result.score.iloc[i] == expected
            assert result.score.iloc[i] == result.flags.iloc[i].sum()
            assert 0 <= result.score.iloc[i] <= k


def test_affine_invariance():
    rng = np.random.default_rng(11)
    for _ in range(50):
        region = random_region(rng, n=12)
        base = affinity_scores(region).score

        # Positive affine transforms of single conditions
        data = region.prevalence.copy()
        data["asthma"] = data["asthma"] * 4.0 + 64.0
        data["stroke"] = data["stroke"] * 0.5
        other = make_region({x: data[x].to_numpy() for x in data.columns})
        assert affinity_scores(other).score.to_list() == base.to_list()


def test_share_max_and_leave_one_out():
    prevalence = {x: [1.0, 2.0, 3.0, 4.0] for x in CONDITIONS}
    result = affinity_scores(make_region(prevalence))
    assert result.score.to_list() == [0, 0, 6, 6]
    assert result.share_max == 0.5

    loo = result.leave_one_out()
    assert list(loo.columns) == CONDITIONS
    assert loo.loc["t003", "asthma"] == 5
    assert loo.loc["t000", "asthma"] == 0


def test_descriptive_stats():
    region = make_region({"asthma": [1.0, 2.0, 3.0]}, {"poverty": [10.0, 20.0, 60.0]})
    stats = descriptive_stats(region)
    assert stats["asthma"]["mean"] == 2.0
    assert stats["asthma"]["sd"] == 1.0
    assert stats["asthma"]["n"] == 3
    assert stats["poverty"]["max"] == 60.0
    assert AFFINITY in stats.table.index

    stats = descriptive_stats(region, variables=["asthma"])
    assert list(stats.table.index) == ["asthma"]

    with pytest.raises(AffinityException):
        descriptive_stats(region, variables=["crime"])


def test_correlation_exact():
    x = np.array([1.0, 2.0, 3.5, 4.0, 7.25])
    data = pd.DataFrame({"x": x, "neg": -x, "y": [1.0, 3.0, 2.0, 4.0, 4.5]})
    corr = pearson_matrix(data)
    assert corr.pair("x", "x") == (1.0, 0.0)
    assert corr.r.loc["x", "neg"] == -1.0
    assert np.allclose(corr.r.to_numpy(), corr.r.to_numpy().T, atol=1e-12, rtol=0)


def test_correlation_hand():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([1.0, 3.0, 2.0, 4.0])

    # Sum of products of deviations 4, sum of squares 5 each
    corr = pearson_matrix(pd.DataFrame({"x": x, "y": y}))
    r, p = corr.pair("x", "y")
    assert r == pytest.approx(0.8, abs=1e-12)

    # t = 0.8 * sqrt(2 / 0.36) = 1.8856, two-sided with 2 df
    assert p == pytest.approx(0.2, abs=1e-12)


def test_correlation_errors():
    with pytest.raises(AffinityException, match="constant"):
        pearson_matrix(pd.DataFrame({"x": [1.0, 2.0, 3.0], "constant": [1.0, 1.0, 1.0]}))

    with pytest.raises(AffinityException):
        pearson_matrix(pd.DataFrame({"x": [1.0, 2.0]}))


def test_correlation_matrix_and_correlates():
    rng = np.random.default_rng(3)
    region = random_region(rng, n=30)
    corr = correlation_matrix(region)
    assert corr.names == CONDITIONS
    assert corr.n == 30

    # Positive affine transforms leave r unchanged
    data = region.prevalence.copy()
    data["asthma"] = data["asthma"] * 3.0 - 7.0
    other = correlation_matrix(make_region({x: data[x].to_numpy() for x in data.columns}))
    assert np.allclose(corr.r.to_numpy(), other.r.to_numpy(), atol=1e-12, rtol=0)

    correlates = affinity_correlates(region)
    assert list(correlates) == ["poverty"]
    r, p = correlates["poverty"]
    assert -1 <= r <= 1
    assert 0 <= p <= 1
