#!/usr/bin/env python
# encoding: utf-8

# pylint: disable=missing-class-docstring, missing-function-docstring, invalid-name

import math

import numpy as np
import pandas as pd
import pytest
import scipy.linalg
from scipy import stats
from shapely import box

from chronic_affinity.region import GeometrySet, IndicatorTable, PrevalenceTable, join_region
from chronic_affinity.regression import (DesignSpec, IrlsConfig, RegressionException,
    bisquare_weight, build_design, fit_affinity_models, hc1_standard_errors, huber_weight,
    irls_m_fit, linktest, mad_scale, ols_fit, ols_hc1_fit, vif)


CONDITIONS = ["arthritis", "asthma", "diabetes", "heart_disease", "obesity", "stroke"]


def design(rng, n, p):
    return np.column_stack([np.ones(n), rng.normal(size=(n, p))])


def make_region(rng, n=120, crime_effect=0.0, smoking=None):
    ids = [f"t{i:03d}" for i in range(n)]
    index = pd.Index(ids, name="tract_id")

    ind = pd.DataFrame({
        "poverty": rng.uniform(5, 40, n),
        "unemployment": rng.uniform(2, 20, n),
        "crime": rng.uniform(50, 300, n),
        "smoking": rng.uniform(10, 30, n) if smoking is None else np.full(n, smoking),
        "male": rng.uniform(45, 52, n),
        "age67": rng.uniform(5, 20, n),
        "population": rng.integers(1000, 8000, n).astype(float),
    }, index=index)

    latent = crime_effect * (ind["crime"] - 175.0) / 75.0
    prev = pd.DataFrame(
        {x: 20.0 + latent + rng.normal(0, 1.0, n) for x in CONDITIONS}, index=index)

    geometry = GeometrySet({x: box(i, 0, i + 1, 1) for i, x in enumerate(ids)})
    region, _ = join_region(PrevalenceTable(prev), IndicatorTable(ind), geometry)
    return region


def test_exact_line():
    x = np.arange(10.0)
    X = np.column_stack([np.ones(10), x])
    y = 2.0 + 3.0 * x

    fit = ols_fit(X, y)
    assert np.allclose(fit.params, [2.0, 3.0], atol=1e-12)
    assert np.allclose(fit.resid, 0.0, atol=1e-12)
    assert fit.df_resid == 8

    fit = irls_m_fit(X, y)
    assert np.allclose(fit.params, [2.0, 3.0], atol=1e-10)
    assert fit.scale == 0.0
    assert (fit.weights == 1.0).all()


def test_zero_noise():
    rng = np.random.default_rng(1)
    X = design(rng, 60, 5)
    beta = np.array([1.0, -2.0, 0.5, 3.0, 0.0, 7.0])
    fit = irls_m_fit(X, X @ beta)
    assert np.allclose(fit.params, beta, atol=1e-8)


def test_rank_deficient():
    rng = np.random.default_rng(2)
    x = rng.normal(size=20)
    X = pd.DataFrame({"const": np.ones(20), "a": x, "b": 2.0 * x})
    y = rng.normal(size=20)
    for func in (ols_fit, ols_hc1_fit, irls_m_fit):
        with pytest.raises(RegressionException, match="'b'"):
            func(X, y)

    with pytest.raises(RegressionException, match="observations"):
        ols_fit(np.ones((2, 2)), [1.0, 2.0])

    with pytest.raises(RegressionException, match="finite"):
        ols_fit(np.ones((3, 1)), [1.0, np.nan, 2.0])


def test_normal_equations():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = design(rng, 40, 4)
        y = rng.normal(size=40)
        expected = scipy.linalg.solve(X.T @ X, X.T @ y, assume_a="pos")
        assert np.allclose(ols_fit(X, y).params, expected, atol=1e-10)


def test_hc1_by_hand():
    X = np.ones((4, 1))
    y = np.array([1.0, 2.0, 3.0, 4.0])
    fit = ols_hc1_fit(X, y)
    assert fit.params[0] == pytest.approx(2.5)

    # e = (-1.5, -0.5, 0.5, 1.5): (1/4) * 5 * (1/4) * 4/3
    assert fit.bse[0] == pytest.approx(math.sqrt(5.0 / 12.0), abs=1e-12)
    assert hc1_standard_errors(fit, X, y)[0] == pytest.approx(math.sqrt(5.0 / 12.0), abs=1e-12)

    # Same point estimates as OLS
    assert np.array_equal(fit.params, ols_fit(X, y).params)
    assert fit.method == "ols_hc1"


def test_inference():
    rng = np.random.default_rng(4)
    X = design(rng, 50, 2)
    y = X @ [1.0, 0.5, 0.0] + rng.normal(size=50)
    fit = ols_fit(X, y)
    q = stats.t.ppf(0.975, 47)
    assert np.allclose(fit.ci_low, fit.params - q * fit.bse)
    assert np.allclose(fit.ci_high, fit.params + q * fit.bse)
    assert np.allclose(fit.pvalues, 2 * stats.t.sf(np.abs(fit.params / fit.bse), 47))

    table = fit.as_table()
    assert list(table) == ["x0", "x1", "x2"]
    assert set(table["x1"]) == {"coef", "se", "p", "ci_low", "ci_high"}


def test_weight_functions():
    assert huber_weight([0.0, 1.0, -1.345]).tolist() == [1.0, 1.0, 1.0]
    assert huber_weight([2.0, -2.69]) == pytest.approx([1.345 / 2.0, 0.5])

    w = bisquare_weight([0.0, 2.0, -2.0, 4.685, 5.0])
    assert w[0] == 1.0
    assert w[1] == pytest.approx((1 - (2.0 / 4.685) ** 2) ** 2)
    assert w[1] == w[2]
    assert w[3] == 0.0
    assert w[4] == 0.0

    assert mad_scale(np.array([1.0, -1.0, 2.0, -2.0, 3.0])) == pytest.approx(
        2.0 / stats.norm.ppf(0.75))


def test_outlier_resistance():
    # 200 tracts, 3 predictors, 10% of the responses shifted by +50
    rng = np.random.default_rng(5)
    beta = np.array([1.0, 2.0, -1.0, 0.5])
    better = 0
    for _ in range(100):
        X = design(rng, 200, 3)
        y = X @ beta + rng.normal(size=200)
        y[rng.choice(200, 20, replace=False)] += 50.0
        robust = np.linalg.norm(irls_m_fit(X, y).params - beta)
        plain = np.linalg.norm(ols_fit(X, y).params - beta)
        better += robust < plain

    assert better >= 95


def test_outlier_magnitude():
    # Rejected outliers have no influence, however large
    rng = np.random.default_rng(10)
    beta = np.array([1.0, 2.0, -1.0, 0.5])
    X = design(rng, 200, 3)
    clean = X @ beta + rng.normal(size=200)
    outliers = rng.choice(200, 20, replace=False)
    config = IrlsConfig(tol=1e-10, max_iter=200)

    params = {}
    for magnitude in (1e2, 1e4, 1e6):
        y = clean.copy()
        y[outliers] += magnitude
        fit = irls_m_fit(X, y, config)
        assert fit.converged
        assert (fit.weights[outliers] == 0).all()
        assert np.linalg.norm(fit.params - beta) < 0.5
        assert np.linalg.norm(ols_fit(X, y).params - beta) > magnitude / 100
        params[magnitude] = fit.params

    assert np.allclose(params[1e4], params[1e2], atol=1e-6)
    assert np.allclose(params[1e6], params[1e2], atol=1e-6)


def test_outlier_weights():
    rng = np.random.default_rng(6)
    X = design(rng, 80, 2)
    y = X @ [1.0, 2.0, -1.0] + rng.normal(0, 0.5, 80)
    y[0] += 50.0
    fit = irls_m_fit(X, y)
    assert fit.weights[0] == 0.0
    assert fit.converged
    assert fit.iterations >= 2
    assert abs(fit.coef("x1") - 2.0) < abs(ols_fit(X, y).coef("x1") - 2.0)


def test_huber_objective():
    rng = np.random.default_rng(7)
    X = design(rng, 100, 3)
    y = X @ [0.0, 1.0, 1.0, 1.0] + rng.standard_t(2, 100)
    fit = irls_m_fit(X, y)
    assert fit.history
    for before, after in fit.history:
        assert after <= before + 1e-9 * max(1.0, before)


def test_equivariance():
    rng = np.random.default_rng(8)
    config = IrlsConfig(tol=1e-12, max_iter=500)
    X = design(rng, 70, 2)
    y = X @ [1.0, 2.0, -1.0] + rng.standard_t(3, 70)
    base = irls_m_fit(X, y, config)

    shifted = irls_m_fit(X, y + X @ [3.0, -1.0, 0.5], config)
    assert np.allclose(shifted.params, base.params + [3.0, -1.0, 0.5], atol=1e-7)

    scaled = irls_m_fit(X, 4.0 * y, config)
    assert np.allclose(scaled.params, 4.0 * base.params, atol=1e-7)
    assert scaled.scale == pytest.approx(4.0 * base.scale, rel=1e-7)


def test_non_convergence():
    rng = np.random.default_rng(9)
    X = design(rng, 50, 1)
    y = X @ [1.0, 2.0] + rng.standard_t(2, 50)
    fit = irls_m_fit(X, y, IrlsConfig(max_iter=1))
    assert not fit.converged
    assert "did not converge" in fit.warnings[0]

    with pytest.raises(RegressionException):
        IrlsConfig(tol=0)


def test_vif():
    x1 = np.tile([1.0, -1.0, 1.0, -1.0], 5)
    x2 = np.tile([1.0, 1.0, -1.0, -1.0], 5)
    rtn = vif(np.column_stack([x1, x2]), ["a", "b"])
    assert rtn == {"a": pytest.approx(1.0, abs=1e-12), "b": pytest.approx(1.0, abs=1e-12)}

    rtn = vif(np.column_stack([x1, x1, x2]))
    assert rtn["x0"] == math.inf
    assert rtn["x1"] == math.inf
    assert rtn["x2"] == pytest.approx(1.0, abs=1e-12)

    with pytest.raises(RegressionException):
        vif(np.column_stack([x1]))


def test_linktest():
    rng = np.random.default_rng(10)
    passed = 0
    for _ in range(100):
        X = design(rng, 100, 2)
        y = X @ [1.0, 1.0, -1.0] + rng.normal(size=100)
        passed += linktest(X, y, ols_fit(X, y)).passed
    assert passed >= 90

    failed = 0
    for _ in range(100):
        x = rng.uniform(0, 3, 100)
        X = np.column_stack([np.ones(100), x])
        y = x ** 2 + rng.normal(0, 0.2, 100)
        failed += not linktest(X, y, ols_fit(X, y)).passed
    assert failed >= 90

    X = np.column_stack([np.ones(5), np.arange(5.0)])
    constant = ols_fit(X, np.array([1.0, 2.0, 1.0, 2.0, 1.5]))
    constant.params = np.array([1.0, 0.0])
    with pytest.raises(RegressionException, match="constant"):
        linktest(X, np.arange(5.0), constant)


def test_build_design():
    region = make_region(np.random.default_rng(11), n=30)
    spec = DesignSpec("m", "affinity", ("poverty",))
    X, y = build_design(region, spec)
    assert list(X.columns) == ["const", "poverty", "male", "age67", "population"]
    assert y.between(0, 6).all()

    with pytest.raises(RegressionException, match="not found"):
        build_design(region, DesignSpec("m", "affinity", ("income",)))

    with pytest.raises(RegressionException, match="Duplicate"):
        DesignSpec("m", "affinity", ("male",))


def test_affinity_models():
    region = make_region(np.random.default_rng(12))
    models = fit_affinity_models(region)
    assert list(models) == ["model1", "model2"]
    for model in models.values():
        assert model.error is None
        assert list(model.fits) == ["ols", "ols_hc1", "m_huber_bisquare"]
        assert set(model.diagnostics.vif) == set(model.design.terms)
        assert model.diagnostics.linktest is not None

    fit = models["model2"].fits["m_huber_bisquare"]
    assert fit.terms == ["const", "poverty", "unemployment", "crime", "smoking", "male", "age67",
        "population"]
    report = models["model1"].as_dict()
    assert report["fits"]["ols"]["terms"]["crime"]["se"] > 0

    with pytest.raises(RegressionException, match="Unknown"):
        fit_affinity_models(region, models=["model3"])


def test_constant_smoking():
    region = make_region(np.random.default_rng(13), smoking=18.0)
    models = fit_affinity_models(region)
    assert models["model1"].error is None
    assert "smoking" in models["model2"].error
    assert models["model2"].fits == {}


def test_planted_effect():
    region = make_region(np.random.default_rng(14), n=300, crime_effect=1.0)
    fit = fit_affinity_models(region, models=["model1"])["model1"].fits["m_huber_bisquare"]
    i = fit.terms.index("crime")
    assert fit.params[i] > 0
    assert fit.pvalues[i] < 0.05
    assert fit.ci_low[i] > 0
