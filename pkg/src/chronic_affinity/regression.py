#!/usr/bin/env python
# encoding: utf-8

"""OLS, OLS with HC1 errors and IRLS M-estimation (Huber, then bisquare),
with VIF and linktest diagnostics"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from statsmodels.robust import norms
from statsmodels.robust.scale import mad

from .affinity import AFFINITY, AffinityResult, affinity_scores
from .region import StudyRegion

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


METHODS = ("ols", "ols_hc1", "m_huber_bisquare")

CONST = "const"


class RegressionException(Exception):
    """RegressionException"""


@dataclass(frozen=True)
class IrlsConfig:
    """Tuning constants for 95% Gaussian efficiency; tol on max |delta beta|"""

    huber_c: float = 1.345
    bisquare_c: float = 4.685
    tol: float = 1e-6
    max_iter: int = 50

    def __post_init__(self):
        if not (self.huber_c > 0 and self.bisquare_c > 0 and self.tol > 0 and self.max_iter >= 1):
            raise RegressionException(f"Invalid IRLS config: {self}")


@dataclass(frozen=True)
class DesignSpec:
    """Response, predictors of interest and controls. An intercept is always added."""

    name: str
    response: str
    predictors: tuple[str, ...]
    controls: tuple[str, ...] = ("male", "age67", "population")

    @property
    def terms(self) -> list[str]:
        """Design columns without the intercept"""
        return list(self.predictors) + list(self.controls)

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms) or self.response in self.terms:
            raise RegressionException(f"Duplicate columns in design: {self}")


MODEL_1 = DesignSpec("model1", AFFINITY, ("poverty", "unemployment", "crime"))
MODEL_2 = DesignSpec("model2", AFFINITY, ("poverty", "unemployment", "crime", "smoking"))

MODELS = {x.name: x for x in (MODEL_1, MODEL_2)}


@dataclass
class RobustFit:
    """A fitted linear model. p-values and CIs use the t distribution with
    N - p degrees of freedom."""

    method: str
    terms: list[str]
    params: np.ndarray
    bse: np.ndarray
    pvalues: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    fitted: np.ndarray
    resid: np.ndarray
    df_resid: int
    scale: float = math.nan
    iterations: int = 0
    converged: bool = True
    weights: None|np.ndarray = None

    # (objective before, objective after) per Huber iteration, at fixed scale
    history: list[tuple[float, float]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def coef(self, term: str) -> float:
        """Coefficient by term name"""
        return float(self.params[self.terms.index(term)])

    def as_table(self) -> dict[str, dict[str, float]]:
        """term -> coef, se, p, ci_low, ci_high"""
        return {
            term: {
                "coef": float(self.params[i]),
                "se": float(self.bse[i]),
                "p": float(self.pvalues[i]),
                "ci_low": float(self.ci_low[i]),
                "ci_high": float(self.ci_high[i]),
            }
            for i, term in enumerate(self.terms)
        }

    def as_dict(self) -> dict:
        """For the JSON report"""
        return {
            "method": self.method,
            "terms": self.as_table(),
            "n": len(self.resid),
            "df_resid": self.df_resid,
            "scale": self.scale,
            "iterations": self.iterations,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Linktest:
    """Regression of y on (yhat, yhat^2) with intercept"""

    coef: float
    p: float

    @property
    def passed(self) -> bool:
        """No evidence of specification error at 5%"""
        return self.p > 0.05


@dataclass(frozen=True)
class Diagnostics:
    """Multicollinearity and specification checks"""

    vif: dict[str, float]
    linktest: None|Linktest

    @property
    def mean_vif(self) -> float:
        """Average over all predictors"""
        return float(np.mean(list(self.vif.values()))) if self.vif else math.nan

    def as_dict(self) -> dict:
        """For the JSON report"""
        return {
            "vif": dict(self.vif),
            "mean_vif": self.mean_vif,
            "linktest": None if self.linktest is None else {
                "coef_yhat2": self.linktest.coef,
                "p_yhat2": self.linktest.p,
                "passed": self.linktest.passed,
            },
        }


@dataclass
class AffinityModel:
    """All fits of one design, or the error that prevented fitting"""

    design: DesignSpec
    fits: dict[str, RobustFit] = field(default_factory=dict)
    diagnostics: None|Diagnostics = None
    error: None|str = None

    def as_dict(self) -> dict:
        """For the JSON report"""
        return {
            "response": self.design.response,
            "predictors": list(self.design.predictors),
            "controls": list(self.design.controls),
            "fits": {name: fit.as_dict() for name, fit in self.fits.items()},
            "diagnostics": None if self.diagnostics is None else self.diagnostics.as_dict(),
            "error": self.error,
        }


def _as_arrays(X, y) -> tuple[np.ndarray, np.ndarray, list[str]]:
    if isinstance(X, pd.DataFrame):
        names = [str(x) for x in X.columns]
        X = X.to_numpy(dtype=float)
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, np.newaxis]
        names = [f"x{i}" for i in range(X.shape[1])]

    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != len(y):
        raise RegressionException(f"X has {X.shape[0]} rows, y has {len(y)}")

    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise RegressionException("Design and response must be finite")

    return X, y, names


def check_rank(X: np.ndarray, names: Sequence[str]):
    """Raise naming the columns that are linear combinations of earlier ones"""

    n, p = X.shape
    if n <= p:
        raise RegressionException(f"Need more observations ({n}) than parameters ({p})")

    if np.linalg.matrix_rank(X) == p:
        return

    collinear = []
    kept: list[int] = []
    for j in range(p):
        if np.linalg.matrix_rank(X[:, kept + [j]]) > len(kept):
            kept.append(j)
        else:
            collinear.append(names[j])

    raise RegressionException(f"Design is rank deficient; collinear columns: {collinear}")


def _t_inference(params: np.ndarray, bse: np.ndarray, df: int):
    with np.errstate(divide="ignore", invalid="ignore"):
        tvalues = params / bse
    pvalues = 2 * stats.t.sf(np.abs(tvalues), df)
    pvalues = np.where(bse > 0, pvalues, np.where(params == 0, 1.0, 0.0))
    q = stats.t.ppf(0.975, df)
    return pvalues, params - q * bse, params + q * bse


def ols_fit(X, y) -> RobustFit:
    """Ordinary least squares with classical standard errors"""

    X, y, names = _as_arrays(X, y)
    check_rank(X, names)

    res = sm.OLS(y, X).fit()
    df = int(round(res.df_resid))
    bse = np.asarray(res.bse)
    pvalues, low, high = _t_inference(res.params, bse, df)

    return RobustFit(
        method="ols",
        terms=names,
        params=np.asarray(res.params),
        bse=bse,
        pvalues=pvalues,
        ci_low=low,
        ci_high=high,
        fitted=np.asarray(res.fittedvalues),
        resid=np.asarray(res.resid),
        df_resid=df,
        scale=float(np.sqrt(res.scale)),
        iterations=1,
    )


def hc1_standard_errors(fit: RobustFit, X, y) -> np.ndarray:
    """Sandwich (X'X)^-1 X' diag(e^2) X (X'X)^-1, scaled by N / (N - p)"""

    X, y, _ = _as_arrays(X, y)
    n, p = X.shape
    resid = y - X @ fit.params

    bread = np.linalg.inv(X.T @ X)
    meat = (X * (resid ** 2)[:, np.newaxis]).T @ X
    cov = bread @ meat @ bread * n / (n - p)
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def ols_hc1_fit(X, y) -> RobustFit:
    """OLS point estimates with heteroscedasticity consistent (HC1) errors"""

    fit = ols_fit(X, y)
    bse = hc1_standard_errors(fit, X, y)
    pvalues, low, high = _t_inference(fit.params, bse, fit.df_resid)

    fit.method = "ols_hc1"
    fit.bse, fit.pvalues, fit.ci_low, fit.ci_high = bse, pvalues, low, high
    return fit


def huber_weight(u, c: float = 1.345) -> np.ndarray:
    """1 for |u| <= c, else c / |u|"""
    return norms.HuberT(t=c).weights(np.asarray(u, dtype=float))


def bisquare_weight(u, c: float = 4.685) -> np.ndarray:
    """(1 - (u/c)^2)^2 for |u| < c, else 0"""
    return norms.TukeyBiweight(c=c).weights(np.asarray(u, dtype=float))


def mad_scale(resid: np.ndarray) -> float:
    """MAD / 0.6745 about zero"""
    return float(mad(resid, center=0))


def _wls(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    sw = np.sqrt(weights)
    return np.linalg.lstsq(X * sw[:, np.newaxis], y * sw, rcond=None)[0]


def _irls_stage(X, y, beta, norm, scale: None|float, config: IrlsConfig, history=None):
    """Iterate weighted least squares. scale=None re-estimates it from the
    residuals each iteration."""

    iterations, converged = 0, False
    current_scale = scale
    for iterations in range(1, config.max_iter + 1):
        resid = y - X @ beta
        if scale is None:
            current_scale = mad_scale(resid)

        weights = norm.weights(resid / current_scale)
        beta_new = _wls(X, y, weights)

        if history is not None:
            before = float(norm.rho(resid / current_scale).sum())
            after = float(norm.rho((y - X @ beta_new) / current_scale).sum())
            history.append((before, after))

        delta = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if delta <= config.tol:
            converged = True
            break

    return beta, current_scale, iterations, converged


def irls_m_fit(X, y, config: None|IrlsConfig = None) -> RobustFit:
    """M-estimation by IRLS: Huber weights with MAD scale re-estimated each
    iteration until convergence, then bisquare weights at the frozen scale."""

    config = config or IrlsConfig()
    X, y, names = _as_arrays(X, y)
    check_rank(X, names)
    n, p = X.shape
    df = n - p

    beta = _wls(X, y, np.ones(n))
    resid = y - X @ beta
    scale = mad_scale(resid)

    # Perfect fit (within rounding): nothing to downweight
    if scale <= 1e-12 * max(1.0, float(np.std(y))):
        fit = ols_fit(X, y)
        fit.method = "m_huber_bisquare"
        fit.scale = 0.0
        fit.weights = np.ones(n)
        return fit

    history: list[tuple[float, float]] = []
    huber = norms.HuberT(t=config.huber_c)
    beta, scale, it1, ok1 = _irls_stage(X, y, beta, huber, None, config, history)

    if scale <= 0:
        raise RegressionException("Robust scale collapsed to 0 during the Huber stage")

    bisquare = norms.TukeyBiweight(c=config.bisquare_c)
    beta, scale, it2, ok2 = _irls_stage(X, y, beta, bisquare, scale, config)

    resid = y - X @ beta
    weights = bisquare.weights(resid / scale)

    warnings = []
    if not (ok1 and ok2):
        warnings.append(f"IRLS did not converge within {config.max_iter} iterations "
                        f"(huber={ok1}, bisquare={ok2})")
        logger.warning(warnings[-1])

    # Covariance from the weighted information matrix at the final weights
    s2 = float((weights * resid ** 2).sum()) / df
    info = (X * weights[:, np.newaxis]).T @ X
    try:
        cov = s2 * np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise RegressionException("Weighted information matrix is singular") from exc

    bse = np.sqrt(np.clip(np.diag(cov), 0, None))
    pvalues, low, high = _t_inference(beta, bse, df)

    return RobustFit(
        method="m_huber_bisquare",
        terms=names,
        params=beta,
        bse=bse,
        pvalues=pvalues,
        ci_low=low,
        ci_high=high,
        fitted=X @ beta,
        resid=resid,
        df_resid=df,
        scale=scale,
        iterations=it1 + it2,
        converged=ok1 and ok2,
        weights=weights,
        history=history,
        warnings=warnings,
    )


def vif(X, names: None|Sequence[str] = None) -> dict[str, float]:
    """Variance inflation factor per predictor: 1 / (1 - R^2) of the predictor
    regressed on the others (with intercept). Perfect collinearity is inf."""

    if isinstance(X, pd.DataFrame):
        names = list(names or X.columns)
        X = X.to_numpy(dtype=float)
    else:
        X = np.asarray(X, dtype=float)
        names = list(names or [f"x{i}" for i in range(X.shape[1])])

    if X.shape[1] < 2:
        raise RegressionException("VIF requires at least 2 predictors")

    rtn = {}
    for j, name in enumerate(names):
        others = sm.add_constant(np.delete(X, j, axis=1), has_constant="add")
        target = X[:, j]
        if np.ptp(target) == 0:
            rtn[name] = math.inf
            continue

        r2 = sm.OLS(target, others).fit().rsquared
        rtn[name] = math.inf if 1.0 - r2 <= 1e-12 else 1.0 / (1.0 - r2)

    return rtn


def linktest(X, y, base_fit: RobustFit) -> Linktest:
    """Regress y on yhat and yhat^2 (with intercept); report yhat^2"""

    X, y, _ = _as_arrays(X, y)
    yhat = X @ base_fit.params
    if np.ptp(yhat) <= 1e-12 * max(1.0, float(np.max(np.abs(yhat)))):
        raise RegressionException("Fitted values are constant; linktest is undefined")

    design = np.column_stack([np.ones(len(y)), yhat, yhat ** 2])
    res = sm.OLS(y, design).fit()
    return Linktest(float(res.params[2]), float(res.pvalues[2]))


_FITTERS = {
    "ols": ols_fit,
    "ols_hc1": ols_hc1_fit,
}


def build_design(region: StudyRegion, design: DesignSpec,
    affinity: None|AffinityResult = None
) -> tuple[pd.DataFrame, pd.Series]:
    """The design matrix (with 'const' first) and the response"""

    if design.response == AFFINITY:
        y = (affinity or affinity_scores(region)).score.astype(float)
    else:
        y = region.column(design.response)

    missing = [x for x in design.terms
               if x not in region.prevalence.columns and x not in region.indicators.columns]
    if missing:
        raise RegressionException(f"Variables not found in region: {missing}")

    X = pd.DataFrame({CONST: np.ones(region.n)}, index=y.index)
    for term in design.terms:
        X[term] = region.column(term)

    return X, y


def fit_model(region: StudyRegion, design: DesignSpec,
    methods: Sequence[str] = METHODS,
    primary: str = "m_huber_bisquare",
    config: None|IrlsConfig = None,
    affinity: None|AffinityResult = None
) -> AffinityModel:
    """Fit one design with all methods and run the diagnostics"""

    rtn = AffinityModel(design)
    try:
        X, y = build_design(region, design, affinity)
        for method in methods:
            if method == "m_huber_bisquare":
                rtn.fits[method] = irls_m_fit(X, y, config)
            elif method in _FITTERS:
                rtn.fits[method] = _FITTERS[method](X, y)
            else:
                raise RegressionException(f"Unknown method: '{method}'")

        base = rtn.fits.get(primary) or next(iter(rtn.fits.values()))
        rtn.diagnostics = Diagnostics(vif(X[design.terms]), linktest(X, y, base))
    except RegressionException as exc:
        logger.warning("Model '%s' not fitted: %s", design.name, exc)
        rtn.error = str(exc)

    return rtn


def fit_affinity_models(region: StudyRegion,
    models: Sequence[str] = ("model1", "model2"),
    methods: Sequence[str] = METHODS,
    primary: str = "m_huber_bisquare",
    config: None|IrlsConfig = None
) -> dict[str, AffinityModel]:
    """Model 1: affinity ~ poverty + unemployment + crime + controls.
    Model 2 adds smoking. A model that cannot be fitted carries its error."""

    unknown = [x for x in models if x not in MODELS]
    if unknown:
        raise RegressionException(f"Unknown models: {unknown}")

    affinity = affinity_scores(region)
    return {name: fit_model(region, MODELS[name], methods, primary, config, affinity)
            for name in models}
