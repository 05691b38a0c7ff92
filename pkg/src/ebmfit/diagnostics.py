"""Time-series diagnostics: unit-root tests and residual statistics.

The unit-root test regresses the first difference on the lagged level, a
constant (optionally a linear trend), and lagged differences:

    dy_t = alpha [+ beta t] + pi y_{t-1} + sum_{j=1..k} gamma_j dy_{t-j} + e_t

The lag order k is chosen by BIC with all candidates estimated on the
common sample implied by ``max_lag`` (ties to the smaller k); the reported
statistic is the t-ratio on pi from a refit of the chosen lag on its own
maximal sample. Critical values come from response-surface coefficients
shipped as package data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np


def _critical_value_table() -> dict:
    with resources.files("ebmfit.resources").joinpath("adf_critical_values.json").open() as fh:
        return json.load(fh)


_CRIT = _critical_value_table()


def critical_values(spec: str, n_obs: int) -> dict[str, float]:
    """1%/5%/10% critical values for a regression with ``n_obs`` rows."""
    if spec not in ("c", "ct"):
        raise ValueError("spec must be 'c' (constant) or 'ct' (constant + trend)")
    out = {}
    for level, coef in _CRIT[spec].items():
        b0, b1, b2, b3 = coef
        out[level] = b0 + b1 / n_obs + b2 / n_obs**2 + b3 / n_obs**3
    return out


@dataclass
class AdfResult:
    statistic: float
    chosen_lag: int
    spec: str
    n_obs: int
    crit_1pct: float
    crit_5pct: float
    reject_1pct: bool
    reject_5pct: bool


def _adf_design(y: np.ndarray, lag: int, spec: str) -> tuple[np.ndarray, np.ndarray]:
    """Response dy_t and regressors for a given lag, on that lag's maximal
    sample: columns are [y_{t-1}, dy_{t-1..t-lag}, const, (trend)]."""
    dy = np.diff(y)
    n = dy.size
    rows = n - lag
    X = np.empty((rows, lag + 2 + (1 if spec == "ct" else 0)))
    X[:, 0] = y[lag : lag + rows]
    for j in range(1, lag + 1):
        X[:, j] = dy[lag - j : lag - j + rows]
    X[:, lag + 1] = 1.0
    if spec == "ct":
        X[:, lag + 2] = np.arange(1, rows + 1)
    return dy[lag:], X


def _ols_tstat_and_bic(yv: np.ndarray, X: np.ndarray) -> tuple[float, float]:
    """t-ratio on the first column and the BIC of the regression."""
    n, k = X.shape
    coef, _, rank, _ = np.linalg.lstsq(X, yv, rcond=None)
    if rank < k:
        raise ValueError("singular regressor matrix (constant or degenerate series)")
    resid = yv - X @ coef
    rss = float(resid @ resid)
    if rss <= 0:
        raise ValueError("degenerate regression with zero residual variance")
    sigma2 = rss / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(sigma2 * xtx_inv[0, 0])
    bic = n * np.log(rss / n) + k * np.log(n)
    return float(coef[0] / se), float(bic)


def adf_test(
    series: np.ndarray, spec: str = "c", max_lag: int = 15, criterion: str = "bic"
) -> AdfResult:
    """Unit-root t-test with information-criterion lag selection.

    The null is a unit root; rejection flags compare the t-ratio on the
    lagged level against the 1% and 5% critical values.
    """
    if criterion.lower() != "bic":
        raise ValueError("only BIC lag selection is supported")
    y = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("series must be finite (remove missing values first)")
    if y.size <= max_lag + 6:
        raise ValueError(f"series too short for max_lag={max_lag}")

    # candidate comparison on the common sample implied by max_lag
    dy = np.diff(y)
    n_common = dy.size - max_lag
    best_lag, best_bic = 0, np.inf
    for lag in range(max_lag + 1):
        yv, X = _adf_design(y, lag, spec)
        yv, X = yv[-n_common:], X[-n_common:]
        _, bic = _ols_tstat_and_bic(yv, X)
        if bic < best_bic - 1e-12:
            best_bic, best_lag = bic, lag

    yv, X = _adf_design(y, best_lag, spec)
    stat, _ = _ols_tstat_and_bic(yv, X)
    n_obs = yv.size
    crit = critical_values(spec, n_obs)
    return AdfResult(
        statistic=stat,
        chosen_lag=best_lag,
        spec=spec,
        n_obs=n_obs,
        crit_1pct=crit["1%"],
        crit_5pct=crit["5%"],
        reject_1pct=stat < crit["1%"],
        reject_5pct=stat < crit["5%"],
    )


def _central_moments(x: np.ndarray) -> tuple[float, float, float, float]:
    mean = x.mean()
    d = x - mean
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return mean, m2, m3, m4


def jarque_bera(sample: np.ndarray) -> float:
    """Normality statistic n/6 (S^2 + (K - 3)^2 / 4) from sample skewness S
    and raw kurtosis K."""
    x = np.asarray(sample, dtype=float).ravel()
    x = x[np.isfinite(x)]
    n = x.size
    if n < 8:
        raise ValueError("need at least 8 observations")
    _, m2, m3, m4 = _central_moments(x)
    if m2 <= 0:
        raise ValueError("zero variance sample")
    skew = m3 / m2**1.5
    kurt = m4 / m2**2
    return n / 6.0 * (skew**2 + 0.25 * (kurt - 3.0) ** 2)


def ljung_box(sample: np.ndarray, k: int) -> float:
    """Portmanteau statistic Q(k) = n (n + 2) sum_{j<=k} rho_j^2 / (n - j)."""
    x = np.asarray(sample, dtype=float).ravel()
    x = x[np.isfinite(x)]
    n = x.size
    if not 1 <= k < n:
        raise ValueError("need n > k >= 1")
    d = x - x.mean()
    denom = float(d @ d)
    if denom <= 0:
        raise ValueError("zero variance sample")
    q = 0.0
    for j in range(1, k + 1):
        rho = float(d[j:] @ d[:-j]) / denom
        q += rho**2 / (n - j)
    return n * (n + 2.0) * q


def residual_summary(sample: np.ndarray) -> dict[str, float]:
    """Mean, standard deviation, skewness, raw kurtosis, the normality
    statistic, and Q(1) of a residual series (missing values dropped)."""
    x = np.asarray(sample, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 8:
        raise ValueError("need at least 8 observations")
    mean, m2, m3, m4 = _central_moments(x)
    return {
        "mean": float(mean),
        "std": float(x.std(ddof=1)),
        "skewness": m3 / m2**1.5,
        "kurtosis": m4 / m2**2,
        "jarque_bera": jarque_bera(x),
        "q1": ljung_box(x, 1),
    }
