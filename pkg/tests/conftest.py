"""Shared fixtures: random small state-space models, brute-force Gaussian
oracles, and the data-generating parameter set used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from ebmfit.model import EbmParamVector, MeasurementConfig, NoiseParams, PhysicalParams
from ebmfit.ssm import ObservationPanel, SeriesMeta, SystemMatrices


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T) / n + 1e-3 * np.eye(n)


def random_model(
    rng: np.random.Generator,
    m: int | None = None,
    p: int | None = None,
    time_varying: bool = False,
    n_steps: int = 8,
) -> SystemMatrices:
    """A random stable small model, optionally with a time-varying entry."""
    m = m if m is not None else int(rng.integers(1, 5))
    p = p if p is not None else int(rng.integers(1, 4))
    T = rng.standard_normal((m, m))
    radius = max(abs(np.linalg.eigvals(T)))
    if radius > 0:
        T *= 0.9 / radius
    slot_index = None
    slot_values = None
    if time_varying:
        slot_index = (int(rng.integers(0, m)), int(rng.integers(0, m)))
        slot_values = rng.standard_normal(n_steps - 1) * 0.5
    return SystemMatrices(
        transition=T,
        measurement=rng.standard_normal((p, m)),
        state_cov=random_psd(rng, m, 0.5),
        obs_cov=random_psd(rng, p, 0.5),
        init_mean=rng.standard_normal(m),
        init_cov=random_psd(rng, m),
        slot_index=slot_index,
        slot_values=slot_values,
    )


def make_panel(values: np.ndarray, start_year: int = 2000) -> ObservationPanel:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    p, n = values.shape
    meta = [SeriesMeta(label=f"s{i}", kind="gmst") for i in range(p)]
    return ObservationPanel(
        years=np.arange(start_year, start_year + n), values=values, series_meta=meta
    )


def stacked_moments(model: SystemMatrices, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the stacked observation vector (Y_1 ... Y_n)."""
    m, p = model.n_states, model.n_obs
    Ts = [model.transition_at(t) for t in range(n - 1)]
    mu = np.zeros((n, m))
    mu[0] = model.init_mean
    for t in range(n - 1):
        mu[t + 1] = Ts[t] @ mu[t]
    cov = np.zeros((n, n, m, m))
    cov[0, 0] = model.init_cov
    for t in range(n - 1):
        cov[t + 1, t + 1] = Ts[t] @ cov[t, t] @ Ts[t].T + model.state_cov
    for s in range(n):
        for t in range(s + 1, n):
            cov[s, t] = cov[s, t - 1] @ Ts[t - 1].T
            cov[t, s] = cov[s, t].T
    Z, H = model.measurement, model.obs_cov
    mu_y = (Z @ mu.T).T.ravel()
    cov_y = np.zeros((n * p, n * p))
    for s in range(n):
        for t in range(n):
            block = Z @ cov[s, t] @ Z.T
            if s == t:
                block = block + H
            cov_y[s * p : (s + 1) * p, t * p : (t + 1) * p] = block
    return mu_y, cov_y


def bruteforce_loglik(model: SystemMatrices, panel: ObservationPanel) -> float:
    """Joint Gaussian log-density of all non-missing cells, built directly
    from the model-implied moments of the stacked observation vector."""
    n = panel.n_steps
    mu_y, cov_y = stacked_moments(model, n)
    observed = (~panel.missing_mask).T.ravel()
    y = panel.values.T.ravel()[observed]
    mu = mu_y[observed]
    cov = cov_y[np.ix_(observed, observed)]
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    resid = y - mu
    return float(
        -0.5 * (observed.sum() * np.log(2 * np.pi) + logdet + resid @ np.linalg.solve(cov, resid))
    )


def bruteforce_smoothed_state(
    model: SystemMatrices, panel: ObservationPanel, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean/covariance of X_t given all non-missing data, by
    direct Gaussian conditioning on the stacked joint distribution."""
    n = panel.n_steps
    m = model.n_states
    Ts = [model.transition_at(s) for s in range(n - 1)]
    mu = np.zeros((n, m))
    mu[0] = model.init_mean
    for s in range(n - 1):
        mu[s + 1] = Ts[s] @ mu[s]
    cov = np.zeros((n, n, m, m))
    cov[0, 0] = model.init_cov
    for s in range(n - 1):
        cov[s + 1, s + 1] = Ts[s] @ cov[s, s] @ Ts[s].T + model.state_cov
    for s in range(n):
        for u in range(s + 1, n):
            cov[s, u] = cov[s, u - 1] @ Ts[u - 1].T
            cov[u, s] = cov[s, u].T
    Z, H = model.measurement, model.obs_cov
    p = model.n_obs
    mu_y, cov_y = stacked_moments(model, n)
    cross = np.zeros((m, n * p))
    for s in range(n):
        cross[:, s * p : (s + 1) * p] = cov[t, s] @ Z.T
    observed = (~panel.missing_mask).T.ravel()
    y = panel.values.T.ravel()[observed]
    S = cov_y[np.ix_(observed, observed)]
    C = cross[:, observed]
    gain = C @ np.linalg.inv(S)
    mean = mu[t] + gain @ (y - mu_y[observed])
    covariance = cov[t, t] - gain @ C.T
    return mean, covariance


# Data-generating parameter values used by the recovery study (full layout:
# eight GMST series, two ocean pairs, one forcing series).
DGP_FULL = EbmParamVector(
    physical=PhysicalParams(lam=1.0828, gamma=1.3027, c_m=9.6376, c_d=98.4886),
    noise=NoiseParams(
        var_eta_tm=0.0122,
        var_eta_td=3.66e-5,
        var_eta_a=4.73e-5,
        var_eta_beta=9.72e-6,
        var_eps_gmst=(0.0010, 0.00090, 0.00241, 0.0118, 0.00282, 0.00659, 0.00074, 0.00026),
        var_eps_td=(0.00014, 0.00015),
        var_eps_ohc=(1.5311, 1.2805),
        var_eps_forcing=1.61e-11,
        rho=(0.9092, 0.9943),
        mu_td=(-0.2738, -0.2802),
    ),
)

CONFIG_FULL = MeasurementConfig(n_gmst=8, n_ocean_pairs=2)
CONFIG_BASE = MeasurementConfig(n_gmst=1, n_ocean_pairs=1)

#: Sample years of the recovery study (length 66).
SAMPLE_YEARS = np.arange(1955, 2021)


def reference_anthro_series() -> tuple[np.ndarray, np.ndarray]:
    """Synthetic stand-in for the historical anthropogenic forcing series:
    a near-linear upward ramp over the sample years."""
    years = SAMPLE_YEARS
    values = np.linspace(0.8, 3.0, years.size)
    return years, values


def zero_natural_series() -> tuple[np.ndarray, np.ndarray]:
    years = SAMPLE_YEARS
    return years, np.zeros(years.size)


@pytest.fixture
def dgp_full() -> EbmParamVector:
    return DGP_FULL


@pytest.fixture
def config_full() -> MeasurementConfig:
    return CONFIG_FULL


@pytest.fixture
def config_base() -> MeasurementConfig:
    return CONFIG_BASE
