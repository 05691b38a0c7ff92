"""Unconditional simulation from a linear Gaussian state space model."""

from __future__ import annotations

import numpy as np

from ._backend import kernel_simulate_states
from .types import SystemMatrices


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, clipping tiny
    negative eigenvalues at zero."""
    sym = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(sym)
    if w.min() < -1e-8 * max(1.0, abs(w.max())):
        raise ValueError(f"covariance not PSD (min eig {w.min():.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def simulate_ssm(
    model: SystemMatrices, horizon: int, rng_seed
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one state/observation trajectory of length ``horizon``.

    X_1 ~ N(a1, P1), then the state recursion with Gaussian disturbances and
    measurement errors. Deterministic given the seed: the generator draws the
    initial state first, then all state disturbances, then all measurement
    errors. ``rng_seed`` may be an integer, a SeedSequence, or an existing
    Generator (which is advanced in place). Returns ``(states,
    observations)`` with shapes (horizon, m) and (p, horizon).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    supported = model.n_steps_supported()
    if supported is not None and supported < horizon:
        raise ValueError(f"time-varying transition covers {supported} steps, need {horizon}")
    m = model.n_states
    p = model.n_obs
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)

    sq_P1 = psd_sqrt(model.init_cov)
    sq_Q = psd_sqrt(model.state_cov)
    sq_H = psd_sqrt(model.obs_cov)

    x1 = model.init_mean + sq_P1 @ rng.standard_normal(m)
    etas = rng.standard_normal((max(horizon - 1, 0), m)) @ sq_Q.T
    eps = sq_H @ rng.standard_normal((p, horizon))

    if model.slot_index is not None:
        slot_row, slot_col = model.slot_index
        slot_vals = np.ascontiguousarray(model.slot_values[: horizon - 1], dtype=float)
    else:
        slot_row, slot_col = -1, -1
        slot_vals = np.zeros(max(horizon - 1, 1))

    states = kernel_simulate_states(
        np.ascontiguousarray(x1),
        np.ascontiguousarray(model.transition),
        slot_row,
        slot_col,
        slot_vals,
        np.ascontiguousarray(etas),
    )
    states = np.asarray(states)
    observations = model.measurement @ states.T + eps
    return states, observations
