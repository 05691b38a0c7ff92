"""Kalman filter, fixed-interval smoother, and prediction-error utilities.

Missing observations are handled exactly by deleting the affected rows of Z
and H before each measurement update; a step with no observed cells performs
prediction only and contributes zero to the log-likelihood.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ._backend import kernel_loglik
from ._kernel_py import LOG_2PI
from .types import (
    DimensionError,
    FilterNumericalError,
    FilterResult,
    ObservationPanel,
    SmootherResult,
    SystemMatrices,
)


def _prepare(model: SystemMatrices, panel: ObservationPanel):
    """Validate model/panel compatibility and assemble kernel inputs."""
    if panel.n_series != model.n_obs:
        raise DimensionError(
            f"panel has {panel.n_series} series but model expects {model.n_obs}"
        )
    n = panel.n_steps
    supported = model.n_steps_supported()
    if supported is not None and supported < n:
        raise DimensionError(
            f"time-varying transition covers {supported} steps, panel has {n}"
        )
    obs_ok = (~panel.missing_mask).astype(np.uint8)
    y = np.where(panel.missing_mask, 0.0, panel.values)
    if model.slot_index is not None:
        slot_row, slot_col = model.slot_index
        slot_vals = np.ascontiguousarray(model.slot_values[: n - 1], dtype=float)
    else:
        slot_row, slot_col = -1, -1
        slot_vals = np.zeros(max(n - 1, 1))
    return (
        np.ascontiguousarray(y),
        np.ascontiguousarray(obs_ok),
        np.ascontiguousarray(model.transition),
        slot_row,
        slot_col,
        slot_vals,
        np.ascontiguousarray(model.measurement),
        np.ascontiguousarray(model.state_cov),
        np.ascontiguousarray(model.obs_cov),
        np.ascontiguousarray(model.init_mean),
        np.ascontiguousarray(model.init_cov),
    )


def loglik(model: SystemMatrices, panel: ObservationPanel) -> float:
    """Exact Gaussian log-likelihood of the non-missing cells of the panel."""
    ll, _ = kernel_loglik(*_prepare(model, panel))
    return float(ll)


def loglik_final_state(
    model: SystemMatrices, panel: ObservationPanel
) -> tuple[float, np.ndarray]:
    """Log-likelihood together with the filtered state mean at the last step."""
    ll, a_last = kernel_loglik(*_prepare(model, panel))
    return float(ll), np.asarray(a_last)


def kalman_filter(model: SystemMatrices, panel: ObservationPanel) -> FilterResult:
    """Run the Kalman filter, storing all per-step moments.

    Returns predicted and filtered means/covariances for every step, the
    innovations and innovation covariances restricted to observed rows, the
    per-step log-likelihood contributions, and the total log-likelihood.
    """
    (y, obs_ok, Tbase, slot_row, slot_col, slot_vals, Z, Q, H, a1, P1) = _prepare(
        model, panel
    )
    p, n = y.shape
    m = Tbase.shape[0]

    pred_mean = np.empty((n, m))
    pred_cov = np.empty((n, m, m))
    filt_mean = np.empty((n, m))
    filt_cov = np.empty((n, m, m))
    innovations: list[np.ndarray] = []
    innovation_covs: list[np.ndarray] = []
    observed: list[np.ndarray] = []
    loglik_terms = np.zeros(n)

    a = a1.copy()
    P = P1.copy()
    eye_m = np.eye(m)
    for t in range(n):
        pred_mean[t] = a
        pred_cov[t] = P
        idx = np.nonzero(obs_ok[:, t])[0]
        observed.append(idx)
        if idx.size == 0:
            innovations.append(np.empty(0))
            innovation_covs.append(np.empty((0, 0)))
            filt_mean[t] = a
            filt_cov[t] = P
        else:
            Zt = Z[idx]
            Ht = H[np.ix_(idx, idx)]
            v = y[idx, t] - Zt @ a
            C = Zt @ P
            F = C @ Zt.T + Ht
            F = 0.5 * (F + F.T)
            dg = np.diag(F)
            if np.any(dg <= 0.0) or not np.all(np.isfinite(dg)):
                raise FilterNumericalError(f"innovation variance nonpositive at step {t}")
            d = np.sqrt(dg)
            Fs = F / np.outer(d, d)
            try:
                L = cholesky(Fs, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise FilterNumericalError(
                    f"innovation covariance not PD at step {t}"
                ) from exc
            w = solve_triangular(L, v / d, lower=True, check_finite=False)
            loglik_terms[t] = -0.5 * (
                idx.size * LOG_2PI
                + 2.0 * np.sum(np.log(np.diag(L)))
                + 2.0 * np.sum(np.log(d))
                + float(w @ w)
            )
            S = cho_solve((L, True), C / d[:, None], check_finite=False)
            K = (S / d[:, None]).T
            A = eye_m - K @ Zt
            Pf = A @ P @ A.T + K @ Ht @ K.T
            filt_mean[t] = a + K @ v
            filt_cov[t] = 0.5 * (Pf + Pf.T)
            innovations.append(v)
            innovation_covs.append(F)

        if t < n - 1:
            T = Tbase
            if slot_row >= 0:
                T = Tbase.copy()
                T[slot_row, slot_col] = slot_vals[t]
            a = T @ filt_mean[t]
            P = T @ filt_cov[t] @ T.T + Q
            P = 0.5 * (P + P.T)

    total = float(loglik_terms.sum())
    if not np.isfinite(total):
        raise FilterNumericalError("log-likelihood not finite")
    return FilterResult(
        pred_mean=pred_mean,
        pred_cov=pred_cov,
        filt_mean=filt_mean,
        filt_cov=filt_cov,
        innovations=innovations,
        innovation_covs=innovation_covs,
        observed_indices=observed,
        loglik_terms=loglik_terms,
        loglik=total,
        n_obs=p,
    )


def kalman_smoother(model: SystemMatrices, filt: FilterResult) -> SmootherResult:
    """Fixed-interval smoother (backward recursion on the filter output).

    The boundary condition reproduces the filtered moments at the final step
    exactly as stored.
    """
    n = filt.n_steps
    supported = model.n_steps_supported()
    if supported is not None and supported < n:
        raise DimensionError("time-varying transition shorter than filter output")
    m = filt.pred_mean.shape[1]
    smooth_mean = np.empty((n, m))
    smooth_cov = np.empty((n, m, m))
    smooth_mean[n - 1] = filt.filt_mean[n - 1]
    smooth_cov[n - 1] = filt.filt_cov[n - 1]
    for t in range(n - 2, -1, -1):
        T = model.transition_at(t) if model.slot_index is not None else model.transition
        # pinv handles exactly singular predicted covariances (deterministic states)
        G = filt.filt_cov[t] @ T.T @ np.linalg.pinv(filt.pred_cov[t + 1], hermitian=True)
        smooth_mean[t] = filt.filt_mean[t] + G @ (smooth_mean[t + 1] - filt.pred_mean[t + 1])
        Sc = filt.filt_cov[t] + G @ (smooth_cov[t + 1] - filt.pred_cov[t + 1]) @ G.T
        smooth_cov[t] = 0.5 * (Sc + Sc.T)
    return SmootherResult(smooth_mean=smooth_mean, smooth_cov=smooth_cov)


def standardized_innovations(filt: FilterResult) -> np.ndarray:
    """One-step prediction errors scaled by the inverse square root of F_t.

    The square root is taken by eigendecomposition. Returns a (p, n) array
    with NaN wherever the corresponding cell was missing.
    """
    n = filt.n_steps
    out = np.full((filt.n_obs, n), np.nan)
    for t in range(n):
        idx = filt.observed_indices[t]
        if idx.size == 0:
            continue
        F = filt.innovation_covs[t]
        w, V = np.linalg.eigh(0.5 * (F + F.T))
        if w.min() <= 0.0:
            raise FilterNumericalError(f"innovation covariance not PD at step {t}")
        out[idx, t] = (V / np.sqrt(w)) @ (V.T @ filt.innovations[t])
    return out
