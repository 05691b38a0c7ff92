"""Pure-NumPy state-space kernels (reference backend).

These mirror the compiled kernels in ``_kernel_cy`` step for step: diagonal
equilibration of the innovation covariance before its Cholesky factorization
(the diffuse "big K" initialization mixes scales of 1e6 and 1e-12 in one
matrix) and a Joseph-form covariance update, which stays PSD under rounding.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .types import FilterNumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


def kernel_loglik(
    y: np.ndarray,
    obs_ok: np.ndarray,
    transition: np.ndarray,
    slot_row: int,
    slot_col: int,
    slot_vals: np.ndarray,
    Z: np.ndarray,
    Q: np.ndarray,
    H: np.ndarray,
    a1: np.ndarray,
    P1: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Gaussian log-likelihood of the observed cells plus final filtered mean.

    ``y`` is (p, n) with unobserved cells already zeroed; ``obs_ok`` is the
    (p, n) uint8 observation indicator. ``slot_row < 0`` means the transition
    is time-invariant.
    """
    p, n = y.shape
    m = transition.shape[0]
    a = a1.astype(float).copy()
    P = P1.astype(float).copy()
    loglik = 0.0
    a_f = a.copy()

    for t in range(n):
        idx = np.nonzero(obs_ok[:, t])[0]
        k = idx.size
        if k == 0:
            a_f = a
            P_f = P
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
                raise FilterNumericalError(f"innovation covariance not PD at step {t}") from exc
            vs = v / d
            w = solve_triangular(L, vs, lower=True, check_finite=False)
            quad = float(w @ w)
            logdet = 2.0 * float(np.sum(np.log(np.diag(L)))) + 2.0 * float(np.sum(np.log(d)))
            loglik += -0.5 * (k * LOG_2PI + logdet + quad)

            Cs = C / d[:, None]
            S = cho_solve((L, True), Cs, check_finite=False)
            K = (S / d[:, None]).T
            a_f = a + K @ v
            A = np.eye(m) - K @ Zt
            P_f = A @ P @ A.T + K @ Ht @ K.T
            P_f = 0.5 * (P_f + P_f.T)

        if t < n - 1:
            T = transition
            if slot_row >= 0:
                T = transition.copy()
                T[slot_row, slot_col] = slot_vals[t]
            a = T @ a_f
            P = T @ P_f @ T.T + Q
            P = 0.5 * (P + P.T)

    if not np.isfinite(loglik):
        raise FilterNumericalError("log-likelihood not finite")
    return loglik, a_f


def kernel_simulate_states(
    x1: np.ndarray,
    transition: np.ndarray,
    slot_row: int,
    slot_col: int,
    slot_vals: np.ndarray,
    etas: np.ndarray,
) -> np.ndarray:
    """State recursion X_{t+1} = T_t X_t + eta_t for pre-drawn disturbances.

    ``etas`` is (n - 1, m); returns the (n, m) state path.
    """
    n = etas.shape[0] + 1
    m = x1.shape[0]
    states = np.empty((n, m))
    states[0] = x1
    T = transition.copy()
    for t in range(n - 1):
        if slot_row >= 0:
            T[slot_row, slot_col] = slot_vals[t]
        states[t + 1] = T @ states[t] + etas[t]
    return states
