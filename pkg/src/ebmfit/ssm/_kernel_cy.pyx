# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled state-space kernels (hot path).

Same algorithm as ``_kernel_py``: diagonally equilibrated Cholesky for the
innovation covariance and a Joseph-form covariance update. The matrices
here are small (state dim ~6, obs dim ~13) and structurally sparse, so the
kernel scans the nonzero patterns of Z, T, and H once per call and runs
plain C loops over them; that beats both dense loops and BLAS dispatch.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, log, sqrt

from .types import FilterNumericalError

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def kernel_loglik(
    double[:, ::1] y,
    unsigned char[:, ::1] obs_ok,
    double[:, ::1] transition,
    int slot_row,
    int slot_col,
    double[::1] slot_vals,
    double[:, ::1] Z,
    double[:, ::1] Q,
    double[:, ::1] H,
    double[::1] a1,
    double[:, ::1] P1,
):
    """Gaussian log-likelihood of the observed cells plus final filtered mean."""
    cdef Py_ssize_t p = y.shape[0]
    cdef Py_ssize_t n = y.shape[1]
    cdef Py_ssize_t m = transition.shape[0]

    a_arr = np.array(a1, dtype=np.float64)
    P_arr = np.array(P1, dtype=np.float64)
    T_arr = np.array(transition, dtype=np.float64)
    cdef double[::1] a = a_arr
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] T = T_arr

    # nonzero columns of each Z row
    znn_arr = np.zeros(p, dtype=np.intp)
    zcol_arr = np.zeros((p, m), dtype=np.intp)
    cdef Py_ssize_t[::1] znn = znn_arr
    cdef Py_ssize_t[:, ::1] zcol = zcol_arr
    cdef Py_ssize_t i, j, q, r, c, k, t, nz
    for i in range(p):
        nz = 0
        for j in range(m):
            if Z[i, j] != 0.0:
                zcol[i, nz] = j
                nz += 1
        znn[i] = nz

    # nonzero entries of the transition (slot entry always included)
    tnn_arr = np.zeros(1, dtype=np.intp)
    trow_arr = np.zeros(m * m, dtype=np.intp)
    tcol_arr = np.zeros(m * m, dtype=np.intp)
    cdef Py_ssize_t[::1] trow = trow_arr
    cdef Py_ssize_t[::1] tcol = tcol_arr
    nz = 0
    for i in range(m):
        for j in range(m):
            if T[i, j] != 0.0 or (i == slot_row and j == slot_col):
                trow[nz] = i
                tcol[nz] = j
                nz += 1
    cdef Py_ssize_t tnn = nz

    # nonzero rows of each H column
    hnn_arr = np.zeros(p, dtype=np.intp)
    hrow_arr = np.zeros((p, p), dtype=np.intp)
    cdef Py_ssize_t[::1] hnn = hnn_arr
    cdef Py_ssize_t[:, ::1] hrow = hrow_arr
    for j in range(p):
        nz = 0
        for i in range(p):
            if H[i, j] != 0.0:
                hrow[j, nz] = i
                nz += 1
        hnn[j] = nz

    idx_arr = np.empty(p, dtype=np.intp)
    inv_arr = np.empty(p, dtype=np.intp)
    v_arr = np.empty(p, dtype=np.float64)
    d_arr = np.empty(p, dtype=np.float64)
    dinv_arr = np.empty(p, dtype=np.float64)
    linv_arr = np.empty(p, dtype=np.float64)
    w_arr = np.empty(p, dtype=np.float64)
    u_arr = np.empty(p, dtype=np.float64)
    F_arr = np.empty((p, p), dtype=np.float64)
    L_arr = np.empty((p, p), dtype=np.float64)
    C_arr = np.empty((p, m), dtype=np.float64)
    S_arr = np.empty((p, m), dtype=np.float64)
    K_arr = np.empty((m, p), dtype=np.float64)
    A_arr = np.empty((m, m), dtype=np.float64)
    W1_arr = np.empty((m, m), dtype=np.float64)
    KH_arr = np.empty((m, p), dtype=np.float64)
    Pf_arr = np.empty((m, m), dtype=np.float64)
    af_arr = np.empty(m, dtype=np.float64)
    an_arr = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef Py_ssize_t[::1] inv = inv_arr
    cdef double[::1] v = v_arr
    cdef double[::1] d = d_arr
    cdef double[::1] dinv = dinv_arr
    cdef double[::1] linv = linv_arr
    cdef double[::1] w = w_arr
    cdef double[::1] u = u_arr
    cdef double[:, ::1] F = F_arr
    cdef double[:, ::1] L = L_arr
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] S = S_arr
    cdef double[:, ::1] K = K_arr
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] W1 = W1_arr
    cdef double[:, ::1] KH = KH_arr
    cdef double[:, ::1] Pf = Pf_arr
    cdef double[::1] a_f = af_arr
    cdef double[::1] a_new = an_arr

    cdef double loglik = 0.0
    cdef double s, quad, logdet, zv

    for t in range(n):
        k = 0
        for i in range(p):
            inv[i] = -1
            if obs_ok[i, t]:
                idx[k] = i
                inv[i] = k
                k += 1

        if k == 0:
            for i in range(m):
                a_f[i] = a[i]
                for j in range(m):
                    Pf[i, j] = P[i, j]
        else:
            # v = y_t - Z_t a ; C = Z_t P (via the Z row patterns)
            for i in range(k):
                r = idx[i]
                s = 0.0
                for q in range(znn[r]):
                    s += Z[r, zcol[r, q]] * a[zcol[r, q]]
                v[i] = y[r, t] - s
                for j in range(m):
                    s = 0.0
                    for q in range(znn[r]):
                        s += Z[r, zcol[r, q]] * P[zcol[r, q], j]
                    C[i, j] = s
            # F = C Z_t' + H_t
            for i in range(k):
                for j in range(i + 1):
                    r = idx[j]
                    s = H[idx[i], r]
                    for q in range(znn[r]):
                        s += C[i, zcol[r, q]] * Z[r, zcol[r, q]]
                    F[i, j] = s
                    F[j, i] = s

            # diagonal equilibration, then Cholesky of the scaled matrix
            for i in range(k):
                s = F[i, i]
                if not (s > 0.0) or not isfinite(s):
                    raise FilterNumericalError(
                        f"innovation variance nonpositive at step {t}"
                    )
                d[i] = sqrt(s)
                dinv[i] = 1.0 / d[i]
            for i in range(k):
                for j in range(i + 1):
                    L[i, j] = F[i, j] * (dinv[i] * dinv[j])
            logdet = 0.0
            for j in range(k):
                s = L[j, j]
                for q in range(j):
                    s -= L[j, q] * L[j, q]
                if not (s > 0.0):
                    raise FilterNumericalError(
                        f"innovation covariance not PD at step {t}"
                    )
                s = sqrt(s)
                L[j, j] = s
                linv[j] = 1.0 / s
                logdet += 2.0 * log(s) + 2.0 * log(d[j])
                for i in range(j + 1, k):
                    s = L[i, j]
                    for q in range(j):
                        s -= L[i, q] * L[j, q]
                    L[i, j] = s * linv[j]

            # quad = v' F^{-1} v via scaled forward solve
            for i in range(k):
                s = v[i] * dinv[i]
                for q in range(i):
                    s -= L[i, q] * w[q]
                w[i] = s * linv[i]
            quad = 0.0
            for i in range(k):
                quad += w[i] * w[i]
            loglik += -0.5 * (k * LOG_2PI + logdet + quad)

            # S = Fs^{-1} (C row-scaled), column by column; K = (S row-scaled)'
            for j in range(m):
                for i in range(k):
                    s = C[i, j] * dinv[i]
                    for q in range(i):
                        s -= L[i, q] * u[q]
                    u[i] = s * linv[i]
                for i in range(k - 1, -1, -1):
                    s = u[i]
                    for q in range(i + 1, k):
                        s -= L[q, i] * u[q]
                    u[i] = s * linv[i]
                for i in range(k):
                    S[i, j] = u[i]
            for i in range(m):
                for q in range(k):
                    K[i, q] = S[q, i] * dinv[q]

            # a_f = a + K v ; A = I - K Z_t (via the Z row patterns)
            for i in range(m):
                s = a[i]
                for q in range(k):
                    s += K[i, q] * v[q]
                a_f[i] = s
            for i in range(m):
                for j in range(m):
                    A[i, j] = 1.0 if i == j else 0.0
            for q in range(k):
                r = idx[q]
                for nz in range(znn[r]):
                    c = zcol[r, nz]
                    zv = Z[r, c]
                    for i in range(m):
                        A[i, c] -= K[i, q] * zv
            # Joseph: Pf = A P A' + K H_t K'
            for i in range(m):
                for j in range(m):
                    s = 0.0
                    for q in range(m):
                        s += A[i, q] * P[q, j]
                    W1[i, j] = s
            for i in range(m):
                for j in range(i + 1):
                    s = 0.0
                    for q in range(m):
                        s += W1[i, q] * A[j, q]
                    Pf[i, j] = s
                    Pf[j, i] = s
            # KH = K H_t (via the H column patterns)
            for j in range(k):
                c = idx[j]
                for i in range(m):
                    KH[i, j] = 0.0
                for nz in range(hnn[c]):
                    r = hrow[c, nz]
                    q = inv[r]
                    if q >= 0:
                        zv = H[r, c]
                        for i in range(m):
                            KH[i, j] += K[i, q] * zv
            for i in range(m):
                for j in range(i + 1):
                    s = 0.0
                    for q in range(k):
                        s += KH[i, q] * K[j, q]
                    Pf[i, j] += s
                    if j != i:
                        Pf[j, i] = Pf[i, j]

        if t < n - 1:
            if slot_row >= 0:
                T[slot_row, slot_col] = slot_vals[t]
            # a = T a_f ; P = T Pf T' + Q (via the transition pattern)
            for i in range(m):
                a_new[i] = 0.0
                for j in range(m):
                    W1[i, j] = 0.0
            for nz in range(tnn):
                i = trow[nz]
                c = tcol[nz]
                zv = T[i, c]
                a_new[i] += zv * a_f[c]
                for j in range(m):
                    W1[i, j] += zv * Pf[c, j]
            for i in range(m):
                a[i] = a_new[i]
                for j in range(m):
                    P[i, j] = Q[i, j]
            for nz in range(tnn):
                j = trow[nz]
                c = tcol[nz]
                zv = T[j, c]
                for i in range(m):
                    P[i, j] += W1[i, c] * zv

    if not isfinite(loglik):
        raise FilterNumericalError("log-likelihood not finite")
    return loglik, np.array(a_f)


def kernel_simulate_states(
    double[::1] x1,
    double[:, ::1] transition,
    int slot_row,
    int slot_col,
    double[::1] slot_vals,
    double[:, ::1] etas,
):
    """State recursion X_{t+1} = T_t X_t + eta_t for pre-drawn disturbances."""
    cdef Py_ssize_t n = etas.shape[0] + 1
    cdef Py_ssize_t m = x1.shape[0]
    states_arr = np.empty((n, m), dtype=np.float64)
    T_arr = np.array(transition, dtype=np.float64)
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] T = T_arr
    cdef Py_ssize_t t, i, j
    cdef double s

    for i in range(m):
        states[0, i] = x1[i]
    for t in range(n - 1):
        if slot_row >= 0:
            T[slot_row, slot_col] = slot_vals[t]
        for i in range(m):
            s = etas[t, i]
            for j in range(m):
                s += T[i, j] * states[t, j]
            states[t + 1, i] = s
    return states_arr
