# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the assembly kernels in :mod:`grbf._kernels_py`."""

import numpy as np

from libc.math cimport INFINITY, exp, log, sqrt

cdef double LOG_2PI = 1.8378770664093453
cdef double EXP_FLOOR = -708.0


cdef int _cholesky(double* A, double* L, int d) noexcept nogil:
    """Lower Cholesky factor of the row-major ``d x d`` matrix ``A``; -1 if not SPD."""
    cdef int i, j, k
    cdef double s
    for i in range(d):
        for j in range(i + 1):
            s = A[i * d + j]
            for k in range(j):
                s -= L[i * d + k] * L[j * d + k]
            if i == j:
                if s <= 0.0:
                    return -1
                L[i * d + i] = sqrt(s)
            else:
                L[i * d + j] = s / L[j * d + j]
        for j in range(i + 1, d):
            L[i * d + j] = 0.0
    return 0


cdef void _chol_inverse(double* L, double* C, double* tmp, int d) noexcept nogil:
    """``C = (L Lᵀ)^{-1}`` via ``tmp = L^{-1}`` and ``C = tmpᵀ tmp``."""
    cdef int i, j, k
    cdef double s
    for j in range(d):
        for i in range(d):
            if i < j:
                tmp[i * d + j] = 0.0
                continue
            s = 1.0 if i == j else 0.0
            for k in range(j, i):
                s -= L[i * d + k] * tmp[k * d + j]
            tmp[i * d + j] = s / L[i * d + i]
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s += tmp[k * d + i] * tmp[k * d + j]
            C[i * d + j] = s


def cross_mass_stiffness(ma, Pa, lda, mb, Pb, ldb):
    cdef double[:, ::1] mA = np.ascontiguousarray(ma, dtype=np.float64)
    cdef double[:, ::1] mB = np.ascontiguousarray(mb, dtype=np.float64)
    cdef double[:, :, ::1] PA = np.ascontiguousarray(Pa, dtype=np.float64)
    cdef double[:, :, ::1] PB = np.ascontiguousarray(Pb, dtype=np.float64)
    cdef double[::1] lA = np.ascontiguousarray(lda, dtype=np.float64)
    cdef double[::1] lB = np.ascontiguousarray(ldb, dtype=np.float64)
    cdef Py_ssize_t na = mA.shape[0], nb = mB.shape[0]
    cdef int d = <int>mA.shape[1]
    M_out = np.empty((na, nb))
    S_out = np.empty((na, nb))
    cdef double[:, ::1] M = M_out
    cdef double[:, ::1] S = S_out
    cdef double[::1] work = np.empty(6 * d * d + 3 * d)
    cdef double* P = &work[0]
    cdef double* L = P + d * d
    cdef double* C = L + d * d
    cdef double* T = C + d * d
    cdef double* K = T + d * d
    cdef double* U = K + d * d
    cdef double* delta = U + d * d
    cdef double* kd = delta + d
    cdef double* ktd = kd + d
    cdef Py_ssize_t a, b
    cdef int i, j, k, bad = 0
    cdef double s, logdetP, q, tr, z, pa, pb, pp, kk, dd
    with nogil:
        for a in range(na):
            for b in range(nb):
                if d == 1:
                    pa = PA[a, 0, 0]
                    pb = PB[b, 0, 0]
                    pp = pa + pb
                    kk = pa * pb / pp
                    dd = mB[b, 0] - mA[a, 0]
                    z = exp(-0.5 * (LOG_2PI + lA[a] + lB[b] + log(pp) + kk * dd * dd))
                    M[a, b] = z
                    S[a, b] = z * (kk - kk * kk * dd * dd)
                    continue
                for i in range(d * d):
                    P[i] = (&PA[a, 0, 0])[i] + (&PB[b, 0, 0])[i]
                if _cholesky(P, L, d) != 0:
                    bad = 1
                    break
                logdetP = 0.0
                for i in range(d):
                    logdetP += 2.0 * log(L[i * d + i])
                _chol_inverse(L, C, T, d)
                # U = C Pb, K = Pa U
                for i in range(d):
                    for j in range(d):
                        s = 0.0
                        for k in range(d):
                            s += C[i * d + k] * PB[b, k, j]
                        U[i * d + j] = s
                for i in range(d):
                    for j in range(d):
                        s = 0.0
                        for k in range(d):
                            s += PA[a, i, k] * U[k * d + j]
                        K[i * d + j] = s
                # tr(C Pa Pb) = Σ_ik (C Pa)_{ik} Pb_{ki}; reuse T for C Pa
                tr = 0.0
                for i in range(d):
                    for j in range(d):
                        s = 0.0
                        for k in range(d):
                            s += C[i * d + k] * PA[a, k, j]
                        T[i * d + j] = s
                for i in range(d):
                    for k in range(d):
                        tr += T[i * d + k] * PB[b, k, i]
                for i in range(d):
                    delta[i] = mB[b, i] - mA[a, i]
                q = 0.0
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += K[i * d + j] * delta[j]
                    kd[i] = s
                    q += delta[i] * s
                    s = 0.0
                    for j in range(d):
                        s += K[j * d + i] * delta[j]
                    ktd[i] = s
                s = 0.0
                for i in range(d):
                    s += kd[i] * ktd[i]
                z = exp(-0.5 * (d * LOG_2PI + lA[a] + lB[b] + logdetP + q))
                M[a, b] = z
                S[a, b] = z * (tr - s)
            if bad:
                break
    if bad:
        raise np.linalg.LinAlgError("pair precision is not positive definite")
    return M_out, S_out


def density_rows(XT, means, W, logdets):
    """``out[i, k] = φ_i(x_k)`` for points given column-wise as ``XT (d, K)``."""
    cdef double[:, ::1] xt = np.ascontiguousarray(XT, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] ld = np.ascontiguousarray(logdets, dtype=np.float64)
    cdef Py_ssize_t nk = xt.shape[1], n = m.shape[0], k, g
    cdef int d = <int>xt.shape[0], i, j
    out_arr = np.empty((n, nk))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] rbuf = np.empty((d, nk))
    cdef double[::1] ybuf = np.empty(nk)
    cdef double* y = &ybuf[0]
    cdef double* q
    cdef double* r
    cdef double* xr
    cdef double base, wij, mj, e
    cdef double neg_inf = -INFINITY
    with nogil:
        for g in range(n):
            base = -0.5 * (d * LOG_2PI + ld[g])
            q = &out[g, 0]
            for j in range(d):
                r = &rbuf[j, 0]
                xr = &xt[j, 0]
                mj = m[g, j]
                for k in range(nk):
                    r[k] = xr[k] - mj
            for k in range(nk):
                q[k] = 0.0
            for i in range(d):
                for k in range(nk):
                    y[k] = 0.0
                for j in range(i + 1):
                    wij = w[g, i, j]
                    r = &rbuf[j, 0]
                    for k in range(nk):
                        y[k] += wij * r[k]
                for k in range(nk):
                    q[k] += y[k] * y[k]
            for k in range(nk):
                e = base - 0.5 * q[k]
                # below the normal range exp would return slow subnormals
                q[k] = e if e > EXP_FLOOR else neg_inf
    # numpy's exp is vectorised, the C library one is not
    np.exp(out_arr, out=out_arr)
    return out_arr


def density_matrix(X, means, W, logdets):
    """``Φ[k, i] = φ_i(x_k)`` for points ``X (K, d)``."""
    return density_rows(np.asarray(X, dtype=np.float64).T, means, W, logdets).T
