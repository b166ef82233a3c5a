"""Pure numpy implementation of the hot assembly kernels.

Gaussians are passed as stacked arrays: means ``(n, d)``, precisions
``(n, d, d)``, inverse Cholesky factors ``W`` with ``W.T @ W = P`` and
covariance log-determinants ``(n,)``.
"""

from math import log, pi

import numpy as np

LOG_2PI = log(2.0 * pi)
EXP_FLOOR = -708.0


def cross_mass_stiffness(ma, Pa, lda, mb, Pb, ldb):
    """Mass ``∫φ_iφ_j`` and stiffness ``∫∇φ_i·∇φ_j`` between two Gaussian sets.

    Returns two ``(na, nb)`` arrays.  With ``P = P_i + P_j`` and
    ``K = P_i P^{-1} P_j`` the pair weight is
    ``log z = -½(d log 2π + ld_i + ld_j + log|P| + Δᵀ K Δ)`` and the stiffness
    entry is ``z (tr(P^{-1} P_i P_j) - (KΔ)·(KᵀΔ))`` with ``Δ = m_j - m_i``.
    """
    ma, mb = np.asarray(ma, dtype=float), np.asarray(mb, dtype=float)
    d = ma.shape[1]
    if d == 1:
        pa, pb = Pa[:, 0, 0][:, None], Pb[:, 0, 0][None, :]
        P = pa + pb
        k = pa * pb / P
        delta = mb[None, :, 0] - ma[:, 0, None]
        q = k * delta * delta
        logz = -0.5 * (LOG_2PI + lda[:, None] + ldb[None, :] + np.log(P) + q)
        z = np.exp(logz)
        return z, z * (k - k * k * delta * delta)
    P = Pa[:, None] + Pb[None, :]
    L = np.linalg.cholesky(P)
    logdetP = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    C = np.linalg.inv(P)
    K = Pa[:, None] @ C @ Pb[None, :]
    delta = mb[None, :, :] - ma[:, None, :]
    Kd = np.einsum("abij,abj->abi", K, delta)
    KTd = np.einsum("abji,abj->abi", K, delta)
    q = np.einsum("abi,abi->ab", delta, Kd)
    logz = -0.5 * (d * LOG_2PI + lda[:, None] + ldb[None, :] + logdetP + q)
    z = np.exp(logz)
    tr = np.einsum("abij,ajk,bki->ab", C, Pa, Pb)
    return z, z * (tr - np.einsum("abi,abi->ab", Kd, KTd))


def density_matrix(X, means, W, logdets):
    """``Φ[k, i] = φ_i(x_k)`` for points ``X (K, d)``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    r = X[:, None, :] - means[None, :, :]
    y = np.einsum("nij,knj->kni", W, r)
    e = -0.5 * (d * LOG_2PI + logdets[None, :] + np.einsum("kni,kni->kn", y, y))
    # below the normal range exp would return slow subnormals
    return np.where(e > EXP_FLOOR, np.exp(np.maximum(e, EXP_FLOOR)), 0.0)


def density_rows(XT, means, W, logdets):
    """``out[i, k] = φ_i(x_k)`` for points given column-wise as ``XT (d, K)``."""
    return density_matrix(np.asarray(XT, dtype=float).T, means, W, logdets).T
