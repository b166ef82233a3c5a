"""Exact integrals of Gaussian densities, their gradients and polynomial moments.

Everything here is quadrature free: products of Gaussian densities are again
(weighted) Gaussians, gradients are polynomial multiples of the density, and
polynomial moments under a Gaussian have closed forms.  The module provides

* :class:`Gaussian` and the n-ary :func:`product` (normalisation kept in log
  space),
* tensor moments :func:`tensor_moment` and polynomial expectations,
* the integral ``I^{α,β}`` of ``α`` densities times the outer product of ``β``
  gradients, both through moment tensors (:func:`integral_I_moment`) and
  through Gauss-Hermite quadrature (:func:`integral_I_gh`),
* 1-D trigonometric integrals and closed-form quadratic/biquadratic
  expectations used as independent oracles.
"""

from dataclasses import dataclass, field
from itertools import product as cartesian
from math import comb, log, pi, sqrt

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .tensor import contract_even, outer, symmetrize

LOG_2PI = log(2.0 * pi)
SYM_TOL = 1e-12
PIVOT_TOL = 1e-12


class NotSPDError(np.linalg.LinAlgError):
    """A covariance or precision matrix failed the SPD factorisation test."""


def _checked_cholesky(A, what="covariance"):
    A = np.asarray(A, dtype=float)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0 or not np.all(np.isfinite(A)):
        raise NotSPDError(f"{what} is zero or non-finite")
    if np.max(np.abs(A - A.T)) > SYM_TOL * scale:
        raise NotSPDError(f"{what} is not symmetric")
    try:
        L = np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"{what} is not positive definite") from exc
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL * np.max(np.diag(A)):
        raise NotSPDError(f"{what} is numerically singular")
    return L


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Normalised multivariate Gaussian density ``N(mean, cov)``.

    The lower Cholesky factor ``chol`` (``chol @ chol.T == cov``), the
    precision ``prec`` and ``logdet`` of the covariance are cached at
    construction.  Construction fails with :class:`NotSPDError` if ``cov`` is
    not symmetric positive definite.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    prec: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"mean shape {mean.shape} and cov shape {cov.shape} do not conform"
            )
        S = _checked_cholesky(cov)
        Sinv = solve_triangular(S, np.eye(mean.size), lower=True)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        object.__setattr__(self, "chol", S)
        object.__setattr__(self, "prec", Sinv.T @ Sinv)
        object.__setattr__(self, "logdet", 2.0 * float(np.sum(np.log(np.diag(S)))))

    @classmethod
    def from_precision(cls, prec, shift):
        """Gaussian with precision ``prec`` and mean ``prec^{-1} @ shift``."""
        R = _checked_cholesky(prec, what="accumulated precision")
        cov = cho_solve((R, True), np.eye(R.shape[0]))
        mean = cho_solve((R, True), np.asarray(shift, dtype=float))
        return cls(mean, cov)

    @classmethod
    def isotropic(cls, mean, sigma):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, sigma**2 * np.eye(mean.size))

    @property
    def dim(self):
        return self.mean.size

    @property
    def inv_chol(self):
        """``W`` with ``W.T @ W == prec`` (inverse of the Cholesky factor)."""
        return solve_triangular(self.chol, np.eye(self.dim), lower=True)

    def _centered(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"point dimension {x.shape[-1:]} != {self.dim}")
        return x - self.mean

    def log_density(self, x):
        r = self._centered(x)
        y = solve_triangular(self.chol, r.reshape(-1, self.dim).T, lower=True)
        out = -0.5 * (self.dim * LOG_2PI + self.logdet + np.sum(y * y, axis=0))
        return out.reshape(r.shape[:-1])

    def density(self, x):
        return np.exp(self.log_density(x))

    def poly_factor(self, x):
        """``p(x) = -C^{-1}(x - m)`` so that ``∇φ = p φ``."""
        return -self._centered(x) @ self.prec

    def grad_density(self, x):
        return self.density(x)[..., None] * self.poly_factor(x)


@dataclass(frozen=True, eq=False)
class WeightedGaussian:
    """``exp(log_z) * N(mean, cov)``; the result of multiplying densities."""

    log_z: float
    gaussian: Gaussian

    @property
    def z(self):
        return float(np.exp(self.log_z))

    def density(self, x):
        return np.exp(self.log_z + self.gaussian.log_density(x))


@dataclass(frozen=True)
class GaussHermiteRule:
    """Nodes and weights for ``∫ p(x) exp(-x²) dx``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.nodes.size


def density(g, x):
    return g.density(x)


def grad_density(g, x):
    return g.grad_density(x)


def _log_pair_overlap(a, b):
    """``log ∫ N(a) N(b) = log N(a.mean; b.mean, a.cov + b.cov)``."""
    S = _checked_cholesky(a.cov + b.cov)
    y = solve_triangular(S, a.mean - b.mean, lower=True)
    return -0.5 * (a.dim * LOG_2PI + 2.0 * np.sum(np.log(np.diag(S))) + y @ y)


def product(gaussians):
    """Pointwise product of Gaussian densities as a :class:`WeightedGaussian`.

    Factors are folded in one at a time; each step multiplies the running
    weight by the overlap of the accumulated Gaussian with the next factor,
    which stays accurate when means are far apart.
    """
    gs = list(gaussians)
    if not gs:
        raise ValueError("product of an empty list of Gaussians")
    d = gs[0].dim
    if any(g.dim != d for g in gs):
        raise ValueError("all Gaussians in a product must share a dimension")
    acc, log_z = gs[0], 0.0
    for g in gs[1:]:
        log_z += _log_pair_overlap(acc, g)
        acc = Gaussian.from_precision(acc.prec + g.prec, acc.prec @ acc.mean + g.prec @ g.mean)
    return WeightedGaussian(float(log_z), acc)


def pairing_count(k, j):
    """``C(k, 2j) (2j)! / (j! 2^j)``: ways to choose and pair ``2j`` of ``k`` modes."""
    out = comb(k, 2 * j)
    for odd in range(2 * j - 1, 0, -2):
        out *= odd
    return out


def tensor_moment(g, k):
    """``E[X^{⊗k}]`` for ``X ~ g`` as a symmetric order-``k`` tensor."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    m, C = g.mean, g.cov
    out = np.zeros((g.dim,) * k)
    for j in range(k // 2 + 1):
        term = outer(*([m] * (k - 2 * j) + [C] * j))
        out = out + pairing_count(k, j) * (term if j == 0 else symmetrize(term))
    return out


def expect_polynomial(g, coeffs):
    """``E[p(X)]`` for ``p(x) = Σ_k <P_k, x^{⊗k}>`` with symmetric ``P_k``.

    ``coeffs[k]`` is the order-``k`` coefficient tensor (entries may be
    ``None``).  Symmetry of ``P_k`` lets the moment formula skip the explicit
    symmetrisation.
    """
    m, C = g.mean, g.cov
    total = 0.0
    for k, P in enumerate(coeffs):
        if P is None:
            continue
        P = np.asarray(P, dtype=float)
        for j in range(k // 2 + 1):
            T = P
            for _ in range(k - 2 * j):
                T = T @ m
            for _ in range(j):
                T = np.tensordot(T, C, axes=([-2, -1], [0, 1]))
            total += pairing_count(k, j) * float(T)
    return total


def expect_polynomial_batch(means, covs, coeffs):
    """Vectorised :func:`expect_polynomial` over ``n`` Gaussians.

    ``means`` has shape ``(n, d)`` and ``covs`` ``(n, d, d)``.  Contractions
    run as batched matrix products on flattened coefficient tensors.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    n, d = means.shape
    mcol = means[:, :, None]
    ccol = covs.reshape(n, d * d, 1)
    total = np.zeros(n)
    for k, P in enumerate(coeffs):
        if P is None:
            continue
        flat = np.asarray(P, dtype=float).reshape(-1)
        for j in range(k // 2 + 1):
            T = np.broadcast_to(flat, (n, flat.size))
            for _ in range(k - 2 * j):
                T = (T.reshape(n, -1, d) @ mcol)[..., 0]
            for _ in range(j):
                T = (T.reshape(n, -1, d * d) @ ccol)[..., 0]
            total += pairing_count(k, j) * T[:, 0]
    return total


def _term_sign(beta, k):
    return -1.0 if (beta - k) % 2 else 1.0


def _gradient_operator(grads):
    """``⊗_b C_{j_b}^{-1}`` with modes interleaved as (row_1, col_1, row_2, ...)."""
    return outer(*[g.prec for g in grads])


def integral_I_moment(phis, grads):
    """``∫ (Π φ_{i_a}) (⊗_b ∇φ_{j_b}) dx`` through Gaussian moment tensors.

    ``phis`` are the plain density factors and ``grads`` the factors that
    enter through their gradients.  The result is an order-``β`` tensor
    (0-d array when ``β = 0``).

    Each gradient is ``φ_j C_j^{-1}(m_j - x)``, so the integral is ``Z`` times
    the even-mode contraction of ``⊗ C_j^{-1}`` with ``E[⊗(m_j - X)]`` under
    the normalised product density.  That expectation is expanded over every
    subset ``J`` of gradient slots: slots in ``J`` hold their mean, the rest
    are filled by the moment tensor ``M^{β-|J|}``.
    """
    phis, grads = list(phis), list(grads)
    if not phis and not grads:
        raise ValueError("integral needs at least one factor")
    wg = product(phis + grads)
    Z = wg.z
    beta = len(grads)
    if beta == 0:
        return np.asarray(Z)
    X = wg.gaussian
    moments = [tensor_moment(X, k) for k in range(beta + 1)]
    E = np.zeros((X.dim,) * beta)
    for mask in range(1 << beta):
        chosen = [b for b in range(beta) if mask >> b & 1]
        rest = [b for b in range(beta) if not mask >> b & 1]
        T = outer(*[grads[b].mean for b in chosen], moments[len(rest)])
        # axis t of T lands on slot chosen[t], then the remaining slots in order
        src = [0] * beta
        for t, b in enumerate(chosen + rest):
            src[b] = t
        E = E + _term_sign(beta, len(chosen)) * T.transpose(src)
    return Z * contract_even(_gradient_operator(grads), E)


def hermite_rule(n):
    """Gauss-Hermite rule with ``n`` nodes (weight ``exp(-x²)``).

    Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the Hermite
    recurrence; weights are ``√π`` times the squared first eigenvector
    components.
    """
    if n < 1:
        raise ValueError("a Gauss-Hermite rule needs at least one node")
    off = np.sqrt(np.arange(1, n) / 2.0)
    J = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = sqrt(pi) * vecs[0] ** 2
    # eigenvectors come out with arbitrary sign; weights are sign free
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return GaussHermiteRule(nodes, weights)


def gh_points_needed(beta):
    """Nodes per dimension exact for a degree-``beta`` polynomial."""
    return (beta + 2) // 2


def integral_I_gh(phis, grads, rule=None):
    """Same integral as :func:`integral_I_moment` via Gauss-Hermite quadrature.

    With ``x = √2 S y + m`` (``S`` the Cholesky factor of the product
    covariance) the integrand becomes a degree-``β`` polynomial against
    ``exp(-|y|²)``, integrated exactly on a tensor-product grid.
    """
    phis, grads = list(phis), list(grads)
    if not phis and not grads:
        raise ValueError("integral needs at least one factor")
    beta = len(grads)
    if rule is None:
        rule = hermite_rule(gh_points_needed(beta))
    elif len(rule) < gh_points_needed(beta):
        raise ValueError(
            f"{len(rule)}-point rule is not exact for degree {beta}; "
            f"need {gh_points_needed(beta)}"
        )
    wg = product(phis + grads)
    X = wg.gaussian
    d = X.dim
    idx = np.array(list(cartesian(range(len(rule)), repeat=d)))
    y = rule.nodes[idx]
    w = np.prod(rule.weights[idx], axis=1)
    x = sqrt(2.0) * y @ X.chol.T + X.mean
    acc = w
    for g in grads:
        v = (g.mean - x) @ g.prec
        acc = acc[..., None] * v.reshape((v.shape[0],) + (1,) * (acc.ndim - 1) + (d,))
    return wg.z * pi ** (-d / 2.0) * np.sum(acc, axis=0)


def trig_integral(kind, k, g):
    """``∫ sin(kx) φ(x) dx`` or ``∫ cos(kx) φ(x) dx`` for a 1-D Gaussian ``φ``."""
    if g.dim != 1:
        raise ValueError("trig_integral is defined for 1-D Gaussians only")
    mu, var = float(g.mean[0]), float(g.cov[0, 0])
    damp = np.exp(-0.5 * k * k * var)
    if kind == "sin":
        return float(np.sin(k * mu) * damp)
    if kind == "cos":
        return float(np.cos(k * mu) * damp)
    raise ValueError(f"kind must be 'sin' or 'cos', got {kind!r}")


def _check_square(g, *mats):
    for M in mats:
        if np.shape(M) != (g.dim, g.dim):
            raise ValueError(f"matrix shape {np.shape(M)} does not match dimension {g.dim}")


def _check_vectors(g, *vecs):
    for v in vecs:
        if np.shape(v) != (g.dim,):
            raise ValueError(f"vector shape {np.shape(v)} does not match dimension {g.dim}")


def oracle_quadratic(g, A, a, b):
    """``E[(x-b)^T A (x-a)] = <C, A> + (m-b)^T A (m-a)`` for ``x ~ g``."""
    _check_square(g, A)
    _check_vectors(g, a, b)
    A = np.asarray(A, dtype=float)
    m = g.mean
    return float(np.sum(g.cov * A) + (m - b) @ A @ (m - a))


def expect_triform(g, A):
    """``E[(x^T A x) x]`` for ``x ~ g`` and a generic square ``A``."""
    _check_square(g, A)
    A = np.asarray(A, dtype=float)
    m, C = g.mean, g.cov
    return np.sum(A * C) * m + C @ (A + A.T) @ m + (m @ A @ m) * m


def expect_mean0_quadprod(A, B):
    """``E[(y^T A y)(y^T B y)]`` for ``y ~ N(0, I)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return float(np.sum((A + A.T) * B) + np.trace(A) * np.trace(B))


def expect_quadprod(g, A, B):
    """``E[(x^T A x)(x^T B x)]`` for ``x ~ g``."""
    _check_square(g, A, B)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m, C = g.mean, g.cov
    As, Bs = A + A.T, B + B.T
    return float(
        np.sum((As @ C) * (C @ B))
        + m @ As @ C @ Bs @ m
        + (m @ A @ m + np.sum(A * C)) * (m @ B @ m + np.sum(B * C))
    )


def oracle_biquadratic(g, A, B, a, b, c, d_):
    """``E[(x-c)^T A (x-a) (x-d)^T B (x-b)]`` for ``x ~ g`` in closed form."""
    _check_square(g, A, B)
    _check_vectors(g, a, b, c, d_)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m, C = g.mean, g.cov
    AC, BC = np.sum(A * C), np.sum(B * C)
    qa = (m - c) @ A @ (m - a)
    qb = (m - d_) @ B @ (m - b)
    u = A @ (m - a) + A.T @ (m - c)
    v = B @ (m - b) + B.T @ (m - d_)
    return float(np.sum(((A + A.T) @ C) * (C @ B)) + AC * BC + qa * qb + qa * BC + qb * AC + u @ C @ v)
