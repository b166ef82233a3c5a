"""Assembly of Galerkin and Whitney-form matrices on a Gaussian basis.

0-forms are the basis densities ``ψ_i = φ_i`` (optionally preceded by the
constant ``ψ_0 = 1`` on bounded domains), 1-forms are
``ψ_ij = φ_i ∇φ_j - φ_j ∇φ_i`` and, in three dimensions, 2-forms are
``ψ_ijk = φ_i ∇φ_j × ∇φ_k + φ_j ∇φ_k × ∇φ_i + φ_k ∇φ_i × ∇φ_j``.
Every entry is an exact combination of ``I^{α,β}`` integrals; integrals over
a bounded domain are taken over the whole space except for ``∫_Ω ψ_0 ψ_0``,
which is the domain volume.

Multi-indexed forms are stored for strictly increasing index tuples; other
orderings follow by antisymmetry through :meth:`FormMatrix.entry`.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import log, pi, prod

import numpy as np

from . import kernels
from scipy.linalg.lapack import dtrtri

from .gaussian import (
    Gaussian,
    pairing_count,
    expect_polynomial_batch,
    integral_I_moment,
    oracle_biquadratic,
    oracle_quadratic,
    product,
)
from .tensor import double_trace

LOG_2PI = log(2.0 * pi)
DEFAULT_BOUNDARY_SAMPLES = 1024
DEFAULT_QUADRATURE_POINTS = 4096


@dataclass(frozen=True, eq=False)
class DomainDescriptor:
    """Computational domain ``Ω``.

    ``kind`` is ``"unbounded"`` (all of ``R^d``), ``"box"`` (axis-aligned,
    bounds ``lo``/``hi``) or ``"custom"`` (user supplied ``volume``, boundary
    ``sampler(n, rng) -> (points, weights)`` and optional ``contains``).
    """

    kind: str
    dim: int
    lo: np.ndarray = None
    hi: np.ndarray = None
    volume: float = None
    sampler: object = None
    contains_fn: object = None

    def __post_init__(self):
        if self.kind not in ("unbounded", "box", "custom"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("domain dimension must be positive")
        if self.kind != "unbounded" and not (self.volume is not None and 0 < self.volume < np.inf):
            raise ValueError("bounded domains need a finite positive volume")

    @classmethod
    def unbounded(cls, dim):
        return cls("unbounded", int(dim))

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        return cls("box", lo.size, lo, hi, float(np.prod(hi - lo)))

    @classmethod
    def custom(cls, dim, volume, sampler, contains=None):
        return cls("custom", int(dim), volume=float(volume), sampler=sampler, contains_fn=contains)

    @property
    def bounded(self):
        return self.kind != "unbounded"

    def contains(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "unbounded":
            return np.ones(x.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((x >= self.lo) & (x <= self.hi), axis=1)
        if self.contains_fn is None:
            raise ValueError("custom domain has no membership test")
        return np.asarray(self.contains_fn(x), dtype=bool)

    def boundary_samples(self, n_samples=DEFAULT_BOUNDARY_SAMPLES, seed=0):
        """Points on ``Γ = ∂Ω`` with surface-measure weights.

        For an interval the boundary is its two end points with unit weight
        (exact).  Boxes in ``d ≥ 2`` are sampled uniformly over their faces;
        the weights then sum to the exact surface area.
        """
        if not self.bounded:
            raise ValueError("an unbounded domain has no boundary")
        rng = np.random.default_rng(seed)
        if self.kind == "custom":
            pts, w = self.sampler(n_samples, rng)
            return np.asarray(pts, dtype=float).reshape(-1, self.dim), np.asarray(w, dtype=float)
        if self.dim == 1:
            return np.array([self.lo, self.hi]), np.ones(2)
        if n_samples < 1:
            raise ValueError("need at least one boundary sample")
        ext = self.hi - self.lo
        face_area = np.array([prod(np.delete(ext, a)) for a in range(self.dim)])
        areas = np.repeat(face_area, 2)
        face = rng.choice(areas.size, size=n_samples, p=areas / areas.sum())
        pts = self.lo + rng.random((n_samples, self.dim)) * ext
        axis, side = face // 2, face % 2
        pts[np.arange(n_samples), axis] = np.where(side == 0, self.lo[axis], self.hi[axis])
        return pts, np.full(n_samples, areas.sum() / n_samples)

    def interior_samples(self, n_samples, seed=0):
        """Quadrature points and weights on a bounded box domain."""
        if self.kind != "box":
            raise ValueError("interior quadrature is implemented for boxes only")
        if self.dim == 1:
            x, w = np.polynomial.legendre.leggauss(n_samples)
            half = 0.5 * (self.hi[0] - self.lo[0])
            return (self.lo[0] + half * (x + 1.0))[:, None], half * w
        rng = np.random.default_rng(seed)
        pts = self.lo + rng.random((n_samples, self.dim)) * (self.hi - self.lo)
        return pts, np.full(n_samples, self.volume / n_samples)


class Basis:
    """Ordered Gaussian 0-forms, optionally preceded by the constant ``ψ_0``.

    With ``include_constant`` the 0-form indices are ``0`` for ``ψ_0`` and
    ``1..n`` for the Gaussians; otherwise they are ``0..n-1``.
    """

    def __init__(self, gaussians, include_constant=False, domain=None):
        gaussians = tuple(gaussians)
        if not gaussians:
            raise ValueError("a basis needs at least one Gaussian")
        d = gaussians[0].dim
        if any(g.dim != d for g in gaussians):
            raise ValueError("all basis Gaussians must share a dimension")
        if domain is None:
            domain = DomainDescriptor.unbounded(d)
        if domain.dim != d:
            raise ValueError(f"domain dimension {domain.dim} != basis dimension {d}")
        if include_constant and not domain.bounded:
            raise ValueError("the constant form is not integrable on an unbounded domain")
        self.gaussians = gaussians
        self.include_constant = bool(include_constant)
        self.domain = domain

    @classmethod
    def from_arrays(cls, means, covs, include_constant=False, domain=None):
        return cls([Gaussian(m, C) for m, C in zip(means, covs)], include_constant, domain)

    def __len__(self):
        return len(self.gaussians)

    @property
    def dim(self):
        return self.gaussians[0].dim

    @property
    def size(self):
        """Number of 0-forms."""
        return len(self.gaussians) + self.include_constant

    @property
    def offset(self):
        return int(self.include_constant)

    @cached_property
    def members(self):
        """0-forms in index order; ``None`` stands for the constant."""
        return ((None,) if self.include_constant else ()) + self.gaussians

    @cached_property
    def means(self):
        return np.stack([g.mean for g in self.gaussians])

    @cached_property
    def covs(self):
        return np.stack([g.cov for g in self.gaussians])

    @cached_property
    def precs(self):
        return np.stack([g.prec for g in self.gaussians])

    @cached_property
    def logdets(self):
        return np.array([g.logdet for g in self.gaussians])

    @cached_property
    def inv_chols(self):
        return np.stack([g.inv_chol for g in self.gaussians])

    def pairs(self):
        return list(combinations(range(self.size), 2))

    def triples(self):
        return list(combinations(range(self.size), 3))

    def without_constant(self):
        return Basis(self.gaussians, False, self.domain)

    def with_constant(self):
        return Basis(self.gaussians, True, self.domain)

    def replace(self, index, gaussian):
        """New basis with Gaussian ``index`` (0-based among Gaussians) swapped."""
        gs = list(self.gaussians)
        gs[index] = gaussian
        return Basis(gs, self.include_constant, self.domain)

    def permuted(self, order):
        return Basis([self.gaussians[i] for i in order], self.include_constant, self.domain)


def _perm_sign(key):
    """Sign of the permutation sorting ``key``; 0 for repeated entries."""
    if len(set(key)) != len(key):
        return 0, None
    sign = 1
    k = list(key)
    for i in range(len(k)):
        for j in range(len(k) - 1 - i):
            if k[j] > k[j + 1]:
                k[j], k[j + 1] = k[j + 1], k[j]
                sign = -sign
    return sign, tuple(k)


@dataclass(frozen=True)
class FormMatrix:
    """Assembled matrix with the multi-indices labelling its rows and columns."""

    kind: str
    values: np.ndarray
    rows: tuple
    cols: tuple

    def __post_init__(self):
        object.__setattr__(self, "_row_pos", {r: i for i, r in enumerate(self.rows)})
        object.__setattr__(self, "_col_pos", {c: i for i, c in enumerate(self.cols)})

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def entry(self, row, col):
        """Entry for any ordering of the row/column multi-indices."""
        row, col = tuple(np.atleast_1d(row).tolist()), tuple(np.atleast_1d(col).tolist())
        sr, row = _perm_sign(row)
        sc, col = _perm_sign(col)
        if sr == 0 or sc == 0:
            return 0.0
        return sr * sc * float(self.values[self._row_pos[row], self._col_pos[col]])


class _Integrator:
    """Cached traces of ``I^{α,β}`` over a list of 0-forms (``None`` = constant)."""

    def __init__(self, members, volume=None):
        self.members = list(members)
        self.volume = volume
        self._cache = {}

    def _tensor(self, dens, grads):
        if any(self.members[j] is None for j in grads):
            return None
        phis = [self.members[i] for i in dens if self.members[i] is not None]
        if not phis and not grads:
            if self.volume is None:
                raise ValueError("constant form needs a bounded domain")
            return np.asarray(self.volume)
        return integral_I_moment(phis, [self.members[j] for j in grads])

    def scalar(self, dens):
        key = ("s", tuple(sorted(dens)))
        if key not in self._cache:
            T = self._tensor(dens, ())
            self._cache[key] = float(T)
        return self._cache[key]

    def tr2(self, dens, j, b):
        key = ("t2", tuple(sorted(dens)), j, b)
        if key not in self._cache:
            T = self._tensor(dens, (j, b))
            self._cache[key] = 0.0 if T is None else float(np.trace(T))
        return self._cache[key]

    def vec1(self, dens, j):
        key = ("v1", tuple(sorted(dens)), j)
        if key not in self._cache:
            T = self._tensor(dens, (j,))
            self._cache[key] = np.zeros(self._dim()) if T is None else T
        return self._cache[key]

    def tr4(self, dens, j, b, k, c):
        key = ("t4", tuple(sorted(dens)), j, b, k, c)
        if key not in self._cache:
            T = self._tensor(dens, (j, b, k, c))
            self._cache[key] = 0.0 if T is None else float(double_trace(T))
        return self._cache[key]

    def _dim(self):
        return next(g.dim for g in self.members if g is not None)


def _integrator(basis, extra=()):
    vol = basis.domain.volume if basis.domain.bounded else None
    return _Integrator(list(basis.members) + list(extra), vol)


def _gaussian_block(basis):
    return kernels.cross_mass_stiffness(
        basis.means, basis.precs, basis.logdets, basis.means, basis.precs, basis.logdets
    )


def _index(basis):
    return tuple((i,) for i in range(basis.size))


def assemble_M0(basis):
    """0-form mass matrix ``M^0_ij = ∫ ψ_i ψ_j``."""
    M, _ = _gaussian_block(basis)
    if basis.include_constant:
        n = basis.size
        full = np.ones((n, n))
        full[0, 0] = basis.domain.volume
        full[1:, 1:] = M
        M = full
    return FormMatrix("M0", 0.5 * (M + M.T), _index(basis), _index(basis))


def assemble_S0(basis):
    """0-form stiffness matrix ``S^0_ij = ∫ ∇ψ_i · ∇ψ_j``."""
    _, S = _gaussian_block(basis)
    if basis.include_constant:
        full = np.zeros((basis.size, basis.size))
        full[1:, 1:] = S
        S = full
    return FormMatrix("S0", 0.5 * (S + S.T), _index(basis), _index(basis))


def assemble_M0_S0(basis):
    """Both 0-form matrices from a single kernel sweep (Gaussian block only)."""
    M, S = _gaussian_block(basis)
    return 0.5 * (M + M.T), 0.5 * (S + S.T)


def _d0_entry(it, i, a, b):
    return it.tr2((a,), b, i) - it.tr2((b,), a, i)


def _m1_entry(it, i, j, a, b):
    return (
        it.tr2((i, a), j, b)
        - it.tr2((i, b), j, a)
        - it.tr2((j, a), i, b)
        + it.tr2((j, b), i, a)
    )


def assemble_D0(basis):
    """``D^0_{i,ab} = ∫ ∇ψ_i · ψ_ab``."""
    it = _integrator(basis)
    pairs = basis.pairs()
    D = np.array([[_d0_entry(it, i, a, b) for a, b in pairs] for i in range(basis.size)])
    return FormMatrix("D0", D.reshape(basis.size, len(pairs)), _index(basis), tuple(pairs))


def assemble_M1(basis):
    """1-form mass matrix ``M^1_{ij,ab} = ∫ ψ_ij · ψ_ab``."""
    it = _integrator(basis)
    pairs = basis.pairs()
    if not pairs:
        raise ValueError("1-forms need at least two 0-forms")
    n = len(pairs)
    M = np.zeros((n, n))
    for r, (i, j) in enumerate(pairs):
        for c in range(r, n):
            a, b = pairs[c]
            M[r, c] = M[c, r] = _m1_entry(it, i, j, a, b)
    return FormMatrix("M1", M, tuple(pairs), tuple(pairs))


def _cyclic(t):
    i, j, k = t
    return ((i, j, k), (j, k, i), (k, i, j))


def _require_3d(basis):
    if basis.dim != 3:
        raise ValueError(f"2-forms are defined for d = 3 only, got d = {basis.dim}")


def _m2_entry(it, ijk, abc):
    total = 0.0
    for i, j, k in _cyclic(ijk):
        for a, b, c in _cyclic(abc):
            total += it.tr4((i, a), j, b, k, c) - it.tr4((i, a), j, c, k, b)
    return total


def _d1_entry(it, i, j, abc):
    total = 0.0
    for a, b, c in _cyclic(abc):
        total += it.tr4((a,), i, b, j, c) - it.tr4((a,), i, c, j, b)
    return 2.0 * total


def assemble_M2(basis):
    """2-form mass matrix ``M^2_{ijk,abc} = ∫ ψ_ijk · ψ_abc`` (``d = 3``)."""
    _require_3d(basis)
    triples = basis.triples()
    if not triples:
        raise ValueError("2-forms need at least three 0-forms")
    it = _integrator(basis)
    n = len(triples)
    M = np.zeros((n, n))
    for r in range(n):
        for c in range(r, n):
            M[r, c] = M[c, r] = _m2_entry(it, triples[r], triples[c])
    return FormMatrix("M2", M, tuple(triples), tuple(triples))


def assemble_D1(basis):
    """``D^1_{ij,abc} = ∫ (∇ × ψ_ij) · ψ_abc`` (``d = 3``)."""
    _require_3d(basis)
    it = _integrator(basis)
    pairs, triples = basis.pairs(), basis.triples()
    D = np.array([[_d1_entry(it, i, j, t) for t in triples] for i, j in pairs])
    return FormMatrix("D1", D.reshape(len(pairs), len(triples)), tuple(pairs), tuple(triples))


def assemble_augmented(basis):
    """``(M̂^1, D̂^0)`` for a basis carrying the constant 0-form.

    Blocks come from the plain Gaussian basis::

        M̂^1 = [[S^0, D^0], [D^0ᵀ, M^1]]      D̂^0 = [S^0, D^0]

    Row/column labels use the augmented numbering (``ψ_0`` is index 0), so
    the leading block is indexed by the pairs ``(0, i)``.
    """
    if not basis.include_constant:
        raise ValueError("augmented blocks need a basis with the constant form")
    plain = basis.without_constant()
    S0 = assemble_S0(plain).values
    D0 = assemble_D0(plain).values
    M1 = assemble_M1(plain).values
    n = len(plain)
    shift = [(a + 1, b + 1) for a, b in plain.pairs()]
    labels = tuple([(0, i + 1) for i in range(n)] + shift)
    M1hat = np.block([[S0, D0], [D0.T, M1]])
    D0hat = np.hstack([S0, D0])
    return (
        FormMatrix("M1hat", M1hat, labels, labels),
        FormMatrix("D0hat", D0hat, tuple((i + 1,) for i in range(n)), labels),
    )


def oneform_oracle(basis, ij, ab):
    """``M^1_{ij,ab}`` from closed-form quadratic expectations.

    Writes ``∇φ_s = φ_s P_s (m_s - x)`` and evaluates
    ``z E[(p_j - p_i)·(p_b - p_a)]`` under the normalised product of the four
    densities, each ``E[p_s·p_t]`` by :func:`oracle_quadratic`.  Independent
    of the moment-tensor machinery.
    """
    (i, j), (a, b) = ij, ab
    if i == j or a == b:
        return 0.0
    mem = basis.members
    dens = [mem[k] for k in (i, j, a, b) if mem[k] is not None]
    w = product(dens)
    X = w.gaussian

    def q(s, t):
        gs, gt = mem[s], mem[t]
        if gs is None or gt is None:
            return 0.0
        return oracle_quadratic(X, gs.prec @ gt.prec, gt.mean, gs.mean)

    return w.z * (q(j, b) - q(j, a) - q(i, b) + q(i, a))


def twoform_oracle(basis, ijk, abc):
    """``M^2_{ijk,abc}`` from closed-form biquadratic expectations (``d = 3``).

    Uses ``(u×v)·(w×y) = (u·w)(v·y) - (u·y)(v·w)`` on the gradient factors and
    :func:`oracle_biquadratic` for each ``E[(p_j·p_b)(p_k·p_c)]``.
    """
    _require_3d(basis)
    if len(set(ijk)) < 3 or len(set(abc)) < 3:
        return 0.0
    mem = basis.members
    dens = [mem[k] for k in tuple(ijk) + tuple(abc) if mem[k] is not None]
    w = product(dens)
    X = w.gaussian

    def t(j, b, k, c):
        gj, gb, gk, gc = (mem[s] for s in (j, b, k, c))
        if any(g is None for g in (gj, gb, gk, gc)):
            return 0.0
        return oracle_biquadratic(
            X, gj.prec @ gb.prec, gk.prec @ gc.prec, gb.mean, gc.mean, gj.mean, gk.mean
        )

    total = 0.0
    for _, j, k in _cyclic(ijk):
        for _, b, c in _cyclic(abc):
            total += t(j, b, k, c) - t(j, c, k, b)
    return w.z * total


def boundary_density_matrix(basis, points):
    """``Ψ[q, i] = ψ_i(y_q)`` including the constant column when present."""
    Phi = kernels.density_matrix(points, basis.means, basis.inv_chols, basis.logdets)
    if basis.include_constant:
        Phi = np.hstack([np.ones((Phi.shape[0], 1)), Phi])
    return Phi


def assemble_boundary(basis, domain=None, n_samples=DEFAULT_BOUNDARY_SAMPLES, seed=0, g=None):
    """Boundary penalty matrix ``B_ij ≈ ∫_Γ ψ_i ψ_j`` and vector ``b_i ≈ ∫_Γ g ψ_i``.

    ``g`` is ``None`` (zero data), a constant or a callable on ``(Q, d)``
    point arrays.
    """
    domain = basis.domain if domain is None else domain
    if not domain.bounded:
        raise ValueError("boundary penalty needs a bounded domain")
    pts, w = domain.boundary_samples(n_samples, seed)
    Psi = boundary_density_matrix(basis, pts)
    B = Psi.T @ (w[:, None] * Psi)
    if g is None:
        gv = np.zeros(len(w))
    elif callable(g):
        gv = np.asarray(g(pts), dtype=float).reshape(-1)
    else:
        gv = np.full(len(w), float(g))
    return 0.5 * (B + B.T), Psi.T @ (w * gv)


def estimate_gamma(basis, domain=None, seed=0, rule="16N", n_samples=DEFAULT_BOUNDARY_SAMPLES):
    """Penalty parameter for the boundary term.

    ``rule="16N"`` returns ``16 N``.  ``rule="eig"`` returns the largest
    generalized eigenvalue of ``S^0 v = λ B v`` over the range of ``B``,
    falling back to ``16 N`` when ``B`` is numerically zero.
    """
    fallback = 16.0 * len(basis)
    if rule == "16N":
        return fallback
    if rule != "eig":
        raise ValueError(f"unknown gamma rule {rule!r}")
    B, _ = assemble_boundary(basis, domain, n_samples, seed)
    S = assemble_S0(basis).values
    lam, V = np.linalg.eigh(B)
    if lam[-1] <= np.finfo(float).tiny:
        return fallback
    keep = lam > 1e-12 * lam[-1]
    U = V[:, keep] / np.sqrt(lam[keep])
    return float(np.linalg.eigvalsh(U.T @ S @ U)[-1])


def _product_with_center(center, means, precs, logdets):
    """Product of ``center`` with each Gaussian: log weights, means and covariances."""
    d = center.dim
    P = center.prec[None] + precs
    C = np.linalg.inv(P)
    h = center.prec @ center.mean + np.einsum("nij,nj->ni", precs, means)
    m = np.einsum("nij,nj->ni", C, h)
    delta = means - center.mean
    K = np.einsum("ij,njk,nkl->nil", center.prec, C, precs)
    q = np.einsum("ni,nij,nj->n", delta, K, delta)
    logdetP = np.linalg.slogdet(P)[1]
    logz = -0.5 * (d * LOG_2PI + center.logdet + logdets + logdetP + q)
    return logz, m, 0.5 * (C + np.swapaxes(C, 1, 2))


@dataclass(frozen=True, eq=False)
class PolyGaussianForcing:
    """``f(x) = scale · N(x; c, Σ) · Σ_k <P_k, x^{⊗k}>`` with symmetric ``P_k``."""

    scale: float
    center: Gaussian
    coeffs: tuple

    @property
    def dim(self):
        return self.center.dim

    def polynomial(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for P in self.coeffs:
            if P is None:
                continue
            T = np.broadcast_to(np.asarray(P, dtype=float), (x.shape[0],) + np.shape(P))
            while T.ndim > 1:
                T = np.einsum("k...i,ki->k...", T, x)
            out += T
        return out

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.scale * self.center.density(x) * self.polynomial(x)

    @cached_property
    def _flat_coeffs(self):
        return [(k, np.asarray(P, dtype=float).reshape(-1),
                 [float(pairing_count(k, j)) for j in range(k // 2 + 1)])
                for k, P in enumerate(self.coeffs) if P is not None]

    def project_arrays(self, means, precs, logdets):
        """``∫ f φ_i`` for Gaussians given as stacked arrays."""
        if np.shape(means)[-1] != self.dim:
            raise ValueError("forcing and basis dimensions differ")
        if np.shape(means)[0] == 1:
            return np.array([self.project_one(means[0], precs[0], float(logdets[0]))])
        logz, m, C = _product_with_center(self.center, means, precs, logdets)
        return self.scale * np.exp(logz) * expect_polynomial_batch(m, C, self.coeffs)

    def project_one(self, mean, prec, logdet):
        """``∫ f φ`` for a single Gaussian given by mean, precision and log-det."""
        c = self.center
        d = c.dim
        P = c.prec + prec
        L = np.linalg.cholesky(P)
        Linv = dtrtri(L, lower=1)[0]
        C = Linv.T @ Linv
        m = C @ (c.prec @ c.mean + prec @ mean)
        delta = mean - c.mean
        # pair overlap with (C_c + C_i)^{-1} = P_c P^{-1} P_i
        q = delta @ (c.prec @ (C @ (prec @ delta)))
        logz = -0.5 * (d * LOG_2PI + c.logdet + logdet + 2.0 * np.sum(np.log(np.diag(L))) + q)
        cflat = C.reshape(-1)
        total = 0.0
        for k, flat, counts in self._flat_coeffs:
            # chain[r] is the coefficient tensor contracted with r copies of m
            chain = [flat]
            for _ in range(k):
                chain.append(chain[-1].reshape(-1, d) @ m)
            for j, count in enumerate(counts):
                T = chain[k - 2 * j]
                for _ in range(j):
                    T = T.reshape(-1, d * d) @ cflat
                total += count * T[0]
        return self.scale * np.exp(logz) * total

    def total_integral(self):
        return self.scale * expect_polynomial_batch(
            self.center.mean[None], self.center.cov[None], self.coeffs
        )[0]


@dataclass(frozen=True)
class TrigForcing:
    """``f(x) = amplitude · sin(k x)`` or ``amplitude · cos(k x)`` in one dimension."""

    amplitude: float
    kind: str
    frequency: float
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"kind must be 'sin' or 'cos', got {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        fn = np.sin if self.kind == "sin" else np.cos
        return self.amplitude * fn(self.frequency * x)

    def project_arrays(self, means, precs, logdets=None):
        if np.shape(means)[-1] != 1:
            raise ValueError("trigonometric forcing is one-dimensional")
        mu = np.asarray(means)[:, 0]
        var = 1.0 / np.asarray(precs)[:, 0, 0]
        k = self.frequency
        fn = np.sin if self.kind == "sin" else np.cos
        return self.amplitude * fn(k * mu) * np.exp(-0.5 * k * k * var)

    def integral_over(self, lo, hi):
        k = self.frequency
        if k == 0.0:
            return self.amplitude * (hi - lo) * (self.kind == "cos")
        if self.kind == "sin":
            return self.amplitude * (np.cos(k * lo) - np.cos(k * hi)) / k
        return self.amplitude * (np.sin(k * hi) - np.sin(k * lo)) / k


def _constant_entry(basis, f):
    if isinstance(f, PolyGaussianForcing):
        return f.total_integral()
    if isinstance(f, TrigForcing):
        if basis.domain.kind != "box":
            raise ValueError("trig forcing against the constant needs a box domain")
        return f.integral_over(basis.domain.lo[0], basis.domain.hi[0])
    return float(np.asarray(f, dtype=float))


def _quadrature_box(basis):
    if basis.domain.kind == "box":
        return basis.domain
    sig = np.sqrt(np.einsum("nii->ni", basis.covs))
    lo = np.min(basis.means - 8 * sig, axis=0)
    hi = np.max(basis.means + 8 * sig, axis=0)
    return DomainDescriptor.box(lo, hi)


def project_forcing(basis, f, seed=0, n_quad=DEFAULT_QUADRATURE_POINTS):
    """Load vector ``F_i = <f, ψ_i>``.

    Analytic descriptors (:class:`PolyGaussianForcing`, :class:`TrigForcing`,
    a single :class:`Gaussian`) are integrated exactly.  A plain callable is
    handled by ``L²`` projection: quadrature loads on ``n_quad`` points give
    ``b``, the projection coefficients solve ``M^0 c = b`` in the least
    squares sense, and ``M^0 c`` is returned.
    """
    if isinstance(f, Gaussian):
        if f.dim != basis.dim:
            raise ValueError("forcing and basis dimensions differ")
        M, _ = kernels.cross_mass_stiffness(
            f.mean[None], f.prec[None], np.array([f.logdet]), basis.means, basis.precs, basis.logdets
        )
        F = M[0]
        return np.concatenate([[1.0], F]) if basis.include_constant else F
    if isinstance(f, (PolyGaussianForcing, TrigForcing)):
        if f.dim != basis.dim:
            raise ValueError("forcing and basis dimensions differ")
        F = f.project_arrays(basis.means, basis.precs, basis.logdets)
        return np.concatenate([[_constant_entry(basis, f)], F]) if basis.include_constant else F
    if not callable(f):
        raise ValueError("forcing must be an analytic descriptor or a callable")
    pts, w = _quadrature_box(basis).interior_samples(n_quad, seed)
    Psi = boundary_density_matrix(basis, pts)
    b = Psi.T @ (w * np.asarray(f(pts), dtype=float).reshape(-1))
    M0 = assemble_M0(basis).values
    c = np.linalg.lstsq(M0, b, rcond=1e-14)[0]
    return M0 @ c


def project_whitney_pair(basis, gi, gj, scale=1.0):
    """``<G, ψ_ab>`` for ``G = scale · (φ̃_i ∇φ̃_j - φ̃_j ∇φ̃_i)`` over all pairs ``a < b``.

    ``gi``/``gj`` need not belong to the basis; they are appended to the
    0-form list and the 1-form mass formula is reused.
    """
    it = _integrator(basis, extra=(gi, gj))
    s, t = basis.size, basis.size + 1
    return scale * np.array([_m1_entry(it, s, t, a, b) for a, b in basis.pairs()])


def project_gaussian_field(basis, g, direction, scale=1.0):
    """``<G, ψ_ab>`` for the constant-direction field ``G = scale · φ̃ · v``."""
    it = _integrator(basis, extra=(g,))
    s = basis.size
    v = np.asarray(direction, dtype=float)
    return scale * np.array(
        [v @ (it.vec1((s, a), b) - it.vec1((s, b), a)) for a, b in basis.pairs()]
    )


def eval_oneform(basis, i, j, x):
    """``ψ_ij(x) = ψ_i ∇ψ_j - ψ_j ∇ψ_i`` at points ``x (K, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mem = basis.members

    def val(k):
        return np.ones(x.shape[0]) if mem[k] is None else mem[k].density(x)

    def grad(k):
        return np.zeros_like(x) if mem[k] is None else mem[k].grad_density(x)

    return val(i)[:, None] * grad(j) - val(j)[:, None] * grad(i)


@dataclass(frozen=True, eq=False)
class WhitneyPairField:
    """Vector field ``G = scale · (φ̃_i ∇φ̃_j - φ̃_j ∇φ̃_i)`` built from two Gaussians."""

    gi: Gaussian
    gj: Gaussian
    scale: float = 1.0

    @property
    def dim(self):
        return self.gi.dim

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.scale * (
            self.gi.density(x)[:, None] * self.gj.grad_density(x)
            - self.gj.density(x)[:, None] * self.gi.grad_density(x)
        )

    def project(self, basis):
        return project_whitney_pair(basis, self.gi, self.gj, self.scale)
