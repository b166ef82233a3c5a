"""Galerkin systems on a Gaussian basis: assembly, least-squares solve, evaluation."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .forms import (
    assemble_boundary,
    assemble_D0,
    assemble_M0_S0,
    assemble_M1,
    assemble_S0,
    project_forcing,
)

SV_CUTOFF = 1e-14


class DegenerateSystemError(ValueError):
    """The operator has no nonzero singular value."""


@dataclass(eq=False)
class AssembledSystem:
    """Linear system ``L u = F`` together with the basis it lives on."""

    L: np.ndarray
    F: np.ndarray
    basis: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.L.ndim != 2 or self.L.shape[0] != self.L.shape[1]:
            raise ValueError(f"operator must be square, got shape {self.L.shape}")
        if self.F.shape != (self.L.shape[0],):
            raise ValueError(f"right-hand side shape {self.F.shape} does not match {self.L.shape}")
        self._svd = None

    def svd(self):
        if self._svd is None:
            self._svd = np.linalg.svd(self.L)
        return self._svd

    @property
    def kappa(self):
        """``σ_max / σ_min`` over singular values above the cutoff."""
        s = self.svd()[1]
        if s[0] == 0.0:
            return np.inf
        kept = s[s > SV_CUTOFF * s[0]]
        return float(kept[0] / kept[-1])


@dataclass(eq=False)
class Solution:
    """Coefficients of a discrete solution.

    ``coeffs`` multiply the 0-forms; ``flux`` (mixed problems only) multiplies
    the 1-forms ``ψ_ab`` over the pairs ``a < b``.
    """

    coeffs: np.ndarray
    basis: object
    flux: np.ndarray = None
    kappa: float = 1.0

    def __post_init__(self):
        if self.coeffs.shape != (self.basis.size,):
            raise ValueError("coefficient count does not match the basis")
        if self.flux is not None and self.flux.shape != (len(self.basis.pairs()),):
            raise ValueError("flux coefficient count does not match the 1-form basis")


def build_poisson(basis, f, gamma=0.0, g=None, seed=0, n_samples=1024):
    """``-Δu = f`` with optional boundary penalty ``γ ∫_Γ (u - g) v``.

    ``L = S^0 + γ B`` and ``F = <f, ψ> + γ b(g)``; on an unbounded domain
    ``γ`` must be zero and the system is the plain stiffness problem.
    """
    if gamma < 0:
        raise ValueError("penalty parameter must be non-negative")
    if gamma > 0 and not basis.domain.bounded:
        raise ValueError("a boundary penalty needs a bounded domain")
    if f is None:
        F = np.zeros(basis.size)
    else:
        F = project_forcing(basis, f, seed=seed)
    if basis.include_constant:
        L = assemble_S0(basis).values
    else:
        _, L = assemble_M0_S0(basis)
    if gamma > 0:
        B, b = assemble_boundary(basis, n_samples=n_samples, seed=seed, g=g)
        L = L + gamma * B
        F = F + gamma * b
    return AssembledSystem(L, F, basis, {"problem": "poisson", "gamma": float(gamma)})


def build_mixed_darcy(basis, G, f):
    """Mixed system for ``F - ∇u = G``, ``∇·F = f`` on ``R^3``.

    Unknowns are 1-form coefficients over pairs ``a < b`` followed by 0-form
    coefficients.  Testing the first equation with ``ψ_ab`` and the second
    with ``φ_i`` (integrating by parts, no boundary) gives::

        M^1 F̂ - D^0ᵀ û = <G, ψ_ab>
            - D^0 F̂     = <f, φ_i>

    ``G`` is a :class:`~grbf.forms.WhitneyPairField` (or ``None``) and ``f``
    a forcing descriptor accepted by :func:`~grbf.forms.project_forcing`.
    """
    if basis.dim != 3:
        raise ValueError(f"the mixed problem is posed in three dimensions, got d = {basis.dim}")
    if basis.domain.bounded or basis.include_constant:
        raise ValueError("the mixed problem uses the plain basis on R^3")
    npairs = len(basis.pairs())
    if npairs == 0:
        raise ValueError("1-forms need at least two Gaussians")
    M1 = assemble_M1(basis).values
    D0 = assemble_D0(basis).values
    n = basis.size
    L = np.block([[M1, -D0.T], [-D0, np.zeros((n, n))]])
    rg = np.zeros(npairs) if G is None else G.project(basis)
    rf = np.zeros(n) if f is None else project_forcing(basis, f)
    return AssembledSystem(
        L, np.concatenate([rg, rf]), basis, {"problem": "mixed_darcy", "n_flux": npairs}
    )


def _truncated_solve(U, s, Vt, F):
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateSystemError("operator is identically zero")
    keep = s > SV_CUTOFF * s[0]
    x = Vt[keep].T @ ((U[:, keep].T @ F) / s[keep])
    kept = s[keep]
    return x, float(kept[0] / kept[-1])


def solve(system):
    """Minimum-norm least-squares solution through a truncated SVD."""
    x, _ = _truncated_solve(*system.svd(), system.F)
    basis = system.basis
    n_flux = system.meta.get("n_flux")
    if basis is None:
        raise ValueError("system has no basis attached")
    if n_flux is not None:
        return Solution(x[n_flux:], basis, flux=x[:n_flux], kappa=system.kappa)
    return Solution(x, basis, kappa=system.kappa)


def solve_array(L, F):
    """Truncated-SVD solve of a bare system; returns ``(x, kappa)``."""
    return _truncated_solve(*np.linalg.svd(L), F)


def _values_and_grads(basis, x):
    Phi = kernels.density_matrix(x, basis.means, basis.inv_chols, basis.logdets)
    # ∇φ_i = φ_i P_i (m_i - x)
    p = np.einsum("nij,knj->kni", basis.precs, basis.means[None] - x[:, None])
    grads = Phi[..., None] * p
    if basis.include_constant:
        Phi = np.hstack([np.ones((x.shape[0], 1)), Phi])
        grads = np.concatenate([np.zeros((x.shape[0], 1, x.shape[1])), grads], axis=1)
    return Phi, grads


def evaluate(solution, points, part="u"):
    """Evaluate the 0-form expansion (``part="u"``) or the 1-form flux (``"flux"``)."""
    basis = solution.basis
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != basis.dim:
        raise ValueError(f"points have dimension {x.shape[1]}, basis has {basis.dim}")
    if part == "u":
        Phi = kernels.density_matrix(x, basis.means, basis.inv_chols, basis.logdets)
        u = Phi @ solution.coeffs[basis.offset:]
        if basis.include_constant:
            u = u + solution.coeffs[0]
        return u
    if part != "flux":
        raise ValueError(f"part must be 'u' or 'flux', got {part!r}")
    if solution.flux is None:
        raise ValueError("solution carries no 1-form coefficients")
    Phi, grads = _values_and_grads(basis, x)
    A = np.zeros((basis.size, basis.size))
    for c, (a, b) in zip(solution.flux, basis.pairs()):
        A[a, b], A[b, a] = c, -c
    # Σ_{a<b} F_ab (φ_a ∇φ_b - φ_b ∇φ_a) = Σ_b (Φ A)_b ∇φ_b
    return np.einsum("kb,kbd->kd", Phi @ A, grads)


def relative_mse(pred, truth):
    """``‖pred - truth‖_F² / ‖truth‖_F²``."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    denom = np.sum(truth * truth)
    if denom == 0.0:
        raise ValueError("relative error undefined for a zero reference")
    return float(np.sum((pred - truth) ** 2) / denom)
