"""Manufactured test problems with exact solutions.

1. ``-u'' = f`` on ``R`` with ``u = x(2-x) e^{-x²/2}``.
2. ``-u'' = f`` on ``[-1, 1]`` with ``u = sin(3πx)``, weak Dirichlet data by penalty.
3. ``-Δu = f`` on ``R^8`` with ``u = e^{-|x|²/2} Σ x_i(2-x_i)``.
4. ``F - ∇u = G``, ``∇·F = f`` on ``R^3`` with ``u = 0`` and ``F = G``,
   ``G = e^{-|x-½1|²} 1``.
"""

from dataclasses import dataclass, field
from math import exp, pi, sqrt

import numpy as np

from .forms import Basis, DomainDescriptor, PolyGaussianForcing, TrigForcing, WhitneyPairField
from .gaussian import Gaussian
from .solver import build_mixed_darcy, build_poisson, evaluate, relative_mse, solve
from .tensor import outer, symmetrize
from .training import init_basis


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything needed to set up, train on and score one manufactured problem.

    ``sample_lo``/``sample_hi`` bound the box on which data and error metrics
    are taken; ``init_lo``/``init_hi`` is the interval on which initial basis
    means are laid out (along the main diagonal when ``dim > 1``).
    """

    id: int
    dim: int
    domain: DomainDescriptor
    forcing: object
    exact: object
    sample_lo: np.ndarray
    sample_hi: np.ndarray
    init_lo: float
    init_hi: float
    n_data: int = 4096
    boundary_data: object = None
    gamma_rule: str = "none"
    lr: float = 0.01
    steps: int = 1000
    flux_forcing: object = None
    exact_flux: object = None
    description: str = ""
    extras: dict = field(default_factory=dict)

    def gamma(self, n):
        if self.gamma_rule == "none":
            return 0.0
        if self.gamma_rule == "16N":
            return 16.0 * n
        raise ValueError(f"unknown gamma rule {self.gamma_rule!r}")


def _problem1_exact(x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return x * (2.0 - x) * np.exp(-0.5 * x * x)


def problem1():
    """1-D Poisson on the whole line; forcing ``e^{-x²/2}(x⁴-2x³-5x²+6x+2)``."""
    coeffs = tuple(np.full((1,) * k, c) for k, c in enumerate([2.0, 6.0, -5.0, -2.0, 1.0]))
    forcing = PolyGaussianForcing(sqrt(2.0 * pi), Gaussian([0.0], [[1.0]]), coeffs)
    return ProblemSpec(
        id=1,
        dim=1,
        domain=DomainDescriptor.unbounded(1),
        forcing=forcing,
        exact=_problem1_exact,
        sample_lo=np.array([-6.0]),
        sample_hi=np.array([6.0]),
        init_lo=-6.0,
        init_hi=6.0,
        description="1-D Poisson on R, u = x(2-x)exp(-x^2/2)",
    )


def _problem2_exact(x):
    return np.sin(3.0 * pi * np.asarray(x, dtype=float).reshape(-1))


def problem2():
    """1-D Poisson on ``[-1, 1]``; ``f = 9π² sin(3πx)`` and zero boundary data."""
    return ProblemSpec(
        id=2,
        dim=1,
        domain=DomainDescriptor.box([-1.0], [1.0]),
        forcing=TrigForcing(9.0 * pi**2, "sin", 3.0 * pi),
        exact=_problem2_exact,
        sample_lo=np.array([-1.0]),
        sample_hi=np.array([1.0]),
        init_lo=-2.0,
        init_hi=2.0,
        boundary_data=0.0,
        gamma_rule="16N",
        description="1-D Poisson on [-1,1], u = sin(3 pi x), penalty gamma = 16N",
    )


def problem3_forcing(d=8):
    """``e^{-r/2}(2d + (4+2d)s - (4+d)r - 2sr + r²)`` with ``s = Σx_i``, ``r = |x|²``."""
    one, eye = np.ones(d), np.eye(d)
    coeffs = (
        np.asarray(2.0 * d),
        (4.0 + 2.0 * d) * one,
        -(4.0 + d) * eye,
        -2.0 * symmetrize(outer(one, eye)),
        symmetrize(outer(eye, eye)),
    )
    return PolyGaussianForcing((2.0 * pi) ** (d / 2.0), Gaussian(np.zeros(d), eye), coeffs)


def _problem3_exact(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.exp(-0.5 * np.sum(x * x, axis=1)) * np.sum(x * (2.0 - x), axis=1)


def problem3(d=8, full_scale=False, data_half_width=2.0):
    """``d``-dimensional Poisson on ``R^d``.

    Data live on the cube ``[-a, a]^d`` (``a = data_half_width``).  The
    desk-scale defaults use 4096 points and 2000 steps; ``full_scale`` switches
    to 65536 points and 10000 steps.
    """
    a = float(data_half_width)
    return ProblemSpec(
        id=3,
        dim=d,
        domain=DomainDescriptor.unbounded(d),
        forcing=problem3_forcing(d),
        exact=_problem3_exact,
        sample_lo=np.full(d, -a),
        sample_hi=np.full(d, a),
        init_lo=-a,
        init_hi=a,
        n_data=65536 if full_scale else 4096,
        lr=0.05,
        steps=10000 if full_scale else 2000,
        description=f"{d}-D Poisson on R^{d}, u = exp(-|x|^2/2) sum x_i(2-x_i)",
    )


def problem4_field():
    """``G`` as ``(2π)³ e^{3/4} (φ̃_0 ∇φ̃_1 - φ̃_1 ∇φ̃_0)``, ``φ̃_0 = N(0, I)``, ``φ̃_1 = N(1, I)``."""
    g0 = Gaussian(np.zeros(3), np.eye(3))
    g1 = Gaussian(np.ones(3), np.eye(3))
    return WhitneyPairField(g0, g1, (2.0 * pi) ** 3 * exp(0.75))


def problem4_flux(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.exp(-np.sum((x - 0.5) ** 2, axis=1))[:, None] * np.ones((1, 3))


def problem4_forcing():
    """``f = e^{-|x-½1|²}(3 - 2 xᵀ1) = π^{3/2} N(½1, ½I)(3 - 2 xᵀ1)``."""
    center = Gaussian(np.full(3, 0.5), 0.5 * np.eye(3))
    return PolyGaussianForcing(pi**1.5, center, (np.asarray(3.0), np.full(3, -2.0)))


def problem4(sample_lo=-2.0, sample_hi=3.0):
    return ProblemSpec(
        id=4,
        dim=3,
        domain=DomainDescriptor.unbounded(3),
        forcing=problem4_forcing(),
        exact=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
        sample_lo=np.full(3, float(sample_lo)),
        sample_hi=np.full(3, float(sample_hi)),
        init_lo=0.0,
        init_hi=1.0,
        flux_forcing=problem4_field(),
        exact_flux=problem4_flux,
        description="mixed Darcy on R^3, u = 0, F = exp(-|x-1/2|^2) 1",
    )


def problem4_basis(n, seed=0, include_pair=False):
    """``n`` unit-covariance Gaussians with seeded standard normal means.

    ``include_pair`` puts ``N(0, I)`` and ``N(1, I)`` first, so that the
    1-form field ``G`` lies exactly in the discrete space.
    """
    if n < 2:
        raise ValueError("the mixed problem needs at least two Gaussians")
    means = np.random.default_rng(seed).standard_normal((n, 3))
    if include_pair:
        means[0], means[1] = 0.0, 1.0
    return Basis([Gaussian(m, np.eye(3)) for m in means])


PROBLEMS = {1: problem1, 2: problem2, 3: problem3, 4: problem4}


def get_problem(pid, **kwargs):
    if pid not in PROBLEMS:
        raise ValueError(f"unknown problem {pid!r}; choose from {sorted(PROBLEMS)}")
    return PROBLEMS[pid](**kwargs)


def sample_data(spec, count=None, seed=0):
    """Seeded uniform points on the sampling box and exact solution values there."""
    count = spec.n_data if count is None else int(count)
    if count < 1:
        raise ValueError("need at least one data point")
    rng = np.random.default_rng(seed)
    pts = spec.sample_lo + rng.random((count, spec.dim)) * (spec.sample_hi - spec.sample_lo)
    return pts, spec.exact(pts)


def test_points(spec, count=4096, seed=12345):
    """Points for error metrics: a uniform grid in 1-D, seeded samples otherwise."""
    if spec.dim == 1:
        return np.linspace(spec.sample_lo[0], spec.sample_hi[0], count)[:, None]
    return sample_data(spec, count, seed)[0]


def problem_basis(spec, n, seed=0):
    """Untrained starting basis for ``spec`` with ``n`` Gaussians.

    Problems 1-3 use equispaced means on ``[init_lo, init_hi]`` (the main
    diagonal when ``dim > 1``) with ``σ = (init_hi - init_lo) / n``; Problem 4
    uses :func:`problem4_basis`.
    """
    if n < 1:
        raise ValueError(f"basis size must be positive, got {n}")
    if spec.id == 4:
        return problem4_basis(n, seed)
    return init_basis(spec.init_lo, spec.init_hi, n, spec.dim, domain=spec.domain)


def mixed_errors(solution, spec, points=None):
    """``{"mse_u", "mse_f", "total"}`` for a mixed solution.

    The exact ``u`` vanishes, so both parts are normalised by ``‖G‖²`` on the
    same points; the total is their sum, i.e. the relative error of the pair
    ``(u_h, F_h)`` against ``(0, G)``.
    """
    pts = test_points(spec) if points is None else points
    G = spec.exact_flux(pts)
    u = evaluate(solution, pts)
    F = evaluate(solution, pts, part="flux")
    denom = float(np.sum(G * G))
    mse_u = float(u @ u) / denom
    mse_f = float(np.sum((F - G) ** 2)) / denom
    return {"mse_u": mse_u, "mse_f": mse_f, "total": mse_u + mse_f}


def solve_problem(spec, n=None, basis=None, gamma=None, seed=0):
    """Assemble and solve ``spec`` on a basis; returns ``(solution, errors)``.

    ``errors`` holds ``"rel_mse"`` for the Poisson problems and the
    :func:`mixed_errors` entries for Problem 4.
    """
    if basis is None:
        if n is None:
            raise ValueError("give either a basis size or a basis")
        basis = problem_basis(spec, n, seed)
    if spec.id == 4:
        sol = solve(build_mixed_darcy(basis, spec.flux_forcing, spec.forcing))
        return sol, mixed_errors(sol, spec)
    g = spec.gamma(len(basis)) if gamma is None else float(gamma)
    sol = solve(build_poisson(basis, spec.forcing, g, spec.boundary_data, seed=seed))
    pts = test_points(spec)
    return sol, {"rel_mse": relative_mse(evaluate(sol, pts), spec.exact(pts))}


def fd_residual(spec, count=64, h=2e-3, seed=0):
    """Relative strong-form residual of the manufactured solution.

    Fourth-order central differences give ``-Δu - f`` (Problems 1-3) or
    ``∇·F - f`` (Problem 4, where ``F = G`` and ``u = 0``) at seeded points;
    the result is the max residual over ``max |f|`` at those points.
    """
    pts = sample_data(spec, count, seed)[0] if spec.dim > 1 else test_points(spec, count)
    f = spec.forcing(pts)
    res = -f
    for k in range(spec.dim):
        e = np.zeros(spec.dim)
        e[k] = h
        if spec.id == 4:
            Fk = lambda x: spec.exact_flux(x)[:, k]  # noqa: E731
            res = res + (-Fk(pts + 2 * e) + 8 * Fk(pts + e) - 8 * Fk(pts - e) + Fk(pts - 2 * e)) / (12 * h)
        else:
            u = spec.exact
            d2 = (-u(pts + 2 * e) + 16 * u(pts + e) - 30 * u(pts) + 16 * u(pts - e) - u(pts - 2 * e)) / (12 * h * h)
            res = res - d2
    return float(np.max(np.abs(res)) / np.max(np.abs(f)))
