"""Basis calibration: gradient descent on the data misfit of the Galerkin solution.

The loss of a parameter vector ``θ`` (means and covariance factors of all
Gaussians) is obtained by assembling and solving the Galerkin system for the
basis ``θ`` describes, evaluating the discrete solution at the data points and
taking the relative mean squared error.  Gradients are central finite
differences; perturbing one Gaussian only changes one row/column of every
assembled quantity, so each perturbed loss is evaluated incrementally.
"""

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg.lapack import dtrtri

from . import kernels
from .forms import Basis, DomainDescriptor
from .gaussian import Gaussian
from .solver import SV_CUTOFF, DegenerateSystemError, Solution, evaluate, relative_mse, solve

LOG_2PI = np.log(2.0 * np.pi)


class NonFiniteLossError(FloatingPointError):
    """A loss evaluation produced ``nan`` or ``inf``."""


def n_params_per_gaussian(d, isotropic=False):
    return d + (1 if isotropic else d * (d + 1) // 2)


@dataclass(frozen=True)
class ThetaParams:
    """Flat parameter vector for ``n`` Gaussians in ``d`` dimensions.

    Per Gaussian: the mean, then the row-major lower triangle of a Cholesky
    factor ``S`` of the covariance with its diagonal stored as ``log S_ii``.
    With ``isotropic`` the factor is ``σ I`` and only ``log σ`` is stored.
    """

    values: np.ndarray
    n: int
    d: int
    isotropic: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n * n_params_per_gaussian(self.d, self.isotropic),):
            raise ValueError(f"parameter vector of shape {v.shape} does not fit n={self.n}, d={self.d}")
        object.__setattr__(self, "values", v)

    @property
    def block(self):
        return n_params_per_gaussian(self.d, self.isotropic)

    def with_values(self, values):
        return ThetaParams(values, self.n, self.d, self.isotropic)


@lru_cache(maxsize=None)
def _tril(d):
    return np.tril_indices(d)


def pack(basis_or_gaussians, isotropic=False):
    """``θ`` for a list of Gaussians (or a :class:`Basis`)."""
    gs = list(getattr(basis_or_gaussians, "gaussians", basis_or_gaussians))
    d = gs[0].dim
    rows, cols = _tril(d)
    blocks = []
    for g in gs:
        if isotropic:
            var = np.diag(g.cov)
            if not np.allclose(g.cov, var[0] * np.eye(d), rtol=1e-12, atol=0):
                raise ValueError("isotropic packing needs covariances proportional to I")
            blocks.append(np.concatenate([g.mean, [0.5 * np.log(var[0])]]))
        else:
            S = g.chol.copy()
            S[np.diag_indices(d)] = np.log(np.diag(S))
            blocks.append(np.concatenate([g.mean, S[rows, cols]]))
    return ThetaParams(np.concatenate(blocks), len(gs), d, isotropic)


def block_arrays(block, d, isotropic=False):
    """Mean, covariance factor, precision, inverse factor and log-det for one block."""
    mean = block[:d]
    if isotropic:
        log_s = block[d]
        S = np.exp(log_s) * np.eye(d)
        W = np.exp(-log_s) * np.eye(d)
        return mean, S, W.T @ W, W, 2.0 * d * log_s
    S = np.zeros((d, d))
    rows, cols = _tril(d)
    S[rows, cols] = block[d:]
    diag = np.diag(S).copy()
    S[np.diag_indices(d)] = np.exp(diag)
    W = dtrtri(S, lower=1)[0]
    return mean, S, W.T @ W, W, 2.0 * float(np.sum(diag))


def unpack(theta):
    """Gaussians described by ``θ``; covariances are SPD by construction."""
    out = []
    for g in range(theta.n):
        block = theta.values[g * theta.block:(g + 1) * theta.block]
        mean, S, _, _, _ = block_arrays(block, theta.d, theta.isotropic)
        out.append(Gaussian(mean, S @ S.T))
    return out


@dataclass
class TrainConfig:
    steps: int = 1000
    lr: float = 0.01
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    stop_factor: float = 1e-15
    seed: int = 0
    fd_step: float = 1e-6
    lbfgs_history: int = 10
    armijo: float = 1e-4
    blowup_ratio: float = 1e2
    kappa_blowup: float = 1e10

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ValueError(f"optimizer must be 'adam' or 'lbfgs', got {self.optimizer!r}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    kappas: list = field(default_factory=list)
    reason: str = "max_steps"
    theta: ThetaParams = None
    solution: Solution = None
    best_loss: float = np.inf
    initial_loss: float = np.inf
    wall_time: float = 0.0

    def __len__(self):
        return len(self.losses)


def fill_distance(points, lo, hi, resolution=None):
    """``sup_{x ∈ box} min_k |x - x_k|`` approximated on a probe grid.

    The probe grid has ``2^10 + 1`` points per axis in 1-D; in higher
    dimensions ``resolution`` points per axis (default 33 for ``d = 2``,
    fewer above) including the box corners.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("fill distance of an empty point set")
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
    d = lo.size
    if pts.shape[1] != d:
        pts = pts.reshape(-1, d)
    if resolution is None:
        resolution = 2**10 + 1 if d == 1 else max(3, int(round(2**14 ** (1.0 / d))) | 1)
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    best = np.full(grid.shape[0], np.inf)
    for p in pts:
        best = np.minimum(best, np.sum((grid - p) ** 2, axis=1))
    return float(np.sqrt(best.max()))


def init_basis(lo, hi, n, dim=1, sigma_rule="domain", sigma_factor=1.0, domain=None):
    """Equispaced isotropic Gaussians on ``[lo, hi]`` (main diagonal when ``dim > 1``).

    ``sigma_rule="domain"`` gives ``σ = (hi - lo) / n``; ``"fill"`` gives
    ``σ = sigma_factor · h`` with ``h`` the fill distance of the means in the
    box ``[lo, hi]^dim``.
    """
    if n < 1:
        raise ValueError("need at least one Gaussian")
    t = np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n)
    means = t[:, None] * np.ones((1, dim))
    if sigma_rule == "domain":
        sigma = (hi - lo) / n
    elif sigma_rule == "fill":
        sigma = sigma_factor * fill_distance(means, np.full(dim, lo), np.full(dim, hi))
    else:
        raise ValueError(f"unknown sigma rule {sigma_rule!r}")
    gs = [Gaussian.isotropic(m, sigma) for m in means]
    return Basis(gs, domain=domain)


@dataclass
class _State:
    means: np.ndarray
    precs: np.ndarray
    inv_chols: np.ndarray
    logdets: np.ndarray
    S: np.ndarray
    F: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    patch: tuple = None


class PoissonLossModel:
    """Relative data misfit of the penalised Poisson Galerkin solution.

    Parameters
    ----------
    forcing : analytic forcing descriptor with ``project_arrays``
    points, values : data locations ``(K, d)`` and exact values ``(K,)``
    domain : :class:`DomainDescriptor`; bounded domains add a penalty
    gamma : penalty parameter (0 on unbounded domains)
    boundary_data : constant or callable ``g`` on ``Γ``
    isotropic : parameterisation switch for ``θ``
    """

    def __init__(self, forcing, points, values, domain=None, gamma=0.0, boundary_data=None,
                 isotropic=False, n_boundary=1024, seed=0):
        self.forcing = forcing
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if self.points.shape[0] == 0:
            raise ValueError("loss needs data points")
        self.d = self.points.shape[1]
        self.points_t = np.ascontiguousarray(self.points.T)
        self.domain = DomainDescriptor.unbounded(self.d) if domain is None else domain
        if gamma > 0 and not self.domain.bounded:
            raise ValueError("a boundary penalty needs a bounded domain")
        self.gamma = float(gamma)
        self.isotropic = isotropic
        self.denom = float(self.values @ self.values)
        if self.denom == 0.0:
            raise ValueError("relative error undefined for zero data")
        if self.gamma > 0:
            self.bpts, self.bw = self.domain.boundary_samples(n_boundary, seed)
            g = boundary_data
            if g is None:
                self.bg = np.zeros(len(self.bw))
            elif callable(g):
                self.bg = np.asarray(g(self.bpts), dtype=float).reshape(-1)
            else:
                self.bg = np.full(len(self.bw), float(g))
        else:
            self.bpts = self.bw = self.bg = None

    @classmethod
    def for_problem(cls, spec, n, points=None, values=None, seed=0, isotropic=False):
        from .problems import sample_data

        if points is None:
            points, values = sample_data(spec, seed=seed)
        return cls(spec.forcing, points, values, spec.domain, spec.gamma(n), spec.boundary_data,
                   isotropic=isotropic, seed=seed)

    def _blocks(self, theta):
        out = [block_arrays(theta.values[g * theta.block:(g + 1) * theta.block], theta.d, theta.isotropic)
               for g in range(theta.n)]
        means = np.stack([o[0] for o in out])
        precs = np.stack([o[2] for o in out])
        W = np.stack([o[3] for o in out])
        ld = np.array([o[4] for o in out])
        return means, precs, W, ld

    def state(self, theta):
        if theta.d != self.d:
            raise ValueError(f"parameters are {theta.d}-D, data are {self.d}-D")
        means, precs, W, ld = self._blocks(theta)
        _, S = kernels.cross_mass_stiffness(means, precs, ld, means, precs, ld)
        S = 0.5 * (S + S.T)
        F = self.forcing.project_arrays(means, precs, ld)
        Phi = kernels.density_matrix(self.points, means, W, ld)
        Psi = kernels.density_matrix(self.bpts, means, W, ld) if self.gamma > 0 else None
        return _State(means, precs, W, ld, S, F, Phi, Psi)

    def replace(self, st, g, block, isotropic):
        """State with Gaussian ``g`` replaced by the parameters in ``block``."""
        mean, _, P, W, ld = block_arrays(block, self.d, isotropic)
        means, precs, Ws, lds = st.means.copy(), st.precs.copy(), st.inv_chols.copy(), st.logdets.copy()
        means[g], precs[g], Ws[g], lds[g] = mean, P, W, ld
        _, row = kernels.cross_mass_stiffness(mean[None], P[None], np.array([ld]), means, precs, lds)
        S = st.S.copy()
        S[g, :] = row[0]
        S[:, g] = row[0]
        F = st.F.copy()
        F[g] = self.forcing.project_arrays(mean[None], P[None], np.array([ld]))[0]
        # the data design matrix is shared with the base state; only column g changes
        col = kernels.density_rows(self.points_t, mean[None], W[None], np.array([ld]))[0]
        Psi = None
        if st.Psi is not None:
            Psi = st.Psi.copy()
            Psi[:, g] = kernels.density_matrix(self.bpts, mean[None], W[None], np.array([ld]))[:, 0]
        return _State(means, precs, Ws, lds, S, F, st.Phi, Psi, (g, col - st.Phi[:, g]))

    def evaluate_state(self, st):
        """``(loss, coefficients, κ)`` for an assembled state."""
        L, F = st.S, st.F
        if st.Psi is not None:
            wPsi = self.bw[:, None] * st.Psi
            L = L + self.gamma * (st.Psi.T @ wPsi)
            F = F + self.gamma * (wPsi.T @ self.bg)
        U, s, Vt = np.linalg.svd(L)
        if s[0] == 0.0 or not np.isfinite(s[0]):
            raise DegenerateSystemError("degenerate or non-finite operator")
        keep = s > SV_CUTOFF * s[0]
        c = Vt[keep].T @ ((U[:, keep].T @ F) / s[keep])
        r = st.Phi @ c - self.values
        if st.patch is not None:
            g, dcol = st.patch
            r += c[g] * dcol
        return float(r @ r) / self.denom, c, float(s[0] / s[keep][-1])

    def loss(self, theta):
        return self.evaluate_state(self.state(theta))

    def basis(self, theta):
        return Basis(unpack(theta), domain=self.domain)

    def solution(self, theta, coeffs=None, kappa=1.0):
        basis = self.basis(theta)
        if coeffs is None:
            from .solver import build_poisson

            return solve(build_poisson(basis, self.forcing, self.gamma, None))
        return Solution(np.asarray(coeffs), basis, kappa=kappa)

    def fd_gradient(self, theta, fd_step=1e-6):
        """Central differences, one Gaussian at a time on top of the base state."""
        base = self.state(theta)
        grad = np.zeros_like(theta.values)
        B = theta.block
        for g in range(theta.n):
            block = theta.values[g * B:(g + 1) * B]
            for k in range(B):
                h = fd_step * (1.0 + abs(block[k]))
                vals = []
                for sgn in (1.0, -1.0):
                    pert = block.copy()
                    pert[k] += sgn * h
                    loss = self.evaluate_state(self.replace(base, g, pert, theta.isotropic))[0]
                    if not np.isfinite(loss):
                        raise NonFiniteLossError(f"non-finite loss perturbing parameter {g * B + k}")
                    vals.append(loss)
                grad[g * B + k] = (vals[0] - vals[1]) / (2.0 * h)
        return grad


class CallableLossModel:
    """Adapter turning ``f(values) -> loss`` (or ``(loss, coeffs, κ)``) into a loss model."""

    def __init__(self, fn):
        self.fn = fn

    def loss(self, theta):
        out = self.fn(theta.values)
        if isinstance(out, tuple):
            return out
        return float(out), None, 1.0

    def fd_gradient(self, theta, fd_step=1e-6):
        x = theta.values
        grad = np.zeros_like(x)
        for k in range(x.size):
            h = fd_step * (1.0 + abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            fp = self.loss(theta.with_values(xp))[0]
            fm = self.loss(theta.with_values(xm))[0]
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteLossError(f"non-finite loss perturbing parameter {k}")
            grad[k] = (fp - fm) / (2.0 * h)
        return grad


def _as_model(model):
    if hasattr(model, "fd_gradient") and hasattr(model, "loss"):
        return model
    if callable(model):
        return CallableLossModel(model)
    raise ValueError("model must be a loss model or a callable")


def loss(theta, model):
    """``(loss, coefficients, κ)`` of the Galerkin solution on the basis ``θ``."""
    return _as_model(model).loss(theta)


def gradient(theta, model, fd_step=1e-6):
    """Central finite-difference gradient with step ``fd_step (1 + |θ_k|)``."""
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    return _as_model(model).fd_gradient(theta, fd_step)


def _safe_loss(model, theta):
    try:
        value, coeffs, kappa = model.loss(theta)
    except (np.linalg.LinAlgError, DegenerateSystemError, FloatingPointError):
        return np.inf, None, np.inf
    return (value if np.isfinite(value) else np.inf), coeffs, kappa


class _Adam:
    def __init__(self, cfg, size):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x, g):
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        mhat = self.m / (1 - c.beta1**self.t)
        vhat = self.v / (1 - c.beta2**self.t)
        return x - c.lr * mhat / (np.sqrt(vhat) + c.eps)


class _LBFGS:
    """Limited-memory BFGS with Armijo backtracking."""

    def __init__(self, cfg, model, theta):
        self.cfg = cfg
        self.model = model
        self.theta = theta
        self.s, self.y = [], []
        self.prev = None

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(self.s, self.y))):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((rho, a, s, y))
            q -= a * y
        if self.s:
            q *= (self.s[-1] @ self.y[-1]) / (self.y[-1] @ self.y[-1])
        else:
            q *= self.cfg.lr / max(np.linalg.norm(g), 1e-300)
        for rho, a, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q

    def step(self, x, g, fx):
        d = self.direction(g)
        slope = g @ d
        if slope >= 0:
            self.s, self.y = [], []
            d = -g * self.cfg.lr / max(np.linalg.norm(g), 1e-300)
            slope = g @ d
        t = 1.0
        for _ in range(30):
            xn = x + t * d
            fn = _safe_loss(self.model, self.theta.with_values(xn))[0]
            if fn <= fx + self.cfg.armijo * t * slope:
                break
            t *= 0.5
        else:
            return x
        gn = self.model.fd_gradient(self.theta.with_values(xn), self.cfg.fd_step)
        s, y = xn - x, gn - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            self.s.append(s)
            self.y.append(y)
            if len(self.s) > self.cfg.lbfgs_history:
                self.s.pop(0)
                self.y.pop(0)
        self.prev = gn
        return xn


def train(config, model, theta0, callback=None):
    """Minimise the data misfit over the basis parameters.

    Each step evaluates the loss at the current ``θ`` (one trace row), checks
    the stopping rules and then updates ``θ``.  Stops early when the loss
    falls below ``κ · stop_factor`` (``"converged"``), or when the loss is
    non-finite or exceeds ``blowup_ratio`` times the best loss while
    ``κ ≥ kappa_blowup`` (``"ill_conditioned"``).  The best ``θ`` seen is
    returned, so the final loss never exceeds the initial one.
    """
    model = _as_model(model)
    start = time.perf_counter()
    trace = TrainTrace()
    x = theta0.values.copy()
    opt = _Adam(config, x.size) if config.optimizer == "adam" else _LBFGS(config, model, theta0)
    best_x, best_coeffs, best_kappa = x.copy(), None, np.inf
    grad_cache = None
    for step in range(config.steps):
        theta = theta0.with_values(x)
        value, coeffs, kappa = _safe_loss(model, theta)
        trace.losses.append(value)
        trace.kappas.append(kappa)
        if step == 0:
            trace.initial_loss = value
        if value < trace.best_loss:
            trace.best_loss, best_x, best_coeffs, best_kappa = value, x.copy(), coeffs, kappa
        if callback is not None:
            callback(step, value, kappa)
        if value < kappa * config.stop_factor:
            trace.reason = "converged"
            break
        if not np.isfinite(value) or (
            value > config.blowup_ratio * trace.best_loss and kappa >= config.kappa_blowup
        ):
            trace.reason = "ill_conditioned"
            break
        try:
            if config.optimizer == "lbfgs" and grad_cache is not None:
                g = grad_cache
            else:
                g = model.fd_gradient(theta, config.fd_step)
        except (NonFiniteLossError, np.linalg.LinAlgError, DegenerateSystemError):
            trace.reason = "non_finite_gradient"
            break
        if config.optimizer == "adam":
            x = opt.step(x, g)
        else:
            x = opt.step(x, g, value)
            grad_cache = opt.prev
            opt.prev = None
    else:
        # score the last update too; it is not a trace row
        value, coeffs, kappa = _safe_loss(model, theta0.with_values(x))
        if value < trace.best_loss:
            trace.best_loss, best_x, best_coeffs, best_kappa = value, x.copy(), coeffs, kappa
    trace.theta = theta0.with_values(best_x)
    if best_coeffs is not None and hasattr(model, "solution"):
        trace.solution = model.solution(trace.theta, best_coeffs, best_kappa)
    trace.wall_time = time.perf_counter() - start
    return trace


def solution_error(solution, spec, points=None):
    """Relative MSE of a Poisson solution against the exact solution."""
    from .problems import test_points

    pts = test_points(spec) if points is None else points
    return relative_mse(evaluate(solution, pts), spec.exact(pts))
