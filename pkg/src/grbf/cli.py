"""Command line front end: ``grbf selftest | convergence | solve | train | whitney``.

CSV output uses a header row, ``,`` delimiters and ``%.15e`` floats.  Every
command also prints a one-line JSON summary.  Schemas:

* ``convergence``: ``n,rel_mse_solve,kappa``
* ``solve``: ``n,rel_mse,kappa`` (Problems 1-3) or ``n,total,mse_u,mse_f,kappa``
* ``train``: ``step,loss,kappa``
* ``whitney``: ``mode,n,total,mse_u,mse_f,kappa``
"""

import argparse
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace

import numpy as np

from . import gaussian, kernels

COMMANDS = ("selftest", "convergence", "solve", "train", "whitney")


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation; ``None`` means "use the problem default"."""

    command: str
    problem: int = 1
    n: int = None
    n_min: int = None
    n_max: int = None
    gamma: float = None
    steps: int = None
    lr: float = None
    optimizer: str = "adam"
    seed: int = 0
    out: str = None
    full_scale: bool = False
    mutate: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.problem not in (1, 2, 3, 4):
            raise ValueError(f"problem must be 1-4, got {self.problem}")
        for name in ("n", "n_min", "n_max", "steps"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("n_min", "n_max"):
            v = getattr(self, name)
            if v is not None and v & (v - 1):
                raise ValueError(f"{name} must be a power of two, got {v}")
        if self.n_min is not None and self.n_max is not None and self.n_min > self.n_max:
            raise ValueError("n_min exceeds n_max")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.lr is not None and not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ValueError(f"optimizer must be adam or lbfgs, got {self.optimizer!r}")

    def render(self):
        """``key=value`` lines for every field that is set."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name}={repr(v) if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text, base=None):
        """Inverse of :meth:`render`; unknown keys raise ``ValueError``."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _convert(types[key], val)
        if base is not None:
            return replace(base, **values)
        if "command" not in values:
            raise ValueError("config has no command")
        return cls(**values)


def _convert(kind, text):
    if text in ("None", ""):
        return None
    if kind in ("bool", bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.15e" % v
    return str(v)


class _Output:
    def __init__(self, path):
        self.path = path
        self.rows = []

    def header(self, *names):
        self.rows.append(",".join(names))

    def row(self, *values):
        self.rows.append(",".join(_fmt(v) for v in values))

    def close(self):
        text = "\n".join(self.rows) + "\n"
        if self.path:
            with open(self.path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _summary(**items):
    clean = {k: (float(v) if isinstance(v, np.floating) else v) for k, v in items.items()}
    print(json.dumps(clean, sort_keys=True))


# -- selftest ---------------------------------------------------------------


def _random_spd(rng, d, cond_max=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = np.exp(rng.uniform(0.0, np.log(cond_max), d))
    ev *= rng.uniform(0.3, 1.5) / ev.max()
    return (Q * ev) @ Q.T


def _random_gaussian(rng, d):
    return gaussian.Gaussian(rng.normal(scale=0.7, size=d), _random_spd(rng, d))


def _suite_duality(rng):
    ok = total = 0
    for _ in range(40):
        d = int(rng.integers(1, 4))
        alpha, beta = int(rng.integers(1, 4)), int(rng.integers(0, 4))
        phis = [_random_gaussian(rng, d) for _ in range(alpha)]
        grads = [_random_gaussian(rng, d) for _ in range(beta)]
        a = gaussian.integral_I_moment(phis, grads)
        b = gaussian.integral_I_gh(phis, grads)
        scale = max(np.max(np.abs(b)), 1e-300)
        ok += bool(np.max(np.abs(a - b)) <= 1e-11 * scale)
        total += 1
    return ok, total


def _suite_product(rng):
    ok = total = 0
    for n in (2, 3, 5):
        for _ in range(5):
            d = int(rng.integers(1, 4))
            gs = [_random_gaussian(rng, d) for _ in range(n)]
            wg = gaussian.product(gs)
            x = rng.normal(size=(20, d))
            lhs = wg.z * wg.gaussian.density(x)
            rhs = np.prod([g.density(x) for g in gs], axis=0)
            ok += bool(np.allclose(lhs, rhs, rtol=1e-12, atol=0.0))
            total += 1
    return ok, total


def _suite_tensor(rng):
    from .tensor import contract_even, symmetrize

    ok = total = 0
    for _ in range(10):
        T = rng.normal(size=(2, 2, 2))
        S = symmetrize(T)
        ok += bool(np.allclose(symmetrize(S), S, rtol=0, atol=1e-14))
        A, B = rng.normal(size=(2, 3, 2, 3)), rng.normal(size=(3, 3))
        ref = np.einsum("iajb,ab->ij", A, B)
        ok += bool(np.allclose(contract_even(A, B), ref, rtol=1e-13, atol=1e-13))
        total += 2
    return ok, total


def _suite_forms(rng):
    from .forms import Basis, assemble_D0, assemble_M1, eval_oneform, oneform_oracle

    ok = total = 0
    for _ in range(2):
        d = int(rng.integers(1, 4))
        basis = Basis([_random_gaussian(rng, d) for _ in range(3)])
        M1 = assemble_M1(basis)
        pairs = basis.pairs()
        for r, ij in enumerate(pairs):
            for c, ab in enumerate(pairs):
                ok += bool(abs(M1.values[r, c] - oneform_oracle(basis, ij, ab)) <= 1e-9)
                total += 1
        i, j = pairs[0]
        ok += bool(M1.entry((j, i), pairs[0]) == -M1.values[0, 0])
        D0 = assemble_D0(basis)
        ok += bool(D0.entry(0, (j, i)) == -D0.entry(0, (i, j)))
        x = rng.normal(size=(10, d))
        ok += bool(np.allclose(eval_oneform(basis, i, j, x), -eval_oneform(basis, j, i, x)))
        total += 3
    return ok, total


def _suite_trig(rng):
    from scipy.integrate import quad

    ok = total = 0
    for _ in range(10):
        g = gaussian.Gaussian([rng.uniform(-2, 2)], [[rng.uniform(0.05, 2.0)]])
        k = rng.uniform(0.0, 10.0)
        for kind, fn in (("sin", np.sin), ("cos", np.cos)):
            lo, hi = g.mean[0] - 12 * g.chol[0, 0], g.mean[0] + 12 * g.chol[0, 0]
            ref = quad(lambda x: fn(k * x) * g.density(np.array([[x]]))[0], lo, hi,
                       limit=400, epsabs=1e-14, epsrel=1e-13)[0]
            ok += bool(abs(gaussian.trig_integral(kind, k, g) - ref) <= 1e-12)
            total += 1
    return ok, total


def _suite_problems(rng):
    from .problems import PROBLEMS, fd_residual

    ok = total = 0
    for pid in (1, 2, 3, 4):
        ok += bool(fd_residual(PROBLEMS[pid](), seed=int(rng.integers(1 << 30))) <= 1e-6)
        total += 1
    return ok, total


SUITES = (
    ("quadrature_duality", _suite_duality),
    ("product_lemma", _suite_product),
    ("tensor", _suite_tensor),
    ("whitney_forms", _suite_forms),
    ("trig_integrals", _suite_trig),
    ("problem_residuals", _suite_problems),
)


@contextmanager
def _mutated_expansion():
    """Flip the sign pattern of the moment expansion (mutation test mode)."""
    original = gaussian._term_sign
    gaussian._term_sign = lambda beta, k: -original(beta, k)
    try:
        yield
    finally:
        gaussian._term_sign = original


def cmd_selftest(cfg):
    rng = np.random.default_rng(cfg.seed)
    failed = 0
    results = {}
    ctx = _mutated_expansion() if cfg.mutate else _null()
    with ctx:
        for name, suite in SUITES:
            ok, total = suite(rng)
            results[name] = [ok, total]
            failed += total - ok
            print(f"{name}: {ok}/{total} passed")
    _summary(command="selftest", backend=kernels.BACKEND, mutate=cfg.mutate,
             failed=failed, suites=results)
    return 1 if failed else 0


@contextmanager
def _null():
    yield


# -- solver commands ---------------------------------------------------------


def _spec(cfg):
    from .problems import get_problem

    if cfg.problem == 3:
        return get_problem(3, full_scale=cfg.full_scale)
    return get_problem(cfg.problem)


def _n_list(cfg, default):
    if cfg.n is not None:
        return [cfg.n]
    lo = cfg.n_min if cfg.n_min is not None else default[0]
    hi = cfg.n_max if cfg.n_max is not None else default[1]
    out = []
    n = lo
    while n <= hi:
        out.append(n)
        n *= 2
    return out


def cmd_convergence(cfg):
    from .problems import solve_problem

    if cfg.problem == 4:
        raise ValueError("use the whitney command for Problem 4")
    spec = _spec(cfg)
    out = _Output(cfg.out)
    out.header("n", "rel_mse_solve", "kappa")
    start = time.perf_counter()
    rows = []
    for n in _n_list(cfg, (8, 2048)):
        sol, err = solve_problem(spec, n, gamma=cfg.gamma, seed=cfg.seed)
        out.row(n, err["rel_mse"], sol.kappa)
        rows.append(err["rel_mse"])
    out.close()
    _summary(command="convergence", problem=cfg.problem, rows=len(rows),
             final_rel_mse=rows[-1], wall_time=time.perf_counter() - start)
    return 0


def cmd_solve(cfg):
    from .problems import solve_problem

    spec = _spec(cfg)
    n = cfg.n if cfg.n is not None else 8
    start = time.perf_counter()
    sol, err = solve_problem(spec, n, gamma=cfg.gamma, seed=cfg.seed)
    out = _Output(cfg.out)
    if cfg.problem == 4:
        out.header("n", "total", "mse_u", "mse_f", "kappa")
        out.row(n, err["total"], err["mse_u"], err["mse_f"], sol.kappa)
    else:
        out.header("n", "rel_mse", "kappa")
        out.row(n, err["rel_mse"], sol.kappa)
    out.close()
    _summary(command="solve", problem=cfg.problem, n=n, kappa=sol.kappa,
             wall_time=time.perf_counter() - start, **err)
    return 0


def cmd_train(cfg):
    from .problems import problem_basis, test_points
    from .training import PoissonLossModel, TrainConfig, pack, solution_error, train

    if cfg.problem == 4:
        raise ValueError("training is available for the Poisson problems 1-3")
    spec = _spec(cfg)
    n = cfg.n if cfg.n is not None else (8 if cfg.problem == 3 else 16)
    tc = TrainConfig(
        steps=cfg.steps if cfg.steps is not None else spec.steps,
        lr=cfg.lr if cfg.lr is not None else spec.lr,
        optimizer=cfg.optimizer,
        seed=cfg.seed,
    )
    model = PoissonLossModel.for_problem(spec, n, seed=cfg.seed)
    trace = train(tc, model, pack(problem_basis(spec, n, cfg.seed)))
    out = _Output(cfg.out)
    out.header("step", "loss", "kappa")
    for k, (v, kap) in enumerate(zip(trace.losses, trace.kappas)):
        out.row(k, v, kap)
    out.close()
    test_err = None
    if trace.solution is not None:
        test_err = solution_error(trace.solution, spec, test_points(spec))
    _summary(command="train", problem=cfg.problem, n=n, steps=len(trace),
             initial_loss=trace.initial_loss, final_loss=trace.best_loss,
             test_rel_mse=test_err, reason=trace.reason, wall_time=trace.wall_time)
    return 0


def cmd_whitney(cfg):
    from .problems import problem4, problem4_basis, solve_problem

    spec = problem4()
    n = cfg.n if cfg.n is not None else 8
    start = time.perf_counter()
    out = _Output(cfg.out)
    out.header("mode", "n", "total", "mse_u", "mse_f", "kappa")
    results = {}
    for mode, pair in (("solve", False), ("exact_pair", True)):
        sol, err = solve_problem(spec, basis=problem4_basis(n, cfg.seed, include_pair=pair))
        out.row(mode, n, err["total"], err["mse_u"], err["mse_f"], sol.kappa)
        results[mode] = err
    out.close()
    _summary(command="whitney", n=n, seed=cfg.seed, wall_time=time.perf_counter() - start,
             **{f"{m}_{k}": v for m, e in results.items() for k, v in e.items()})
    return 0


HANDLERS = {
    "selftest": cmd_selftest,
    "convergence": cmd_convergence,
    "solve": cmd_solve,
    "train": cmd_train,
    "whitney": cmd_whitney,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grbf",
        description="Gaussian RBF Galerkin solver.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="key=value file; flags override it")
        p.add_argument("--problem", type=int, choices=(1, 2, 3, 4))
        p.add_argument("--n", type=int)
        p.add_argument("--n-min", type=int)
        p.add_argument("--n-max", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--optimizer", choices=("adam", "lbfgs"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--full-scale", action="store_true", default=None)
        if name == "selftest":
            p.add_argument("--mutate", action="store_true", default=None,
                           help="flip a sign in the moment expansion; the run must fail")
    return parser


def config_from_args(args):
    """Merge flags over an optional config file over the defaults."""
    cfg = RunConfig(command=args.command)
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.parse(fh.read(), base=cfg)
        cfg = replace(cfg, command=args.command)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    return replace(cfg, **flags)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return HANDLERS[cfg.command](cfg)
    except ValueError as exc:
        print(f"grbf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
