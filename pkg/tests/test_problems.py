from math import exp, pi

import numpy as np
import pytest
from scipy.integrate import quad

from grbf.forms import Basis, project_forcing
from grbf.gaussian import Gaussian
from grbf.problems import (
    PROBLEMS,
    fd_residual,
    get_problem,
    mixed_errors,
    problem1,
    problem2,
    problem3,
    problem3_forcing,
    problem4,
    problem4_basis,
    problem_basis,
    sample_data,
    solve_problem,
    test_points as make_test_points,
)


class TestProblem1:
    def test_exact_values(self):
        u = problem1().exact
        assert u(np.array([0.0]))[0] == 0.0
        assert u(np.array([1.0]))[0] == pytest.approx(0.6065306597126334, rel=1e-15)

    def test_forcing_constant_term(self):
        assert problem1().forcing(np.array([[0.0]]))[0] == pytest.approx(2.0, rel=1e-15)

    def test_forcing_formula(self):
        x = np.linspace(-4, 4, 33)
        ref = np.exp(-0.5 * x**2) * (x**4 - 2 * x**3 - 5 * x**2 + 6 * x + 2)
        assert np.allclose(problem1().forcing(x[:, None]), ref, rtol=1e-13, atol=1e-15)

    def test_sampling_setup(self):
        spec = problem1()
        assert spec.n_data == 4096
        assert spec.sample_lo[0] == -6.0 and spec.sample_hi[0] == 6.0


class TestProblem2:
    def test_boundary_data(self):
        spec = problem2()
        assert spec.exact(np.array([-1.0, 1.0])) == pytest.approx([0.0, 0.0], abs=1e-14)
        assert spec.boundary_data == 0.0

    def test_forcing_value(self):
        assert problem2().forcing(np.array([[1 / 6]]))[0] == pytest.approx(9 * pi**2, rel=1e-14)

    def test_projection_quadrature(self):
        spec = problem2()
        g = Gaussian([0.37], [[0.01]])
        F = project_forcing(Basis([g], domain=spec.domain), spec.forcing)[0]
        ref = quad(lambda x: spec.forcing(np.array([[x]]))[0] * g.density(np.array([[x]]))[0],
                   -1.5, 2.2, limit=400, epsabs=1e-13, epsrel=1e-13)[0]
        assert F == pytest.approx(ref, rel=1e-10)

    def test_gamma_rule(self):
        assert problem2().gamma(32) == 512.0
        assert problem1().gamma(32) == 0.0

    def test_initial_basis_convention(self):
        b = problem_basis(problem2(), 16)
        assert b.means[0, 0] == -2.0 and b.means[-1, 0] == 2.0
        assert np.allclose(b.covs[:, 0, 0], (4.0 / 16) ** 2)
        assert b.domain.bounded


class TestProblem3:
    def test_exact_values(self):
        u = problem3().exact
        e1 = np.zeros(8)
        e1[0] = 1.0
        assert u(np.zeros(8))[0] == 0.0
        assert u(e1)[0] == pytest.approx(exp(-0.5), rel=1e-15)

    def test_forcing_formula(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20, 8))
        s, r = x.sum(axis=1), np.sum(x * x, axis=1)
        d = 8
        ref = np.exp(-r / 2) * (2 * d + (4 + 2 * d) * s - (4 + d) * r - 2 * s * r + r * r)
        assert np.allclose(problem3().forcing(x), ref, rtol=1e-12, atol=1e-14)

    def test_other_dimensions(self):
        f = problem3_forcing(2)
        x = np.array([[0.3, -0.7]])
        s, r = x.sum(), np.sum(x * x)
        ref = np.exp(-r / 2) * (4 + 8 * s - 6 * r - 2 * s * r + r * r)
        assert f(x)[0] == pytest.approx(ref, rel=1e-13)

    def test_scale_settings(self):
        desk, full = problem3(), problem3(full_scale=True)
        assert (desk.n_data, desk.steps, desk.lr) == (4096, 2000, 0.05)
        assert (full.n_data, full.steps) == (65536, 10000)


class TestProblem4:
    def test_forcing_values(self):
        f = problem4().forcing
        assert f(np.full((1, 3), 0.5))[0] == pytest.approx(0.0, abs=1e-15)
        x = np.random.default_rng(1).normal(size=(10, 3))
        ref = np.exp(-np.sum((x - 0.5) ** 2, axis=1)) * (3 - 2 * x.sum(axis=1))
        assert np.allclose(f(x), ref, rtol=1e-13, atol=1e-16)

    def test_flux_value(self):
        spec = problem4()
        assert np.allclose(spec.exact_flux(np.full((1, 3), 0.5)), 1.0, rtol=1e-15)

    def test_flux_decomposition(self):
        spec = problem4()
        x = np.random.default_rng(2).normal(size=(50, 3))
        assert np.allclose(spec.flux_forcing(x), spec.exact_flux(x), rtol=1e-13, atol=1e-17)

    def test_basis(self):
        a, b = problem4_basis(8, seed=3), problem4_basis(8, seed=3)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.covs, np.broadcast_to(np.eye(3), (8, 3, 3)))
        p = problem4_basis(5, seed=3, include_pair=True)
        assert np.array_equal(p.means[:2], [[0, 0, 0], [1, 1, 1]])
        with pytest.raises(ValueError):
            problem4_basis(1)

    def test_mixed_errors_sum(self):
        spec = problem4()
        sol, err = solve_problem(spec, basis=problem4_basis(4, seed=0))
        assert err["total"] == pytest.approx(err["mse_u"] + err["mse_f"], rel=1e-15)
        again = mixed_errors(sol, spec)
        assert again == err


class TestResiduals:
    @pytest.mark.parametrize("pid", [1, 2, 3, 4])
    def test_strong_form(self, pid):
        assert fd_residual(get_problem(pid), count=100, h=1e-3) <= 1e-6

    def test_residual_detects_wrong_forcing(self):
        spec = problem1()
        from dataclasses import replace

        bad = replace(spec, forcing=lambda x: 1.01 * spec.forcing(x))
        assert fd_residual(bad) > 1e-3


class TestSampling:
    def test_deterministic(self):
        spec = problem1()
        a, va = sample_data(spec, 100, seed=4)
        b, vb = sample_data(spec, 100, seed=4)
        assert np.array_equal(a, b) and np.array_equal(va, vb)

    def test_values_match_exact(self):
        spec = problem3()
        pts, vals = sample_data(spec, 50, seed=1)
        assert np.array_equal(vals, spec.exact(pts))
        assert np.all(pts >= -2.0) and np.all(pts <= 2.0)

    def test_mean_near_center(self):
        spec = problem1()
        pts, _ = sample_data(spec, 4096, seed=0)
        se = 12.0 / np.sqrt(12.0) / np.sqrt(4096)
        assert abs(pts.mean()) <= 3 * se

    def test_count(self):
        with pytest.raises(ValueError):
            sample_data(problem1(), 0)

    def test_test_grid(self):
        pts = make_test_points(problem1())
        assert pts.shape == (4096, 1) and pts[0, 0] == -6.0 and pts[-1, 0] == 6.0

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            get_problem(7)
        assert sorted(PROBLEMS) == [1, 2, 3, 4]

    def test_problem_basis_size(self):
        with pytest.raises(ValueError):
            problem_basis(problem1(), 0)
