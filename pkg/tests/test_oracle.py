"""Brute-force oracles: transport sweep, scalar prox search, conic reference."""

import numpy as np
import pytest

from latticereg.errors import OracleError
from latticereg.fidelities import (
    BallIndicator,
    PowerNormFidelity,
    Wasserstein1D,
    make_fidelity,
)
from latticereg.oracle import (
    brute_prox,
    brute_solve,
    brute_w1,
    default_suite,
    load_suite,
    multistart_descent,
    write_default_suite,
)
from latticereg.solver import SolverOptions, solve

OMEGA = 0.5671432904097838


class TestBruteW1:
    def test_unit_masses_one_apart(self):
        assert brute_w1([1.0, 0.0], [0.0, 1.0], dx=1.0) == 1.0

    def test_identical_measures_cost_nothing(self):
        rho = np.array([0.25, 0.5, 0.25])
        assert brute_w1(rho, rho, dx=1.0) == 0.0

    def test_split_shift(self):
        cost = brute_w1([0.5, 0.5, 0.0], [0.0, 0.5, 0.5], dx=1.0)
        assert cost == pytest.approx(1.0)

    def test_custom_positions(self):
        assert brute_w1([1.0, 0.0], [0.0, 1.0], positions=[0.0, 3.0]) == 3.0

    def test_mass_mismatch(self):
        with pytest.raises(ValueError):
            brute_w1([1.0, 0.0], [0.0, 0.5])

    def test_negative_mass(self):
        with pytest.raises(ValueError):
            brute_w1([1.0, -0.5], [0.25, 0.25])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            brute_w1([1.0], [0.5, 0.5])

    def test_matches_cdf_fidelity_exactly_on_dyadic_masses(self):
        # both paths are exact in binary arithmetic for dyadic data, so
        # the comparison is ==, not approx
        fid = Wasserstein1D()
        dx = 0.25
        cases = [
            ([4.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 4.0]),
            ([2.0, 2.0, 0.0, 0.0], [0.0, 0.0, 2.0, 2.0]),
            ([1.0, 2.0, 1.0, 0.0], [0.0, 1.0, 2.0, 1.0]),
            ([0.5, 0.5, 1.5, 1.5], [1.5, 1.5, 0.5, 0.5]),
        ]
        for rho, nu in cases:
            rho, nu = np.array(rho), np.array(nu)
            assert fid.eval_relaxed(rho, nu, dx) == brute_w1(rho, nu, dx)


class TestBruteProx:
    def test_squared_norm_closed_form(self):
        fid = PowerNormFidelity(2.0)
        w, f, tau = 0.8, -0.4, 2.0
        assert brute_prox(fid, w, f, tau) == pytest.approx(
            (w + tau * f) / (1.0 + tau), abs=1e-8
        )

    def test_ball_clamps(self):
        fid = BallIndicator(0.25)
        assert brute_prox(fid, 2.0, 1.0, 1.0) == pytest.approx(1.25, abs=1e-8)
        assert brute_prox(fid, 0.9, 1.0, 1.0) == pytest.approx(0.9, abs=1e-8)

    def test_kl_scalar(self):
        assert brute_prox(make_fidelity("kl"), 0.0, 1.0, 1.0) == pytest.approx(
            OMEGA, abs=1e-6
        )

    def test_agrees_with_fast_prox(self):
        rng = np.random.default_rng(2)
        for fid in (make_fidelity("chi2"), PowerNormFidelity(1.0)):
            for _ in range(5):
                w = rng.normal(0.0, 2.0)
                f = rng.uniform(0.2, 1.5)
                tau = rng.uniform(0.1, 2.0)
                fast = fid.prox(np.array([w]), np.array([f]), 1.0, tau)[0]
                assert brute_prox(fid, w, f, tau) == pytest.approx(fast, abs=1e-7)


class TestBruteSolve:
    def test_size_limit(self):
        suite = dict(default_suite())
        big = suite["kl_sq2"]
        with pytest.raises(OracleError):
            brute_solve(big, size_limit=5)

    def test_scalar_instance_value(self):
        problem = dict(default_suite())["kkt_1d"]
        res = brute_solve(problem)
        u = 1.1 / 2.21  # stationary point of 0.5 (1.1 u - 1)^2 + 0.5 u^2
        # the bracket has width 0.1 so the conic optimum sits at the
        # favourable endpoint; just check against the fast solver
        report = solve(problem, SolverOptions(max_iters=400_000, tol_gap=1e-10))
        assert res.value == pytest.approx(report.primal_value, rel=1e-6)
        assert res.status == "optimal"
        assert abs(res.u[0] - u) < 0.1  # same basin as the degenerate optimum

    def test_multistart_agrees_loosely(self):
        problem = dict(default_suite())["kkt_1d"]
        res = brute_solve(problem)
        best = multistart_descent(problem, starts=2, iters=400, seed=1)
        assert best == pytest.approx(res.value, rel=5e-2)


class TestDefaultSuite:
    def test_coverage_and_size(self):
        suite = default_suite()
        names = [name for name, _ in suite]
        assert len(suite) >= 12
        assert len(set(names)) == len(names)
        fids = " ".join(p.fidelity.name for _, p in suite)
        for kind in ("kl", "chi2", "hellinger2", "reverse_kl", "sq_norm(2)",
                     "sq_norm(1,l1)", "tv", "w1", "ball", "sum(", "infconv("):
            assert kind in fids, kind
        for _, p in suite:
            assert p.n + p.m <= 6

    def test_write_and_load_roundtrip(self, tmp_path):
        paths = write_default_suite(tmp_path)
        assert len(paths) == len(default_suite())
        loaded = dict(load_suite(tmp_path))
        for name, problem in default_suite():
            other = loaded[name]
            np.testing.assert_allclose(
                other.bracket.lower.matrix, problem.bracket.lower.matrix
            )
            np.testing.assert_allclose(other.data, problem.data)
            assert other.fidelity.name == problem.fidelity.name
            assert other.regulariser.name == problem.regulariser.name
            assert other.alpha == problem.alpha

    def test_load_empty_directory_raises(self, tmp_path):
        with pytest.raises(OracleError):
            load_suite(tmp_path)
