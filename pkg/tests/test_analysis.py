"""Bregman distances, source fixtures, rate fitting, rate-bound pieces."""

import numpy as np
import pytest

from latticereg.analysis import (
    bregman_one_sided,
    bregman_symmetric,
    fit_rate_slope,
    load_source_fixture,
    make_source_fixture,
    rate_bound_rhs,
    rate_constant,
    save_source_fixture,
)
from latticereg.errors import FixtureError
from latticereg.fidelities import PowerNormFidelity, make_fidelity
from latticereg.lattice import BracketPair, DenseOperator, degenerate_bracket, norm
from latticereg.operators import bracket_from_kernel_bounds, gaussian_kernel
from latticereg.regularisers import make_regulariser


def gaussian_bracket(n=8, eps=0.0, sigma=0.4):
    k = gaussian_kernel(sigma)
    return bracket_from_kernel_bounds(
        lambda x, xi: (1.0 - eps) * k(x, xi),
        lambda x, xi: (1.0 + eps) * k(x, xi),
        n,
        k_truth=k,
    )


class TestBregmanOneSided:
    def test_l1_example(self):
        reg = make_regulariser("l1")
        d = bregman_one_sided(
            reg, np.array([-1.0]), np.array([1.0]), np.array([1.0]), 1.0
        )
        assert d == pytest.approx(2.0)

    def test_zero_at_base_point(self):
        reg = make_regulariser("sq_l2")
        w = np.array([0.3, -0.2])
        assert bregman_one_sided(reg, w, w, w, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_sq_l2_is_half_squared_distance(self):
        reg = make_regulariser("sq_l2")
        rng = np.random.default_rng(4)
        u, w = rng.normal(size=5), rng.normal(size=5)
        dx = 0.2
        d = bregman_one_sided(reg, u, w, w, dx)
        assert d == pytest.approx(0.5 * norm(u - w, dx) ** 2, rel=1e-12)

    def test_rejects_non_subgradient(self):
        reg = make_regulariser("sq_l2")
        w = np.array([1.0, 1.0])
        with pytest.raises(ValueError):
            bregman_one_sided(reg, w + 1.0, w, w + 5.0, 1.0)

    def test_check_tol_none_skips_membership(self):
        reg = make_regulariser("sq_l2")
        w = np.array([1.0, 1.0])
        d = bregman_one_sided(reg, w + 1.0, w, w + 5.0, 1.0, check_tol=None)
        assert np.isfinite(d)

    def test_infinite_j_rejected(self):
        reg = make_regulariser("l1", nonneg=True)
        with pytest.raises(ValueError):
            bregman_one_sided(
                reg, np.array([-1.0]), np.array([1.0]), np.array([1.0]), 1.0
            )


class TestBregmanSymmetric:
    def test_equals_sum_of_one_sided(self):
        reg = make_regulariser("sq_l2")
        rng = np.random.default_rng(9)
        u, w = rng.normal(size=4), rng.normal(size=4)
        dx = 0.25
        sym = bregman_symmetric(reg, u, w, u, w, dx)
        one = bregman_one_sided(reg, u, w, w, dx)
        other = bregman_one_sided(reg, w, u, u, dx)
        assert sym == pytest.approx(one + other, rel=1e-12)

    def test_nonnegative_for_valid_subgradients(self):
        reg = make_regulariser("l1")
        u, w = np.array([2.0, 0.0]), np.array([-1.0, 0.5])
        q = np.sign(u) + np.array([0.0, 0.3])
        p = np.sign(w)
        assert bregman_symmetric(reg, u, w, q, p, 1.0) >= 0.0


class TestSourceFixture:
    def test_sq_l2_invariants(self):
        pair = gaussian_bracket()
        reg = make_regulariser("sq_l2", nonneg=True)
        omega = np.exp(-0.5 * ((np.linspace(0, 1, 8) - 0.5) / 0.15) ** 2)
        fx = make_source_fixture(pair, reg, omega=omega)
        a = pair.truth
        np.testing.assert_allclose(fx.p_dagger.values, a.adjoint.apply(omega))
        np.testing.assert_allclose(fx.u_dagger.values, fx.p_dagger.values)
        assert np.max(np.abs(a.apply(fx.u_dagger.values) - fx.f_bar.values)) <= 1e-12
        mu1, mu2 = fx.mu_dagger
        assert np.all(mu1 >= 0) and np.all(mu2 >= 0)
        np.testing.assert_allclose(fx.e_star_mu, -omega)

    def test_mixed_sign_omega_splits(self):
        # the kernel smooths enough that a small dip keeps A* omega >= 0
        pair = gaussian_bracket()
        reg = make_regulariser("sq_l2", nonneg=False)
        omega = np.ones(8)
        omega[3] = -0.1
        fx = make_source_fixture(pair, reg, omega=omega)
        mu1, mu2 = fx.mu_dagger
        np.testing.assert_allclose(mu2 - mu1, omega)  # plus part minus minus part
        assert np.all(mu1 * mu2 == 0.0)  # disjoint supports

    def test_negative_adjoint_image_rejected(self):
        pair = gaussian_bracket()
        reg = make_regulariser("sq_l2", nonneg=True)
        with pytest.raises(FixtureError):
            make_source_fixture(pair, reg, omega=-np.ones(8))

    def test_missing_truth_rejected(self):
        k = gaussian_kernel(0.4)
        pair = bracket_from_kernel_bounds(
            lambda x, xi: 0.9 * k(x, xi), lambda x, xi: 1.1 * k(x, xi), 4
        )
        with pytest.raises(FixtureError):
            make_source_fixture(pair, make_regulariser("sq_l2"), omega=np.ones(4))

    def test_sq_l2_needs_omega(self):
        with pytest.raises(FixtureError):
            make_source_fixture(gaussian_bracket(), make_regulariser("sq_l2"))

    def test_l1_fixture_on_identity(self):
        pair = degenerate_bracket(DenseOperator(np.eye(4), 0.25, 0.25))
        reg = make_regulariser("l1", nonneg=True)
        u = np.array([0.0, 0.5, 0.0, 0.0])
        fx = make_source_fixture(pair, reg, u_dagger=u)
        np.testing.assert_allclose(fx.u_dagger.values, u)
        assert fx.p_dagger.values[1] == pytest.approx(1.0)
        np.testing.assert_allclose(fx.f_bar.values, u)

    def test_l1_fixture_rejects_negative_truth(self):
        pair = degenerate_bracket(DenseOperator(np.eye(3), 1.0, 1.0))
        with pytest.raises(FixtureError):
            make_source_fixture(
                pair, make_regulariser("l1"), u_dagger=np.array([0.0, -0.5, 0.0])
            )

    def test_l1_source_condition_infeasible(self):
        # column 1 doubles column 0, so p = A* omega cannot satisfy
        # p_0 = 1 without p_1 = 2 breaking the off-support bound
        mat = np.array([[1.0, 2.0], [1.0, 2.0]])
        pair = degenerate_bracket(DenseOperator(mat, 0.5, 0.5))
        with pytest.raises(FixtureError, match="source condition infeasible"):
            make_source_fixture(
                pair,
                make_regulariser("l1", nonneg=True),
                u_dagger=np.array([1.0, 0.0]),
            )

    def test_no_recipe_for_tv(self):
        with pytest.raises(FixtureError):
            make_source_fixture(
                gaussian_bracket(), make_regulariser("tv"), omega=np.ones(8)
            )

    def test_zero_omega_gives_trivial_fixture(self):
        fx = make_source_fixture(
            gaussian_bracket(), make_regulariser("sq_l2"), omega=np.zeros(8)
        )
        assert np.all(fx.u_dagger.values == 0.0)
        assert np.all(fx.f_bar.values == 0.0)


class TestFixturePersistence:
    def test_roundtrip_exact(self, tmp_path):
        pair = gaussian_bracket()
        omega = np.exp(-np.linspace(0, 2, 8))
        fx = make_source_fixture(pair, make_regulariser("sq_l2"), omega=omega)
        path = tmp_path / "fx.fixture"
        save_source_fixture(path, fx)
        back = load_source_fixture(path)
        np.testing.assert_array_equal(back.u_dagger.values, fx.u_dagger.values)
        np.testing.assert_array_equal(back.f_bar.values, fx.f_bar.values)
        np.testing.assert_array_equal(back.omega.values, fx.omega.values)
        np.testing.assert_array_equal(back.mu_dagger[0], fx.mu_dagger[0])
        assert back.u_dagger.grid_spacing == fx.u_dagger.grid_spacing

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.fixture"
        path.write_text("format = something-else\n")
        with pytest.raises(FixtureError):
            load_source_fixture(path)

    def test_rejects_unknown_version(self, tmp_path):
        path = tmp_path / "v2.fixture"
        path.write_text("format = latticereg-fixture\nversion = 2\n")
        with pytest.raises(FixtureError):
            load_source_fixture(path)


class TestFitRateSlope:
    def test_linear_relation(self):
        xs = [1.0, 0.5, 0.25, 0.125, 0.0625]
        fit = fit_rate_slope([(x, 3.0 * x) for x in xs])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.used == 5 and fit.dropped == 0

    def test_square_root_relation(self):
        xs = [1.0, 0.25, 0.0625, 0.015625]
        fit = fit_rate_slope([(x, np.sqrt(x)) for x in xs])
        assert fit.slope == pytest.approx(0.5, abs=1e-12)

    def test_drops_nonpositive_values(self):
        pts = [(1.0, 1.0), (0.5, 0.5), (0.25, 0.25), (0.125, 0.125), (0.0625, 0.0)]
        fit = fit_rate_slope(pts)
        assert fit.used == 4 and fit.dropped == 1
        assert "1 dropped" in fit.note

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_rate_slope([(1.0, 1.0), (0.5, 0.5), (0.25, 0.0), (0.125, 0.0)])

    def test_requires_decreasing_positive_x(self):
        with pytest.raises(ValueError):
            fit_rate_slope([(0.5, 1.0), (1.0, 1.0), (0.25, 1.0), (0.125, 1.0)])
        with pytest.raises(ValueError):
            fit_rate_slope([(1.0, 1.0), (0.5, 1.0), (0.0, 1.0), (-0.5, 1.0)])


class TestRateBound:
    def test_constant_is_product(self):
        fx = make_source_fixture(
            gaussian_bracket(), make_regulariser("sq_l2"), omega=np.ones(8)
        )
        dx = fx.f_bar.grid_spacing
        assert rate_constant(fx, 2.5, dx) == pytest.approx(fx.mu_l1_norm(dx) * 2.5)

    def test_rhs_squared_norm_closed_form(self):
        fx = make_source_fixture(
            gaussian_bracket(), make_regulariser("sq_l2"), omega=np.ones(8)
        )
        dx = fx.f_bar.grid_spacing
        fid = PowerNormFidelity(2.0)
        alpha, delta, eta, c = 0.2, 1e-3, 0.01, 3.0
        # H*(q | f_n) - <q, f_bar> with f_n = f_bar collapses to 0.5 ||q||^2
        q = alpha * fx.e_star_mu
        expect = delta / alpha + 0.5 * norm(q, dx) ** 2 / alpha + c * eta
        got = rate_bound_rhs(fid, fx, fx.f_bar.values, alpha, delta, eta, c)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_rhs_kl_form(self):
        fx = make_source_fixture(
            gaussian_bracket(), make_regulariser("sq_l2"), omega=np.ones(8)
        )
        dx = fx.f_bar.grid_spacing
        fid = make_fidelity("kl")
        alpha = 0.1
        q = alpha * fx.e_star_mu
        f = fx.f_bar.values
        expect = (
            1e-4 / alpha
            + (dx * float(np.dot(f, np.expm1(q))) - dx * float(np.dot(q, f))) / alpha
        )
        got = rate_bound_rhs(fid, fx, f, alpha, 1e-4, 0.0, 1.0)
        assert got == pytest.approx(expect, rel=1e-12)
