"""Kernel discretisation and the three bracket constructions."""

import numpy as np
import pytest

from latticereg.errors import BracketingError, ConfigError
from latticereg.lattice import check_bracketing, leq
from latticereg.operators import (
    bracket_from_kernel_bounds,
    bracket_from_riemann,
    constant_kernel,
    exponential_kernel,
    gaussian_kernel,
    integral_operator,
    source_identification_bracket,
)


def test_integral_operator_constant_kernel_integrates():
    op = integral_operator(constant_kernel(2.0), 8, length=1.0)
    u = np.ones(8)
    # integral of 2 * u over [0,1] is 2 at every observation point
    np.testing.assert_allclose(op.apply(u), 2.0, rtol=1e-12)


def test_integral_operator_rows_scale_with_cell_width():
    op4 = integral_operator(gaussian_kernel(0.2), 4)
    op8 = integral_operator(gaussian_kernel(0.2), 8)
    # mass of a normalised kernel is ~1 regardless of resolution
    assert op4.matrix.sum(axis=1)[2] == pytest.approx(1.0, abs=0.05)
    assert op8.matrix.sum(axis=1)[4] == pytest.approx(1.0, abs=0.05)


def test_gaussian_kernel_peaks_on_diagonal():
    k = gaussian_kernel(0.1)
    assert k(0.5, 0.5) > k(0.5, 0.6) > k(0.5, 0.9)


def test_exponential_kernel_decays_in_product():
    k = exponential_kernel(3.0)
    assert k(1.0, 0.0) > k(1.0, 0.5) > k(1.0, 1.0)
    assert k(1.0, 0.0) == pytest.approx(1.0)


def test_kernel_bounds_bracket_contains_truth():
    k = gaussian_kernel(0.15)
    pair = bracket_from_kernel_bounds(
        lambda x, xi: 0.9 * k(x, xi),
        lambda x, xi: 1.1 * k(x, xi),
        10,
        k_truth=k,
    )
    assert not pair.degenerate
    assert check_bracketing(pair, samples=50).ok
    assert pair.width("max") > 0


def test_kernel_bounds_rejects_crossing_bounds():
    k = gaussian_kernel(0.15)
    with pytest.raises(BracketingError):
        bracket_from_kernel_bounds(
            lambda x, xi: 1.1 * k(x, xi),
            lambda x, xi: 0.9 * k(x, xi),
            6,
            k_truth=k,
        )


def test_riemann_bracket_shrinks_with_refinement():
    k = gaussian_kernel(0.2)
    coarse = bracket_from_riemann(k, 8, coarse_factor=4)
    fine = bracket_from_riemann(k, 8, coarse_factor=2)
    assert leq(coarse.lower.matrix.ravel(), coarse.upper.matrix.ravel())
    assert fine.width("max") <= coarse.width("max") + 1e-12
    assert check_bracketing(coarse, samples=25).ok


def test_riemann_bracket_requires_divisible_refinement():
    with pytest.raises(BracketingError):
        bracket_from_riemann(gaussian_kernel(0.2), 7, coarse_factor=2)


class TestSourceIdentification:
    def test_matrix_is_nonpositive(self):
        pair = source_identification_bracket(1.0, 1.0, 6)
        assert np.all(pair.lower.matrix <= 0)
        assert pair.degenerate

    def test_coefficient_interval_orders_operators(self):
        # larger diffusion coefficient means smaller |solution|, and the
        # matrices are negative, so the lower endpoint uses the lower a
        pair = source_identification_bracket(0.8, 1.2, 6)
        assert leq(pair.lower.matrix.ravel(), pair.upper.matrix.ravel())
        assert not pair.degenerate

    def test_rejects_nonpositive_coefficient(self):
        with pytest.raises(BracketingError):
            source_identification_bracket(0.0, 1.0, 4)

    def test_double_integral_of_unit_source(self):
        # the map is u -> -int_0^x (1/a) int_0^y u, so a = 1, w = 1 gives
        # -x^2/2 at the cell midpoints up to quadrature error
        n = 200
        pair = source_identification_bracket(1.0, 1.0, n)
        w = np.ones(n)
        x = (np.arange(n) + 0.5) / n
        np.testing.assert_allclose(-pair.truth.apply(w), x**2 / 2.0, atol=8e-3)
