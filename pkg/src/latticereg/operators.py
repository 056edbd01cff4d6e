"""Discretized integral operators and operator-interval constructions.

All constructions use the midpoint rule on uniform grids: the matrix of an
integral operator has entries k(x_i, xi_j) * dxi. Brackets arise from three
sources: pointwise bounds on the kernel, per-cell Riemann-type min/max
envelopes of a known kernel, and interval-valued diffusion coefficients in a
1D source-identification problem.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import BracketingError
from .lattice import BracketPair, DenseOperator, midpoint_grid

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def gaussian_kernel(sigma: float) -> Kernel:
    """Normalised Gaussian convolution kernel of width sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    c = 1.0 / (sigma * np.sqrt(2.0 * np.pi))

    def k(x, xi):
        return c * np.exp(-((x - xi) ** 2) / (2.0 * sigma**2))

    return k


def constant_kernel(value: float = 1.0) -> Kernel:
    def k(x, xi):
        return np.full(np.broadcast(x, xi).shape, float(value))

    return k


def exponential_kernel(rate: float = 1.0) -> Kernel:
    """k(x, xi) = exp(-rate * x * xi); monotone in xi for fixed x."""

    def k(x, xi):
        return np.exp(-rate * x * xi)

    return k


def _kernel_matrix(kernel: Kernel, x: np.ndarray, xi: np.ndarray, dxi: float):
    vals = np.asarray(kernel(x[:, None], xi[None, :]), dtype=float)
    if vals.shape != (x.size, xi.size):
        raise ValueError("kernel must broadcast to an (m, n) array")
    return vals * dxi


def integral_operator(
    kernel: Kernel, n: int, m: int | None = None, length: float = 1.0
) -> DenseOperator:
    """Midpoint-rule discretization of u -> integral k(x, xi) u(xi) dxi.

    Parameters
    ----------
    kernel : callable
        Vectorized kernel k(x, xi).
    n : int
        Number of input grid cells.
    m : int, optional
        Number of output grid cells (defaults to n).
    length : float
        Domain length for both grids.
    """
    m = n if m is None else m
    xi, dxi = midpoint_grid(n, length)
    x, dx = midpoint_grid(m, length)
    return DenseOperator(_kernel_matrix(kernel, x, xi, dxi), dx_in=dxi, dx_out=dx)


def bracket_from_kernel_bounds(
    k_lower: Kernel,
    k_upper: Kernel,
    n: int,
    m: int | None = None,
    length: float = 1.0,
    k_truth: Kernel | None = None,
) -> BracketPair:
    """Bracket built from pointwise kernel bounds k_lower <= k_upper.

    Raises
    ------
    BracketingError
        If the bound order fails at any quadrature node pair; the message
        reports the worst offending node.
    """
    m = n if m is None else m
    xi, dxi = midpoint_grid(n, length)
    x, _ = midpoint_grid(m, length)
    lo = np.asarray(k_lower(x[:, None], xi[None, :]), dtype=float)
    hi = np.asarray(k_upper(x[:, None], xi[None, :]), dtype=float)
    gap = lo - hi
    if np.max(gap) > 0.0:
        i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
        raise BracketingError(
            "kernel bounds are not ordered: k_lower - k_upper = "
            f"{gap[i, j]:g} at (x, xi) = ({x[i]:g}, {xi[j]:g})"
        )
    lower = integral_operator(k_lower, n, m, length)
    upper = integral_operator(k_upper, n, m, length)
    truth = integral_operator(k_truth, n, m, length) if k_truth is not None else None
    return BracketPair(lower=lower, upper=upper, truth=truth)


def bracket_from_riemann(
    kernel: Kernel, n: int, coarse_factor: int, length: float = 1.0
) -> BracketPair:
    """Bracket a known kernel by per-cell min/max over coarse cells.

    The fine grid has n cells grouped into n // coarse_factor coarse cells;
    on each coarse cell the lower (upper) operator replaces k(x_i, .) by its
    minimum (maximum) over the cell's fine nodes, replicated per fine column.
    The resulting pair brackets the midpoint operator for every nonnegative
    input. coarse_factor = 1 gives the degenerate zero-width bracket.
    """
    if coarse_factor < 1:
        raise BracketingError("coarse_factor must be >= 1")
    if n % coarse_factor != 0:
        raise BracketingError(
            f"n = {n} is not divisible by coarse_factor = {coarse_factor}"
        )
    xi, dxi = midpoint_grid(n, length)
    x, dx = midpoint_grid(n, length)
    vals = np.asarray(kernel(x[:, None], xi[None, :]), dtype=float)
    cells = vals.reshape(n, n // coarse_factor, coarse_factor)
    lo = np.repeat(cells.min(axis=2), coarse_factor, axis=1) * dxi
    hi = np.repeat(cells.max(axis=2), coarse_factor, axis=1) * dxi
    return BracketPair(
        lower=DenseOperator(lo, dxi, dx),
        upper=DenseOperator(hi, dxi, dx),
        truth=DenseOperator(vals * dxi, dxi, dx),
    )


def _coefficient_values(a, x: np.ndarray) -> np.ndarray:
    vals = np.asarray(a(x), dtype=float) if callable(a) else np.asarray(a, dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape).astype(float)
    return vals


def source_identification_bracket(
    a_lower, a_upper, n: int, length: float = 1.0
) -> BracketPair:
    """Bracket for recovering the source of a 1D stationary diffusion.

    The forward map sends a source u to x -> -int_0^x (1/a(y)) int_0^y u dz dy,
    discretized with cumulative midpoint sums. Because the map is antitone in
    the coefficient a and nonpositive on nonnegative sources, the lower
    operator uses a_lower and the upper operator a_upper; the truth uses the
    midpoint coefficient (a_lower + a_upper) / 2.

    Raises
    ------
    BracketingError
        If a_lower is not strictly positive at every node.
    """
    x, dx = midpoint_grid(n, length)
    a_lo = _coefficient_values(a_lower, x)
    a_hi = _coefficient_values(a_upper, x)
    if np.min(a_lo) <= 0.0:
        i = int(np.argmin(a_lo))
        raise BracketingError(
            f"a_lower must be strictly positive; a_lower({x[i]:g}) = {a_lo[i]:g}"
        )
    if np.max(a_lo - a_hi) > 0.0:
        raise BracketingError("coefficient interval is empty: a_lower > a_upper")

    cum = np.tril(np.ones((n, n)))

    def build(a_vals: np.ndarray) -> DenseOperator:
        # A = -dx^2 * T diag(1/a) T : u -> -cumsum(cumsum(u) dx / a) dx
        mat = -(dx**2) * (cum @ np.diag(1.0 / a_vals) @ cum)
        return DenseOperator(mat, dx_in=dx, dx_out=dx)

    return BracketPair(
        lower=build(a_lo), upper=build(a_hi), truth=build(0.5 * (a_lo + a_hi))
    )
