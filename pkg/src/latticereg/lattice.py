"""Vector-lattice primitives on uniform 1D grids.

Signals are coordinate vectors together with a grid spacing; all inner
products and norms are quadrature-weighted so that discrete objects
approximate their continuum counterparts independently of resolution.
Dense operators carry the weighting in their adjoints, and operator
brackets store a componentwise lower/upper pair (optionally with the
exact operator in between) whose width measures the model uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BracketingError

NORM_KINDS = ("max", "l1", "l2")


def _as_vector(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"expected a nonempty 1D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal values must be finite")
    return x


@dataclass
class Signal:
    """A grid function: values at the midpoints of a uniform 1D grid.

    Parameters
    ----------
    values : array_like
        Node values, one per grid cell.
    grid_spacing : float
        Cell width, strictly positive.
    """

    values: np.ndarray
    grid_spacing: float

    def __post_init__(self):
        self.values = _as_vector(self.values)
        self.grid_spacing = float(self.grid_spacing)
        if not self.grid_spacing > 0:
            raise ValueError("grid_spacing must be > 0")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def mass(self) -> float:
        return float(self.grid_spacing * self.values.sum())

    def with_values(self, values) -> "Signal":
        return Signal(values, self.grid_spacing)


def midpoint_grid(n: int, length: float = 1.0) -> tuple[np.ndarray, float]:
    """Midpoint nodes and spacing of the uniform n-cell grid on [0, length]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    dx = length / n
    return (np.arange(n) + 0.5) * dx, dx


def inner(x: np.ndarray, y: np.ndarray, dx: float) -> float:
    """Quadrature-weighted inner product dx * sum(x * y)."""
    return float(dx * np.dot(np.asarray(x, float), np.asarray(y, float)))


def norm(x: np.ndarray, dx: float, kind: str = "l2") -> float:
    """Weighted vector norm: 'max' (sup), 'l1' (dx-weighted), 'l2' (dx-weighted)."""
    x = np.asarray(x, dtype=float)
    if kind == "max":
        return float(np.max(np.abs(x)))
    if kind == "l1":
        return float(dx * np.sum(np.abs(x)))
    if kind == "l2":
        return float(np.sqrt(dx) * np.linalg.norm(x))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def dual_norm_kind(kind: str) -> str:
    """The norm dual to `kind` under the dx-weighted pairing."""
    return {"max": "l1", "l1": "max", "l2": "l2"}[kind]


def leq(x: np.ndarray, y: np.ndarray, tol_order: float = 0.0) -> bool:
    """Componentwise partial order: x <= y up to tol_order slack."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape:
        raise ValueError("leq operands must have equal shape")
    return bool(np.all(x <= y + tol_order))


def pos_neg_split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lattice decomposition x = x_plus - x_minus with x_plus * x_minus = 0."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0), np.maximum(-x, 0.0)


def am_unit(n: int) -> np.ndarray:
    """Order unit of the sup-normed lattice: the all-ones vector."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.ones(n)


class DenseOperator:
    """A dense linear map between grid spaces, with quadrature-aware adjoint.

    The adjoint is defined against the dx-weighted inner products, so its
    matrix is the transpose scaled by dx_out/dx_in, and taking the adjoint
    twice returns the original object.

    Parameters
    ----------
    matrix : array_like, shape (m, n)
    dx_in, dx_out : float
        Grid spacings of the domain and codomain.
    """

    def __init__(self, matrix, dx_in: float, dx_out: float):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be 2D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("matrix entries must be finite")
        self.dx_in = float(dx_in)
        self.dx_out = float(dx_out)
        if self.dx_in <= 0 or self.dx_out <= 0:
            raise ValueError("grid spacings must be > 0")
        self._adjoint: "DenseOperator | None" = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    def __matmul__(self, u):
        return self.apply(u)

    @property
    def adjoint(self) -> "DenseOperator":
        if self._adjoint is None:
            adj = DenseOperator(
                (self.dx_out / self.dx_in) * self.matrix.T, self.dx_out, self.dx_in
            )
            adj._adjoint = self
            self._adjoint = adj
        return self._adjoint

    def norm(self, kind: str = "l2") -> float:
        """Operator norm induced by the weighted vector norms of `kind`."""
        m = self.matrix
        if kind == "max":
            return float(np.max(np.sum(np.abs(m), axis=1))) if m.size else 0.0
        if kind == "l1":
            return float(
                (self.dx_out / self.dx_in) * np.max(np.sum(np.abs(m), axis=0))
            )
        if kind == "l2":
            s = np.linalg.svd(m, compute_uv=False)
            return float(np.sqrt(self.dx_out / self.dx_in) * s[0])
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")

    def __repr__(self):
        return (
            f"DenseOperator(shape={self.shape}, dx_in={self.dx_in}, "
            f"dx_out={self.dx_out})"
        )


def stack_operators(ops: list[DenseOperator]) -> DenseOperator:
    """Vertically stack operators sharing a domain (used for B and E)."""
    if not ops:
        raise ValueError("need at least one operator")
    dx_in = ops[0].dx_in
    dx_out = ops[0].dx_out
    ncols = ops[0].shape[1]
    for op in ops[1:]:
        if op.dx_in != dx_in or op.shape[1] != ncols or op.dx_out != dx_out:
            raise ValueError("stacked operators must share domain and codomain grid")
    return DenseOperator(np.vstack([op.matrix for op in ops]), dx_in, dx_out)


@dataclass
class BracketCheckReport:
    ok: bool
    violation: float
    samples: int


@dataclass
class BracketPair:
    """An order interval of operators: lower <= truth <= upper componentwise.

    The order is the one induced by nonnegative inputs, which for matrices
    is entrywise comparison. `truth` may be omitted when only the interval
    endpoints are known.
    """

    lower: DenseOperator
    upper: DenseOperator
    truth: DenseOperator | None = None
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise BracketingError("lower and upper must have equal shape")
        if (self.lower.dx_in, self.lower.dx_out) != (self.upper.dx_in, self.upper.dx_out):
            raise BracketingError("lower and upper must share grids")
        if not np.all(self.lower.matrix <= self.upper.matrix + self.tol):
            worst = float(np.max(self.lower.matrix - self.upper.matrix))
            raise BracketingError(
                f"bracket is not ordered: max(lower - upper) = {worst:g}"
            )
        if self.truth is not None:
            if self.truth.shape != self.lower.shape:
                raise BracketingError("truth must match the bracket shape")
            lo = float(np.max(self.lower.matrix - self.truth.matrix))
            hi = float(np.max(self.truth.matrix - self.upper.matrix))
            if max(lo, hi) > self.tol:
                raise BracketingError(
                    f"truth escapes the bracket by {max(lo, hi):g}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.lower.shape

    @property
    def dx_in(self) -> float:
        return self.lower.dx_in

    @property
    def dx_out(self) -> float:
        return self.lower.dx_out

    def width(self, kind: str = "max") -> float:
        """Operator-norm distance between the endpoints (the uncertainty eta)."""
        gap = DenseOperator(
            self.upper.matrix - self.lower.matrix, self.dx_in, self.dx_out
        )
        return gap.norm(kind)

    @property
    def degenerate(self) -> bool:
        return bool(np.array_equal(self.lower.matrix, self.upper.matrix))


def degenerate_bracket(op: DenseOperator) -> BracketPair:
    """Zero-width bracket around a single known operator."""
    return BracketPair(lower=op, upper=op, truth=op)


def check_bracketing(
    pair: BracketPair, samples: int = 100, seed: int = 0
) -> BracketCheckReport:
    """Sample nonnegative inputs and verify lower*u <= truth*u <= upper*u.

    Raises
    ------
    BracketingError
        If the pair has no truth operator to compare against.
    """
    if pair.truth is None:
        raise BracketingError("check_bracketing needs a truth operator")
    rng = np.random.default_rng(seed)
    n = pair.shape[1]
    worst = 0.0
    for _ in range(samples):
        u = rng.uniform(0.0, 1.0, size=n)
        mid = pair.truth.apply(u)
        worst = max(
            worst,
            float(np.max(pair.lower.apply(u) - mid, initial=0.0)),
            float(np.max(mid - pair.upper.apply(u), initial=0.0)),
        )
    return BracketCheckReport(ok=worst <= 1e-12, violation=worst, samples=samples)
