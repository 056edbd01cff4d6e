"""Scikit-learn style estimator wrapping the bracket-constrained solver."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator

from .config import parse_fidelity
from .errors import ConfigError
from .lattice import BracketPair
from .regularisers import make_regulariser
from .solver import Problem, SolverOptions, solve


class LatticeRegression(BaseEstimator):
    """Recover u from a noisy datum f under an order-interval forward bracket.

    Parameters mirror the problem record: the bracket carries the operator
    pair, `fidelity` is a descriptor string such as "kl" or
    "sum(kl, sq_norm(2))", and `alpha` weights the regulariser. fit(f)
    solves the bracket-constrained program and exposes u_, v_, mu_.
    """

    def __init__(
        self,
        bracket: BracketPair = None,
        fidelity: str = "sq_norm(2)",
        regulariser: str = "sq_l2",
        nonneg: bool = True,
        alpha: float = 1.0,
        max_iters: int = 200_000,
        tol_gap: float = 1e-7,
        tol_feas: float = 1e-8,
        tol_comp: float = 1e-6,
    ):
        self.bracket = bracket
        self.fidelity = fidelity
        self.regulariser = regulariser
        self.nonneg = nonneg
        self.alpha = alpha
        self.max_iters = max_iters
        self.tol_gap = tol_gap
        self.tol_feas = tol_feas
        self.tol_comp = tol_comp

    def _validate(self, f) -> np.ndarray:
        if self.bracket is None:
            raise ConfigError("bracket is required before fitting")
        if not isinstance(self.bracket, BracketPair):
            raise ConfigError("bracket must be a BracketPair")
        if not isinstance(self.alpha, numbers.Real) or self.alpha <= 0:
            raise ConfigError("alpha must be a positive number")
        f = np.asarray(f, dtype=float)
        if f.ndim == 2 and 1 in f.shape:
            f = f.ravel()
        if f.ndim != 1:
            raise ConfigError("datum must be one dimensional")
        if f.size != self.bracket.shape[0]:
            raise ConfigError(
                f"datum has length {f.size}, bracket expects {self.bracket.shape[0]}"
            )
        if not np.all(np.isfinite(f)):
            raise ConfigError("datum contains non-finite entries")
        return f

    def fit(self, X, y=None):
        """Solve the inverse problem for the datum X (one data vector)."""
        f = self._validate(X)
        problem = Problem(
            bracket=self.bracket,
            fidelity=parse_fidelity(self.fidelity),
            regulariser=make_regulariser(self.regulariser, nonneg=self.nonneg),
            data=f,
            alpha=float(self.alpha),
        )
        options = SolverOptions(
            max_iters=self.max_iters,
            tol_gap=self.tol_gap,
            tol_feas=self.tol_feas,
            tol_comp=self.tol_comp,
        )
        report = solve(problem, options)
        self.u_ = report.u
        self.v_ = report.v
        self.mu_ = report.mu
        self.report_ = report
        self.n_iter_ = report.iterations
        return self

    def transform(self, X=None):
        """Return the recovered source; X is ignored (kept for pipelines)."""
        self._check_fitted()
        return self.u_

    def predict(self, X=None):
        """Forward image of the recovered source at the bracket midpoint."""
        self._check_fitted()
        op = self.bracket.truth
        if op is None:
            mid = 0.5 * (self.bracket.lower.matrix + self.bracket.upper.matrix)
            return mid @ self.u_
        return op.apply(self.u_)

    def _check_fitted(self):
        if not hasattr(self, "u_"):
            raise ConfigError("estimator is not fitted; call fit first")
