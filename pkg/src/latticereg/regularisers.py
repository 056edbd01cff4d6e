"""Regularisation functionals J(u), their proxes, conjugates, subgradients.

Three kinds: squared dx-weighted L2 norm, dx-weighted L1 norm, and 1D total
variation sum |u_{i+1} - u_i| (resolution-free by construction). Each kind
composes with an optional nonnegativity constraint. Subgradient membership
is tested by a coordinate-direction residual rather than by kind-specific
formulas, so it applies uniformly to solver output.
"""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedProxError
from .lattice import inner, norm

_INDICATOR_RTOL = 1e-9


def diff_matrix(n: int) -> np.ndarray:
    """Forward-difference matrix mapping u to (u_2 - u_1, ..., u_n - u_{n-1})."""
    d = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    return d


class Regulariser:
    name = "regulariser"
    prox_supported = True

    def __init__(self, nonneg: bool = False):
        self.nonneg = bool(nonneg)

    def eval(self, u, dx: float) -> float:
        u = np.asarray(u, dtype=float)
        if self.nonneg and np.min(u) < -1e-15:
            return np.inf
        return self._value(np.maximum(u, 0.0) if self.nonneg else u, dx)

    def _value(self, u, dx):  # pragma: no cover - abstract
        raise NotImplementedError

    def prox(self, w, dx: float, tau: float) -> np.ndarray:
        """argmin_u 0.5 ||u - w||^2 + tau J(u), dx-weighted norm."""
        raise NotImplementedError

    def conjugate(self, p, dx: float) -> float:
        """J*(p) against the dx-weighted pairing."""
        raise NotImplementedError

    def __repr__(self):
        flag = ", nonneg" if self.nonneg else ""
        return f"{type(self).__name__}({self.name}{flag})"


class SquaredL2(Regulariser):
    name = "sq_l2"

    def _value(self, u, dx):
        return 0.5 * norm(u, dx, "l2") ** 2

    def prox(self, w, dx, tau):
        w = np.asarray(w, dtype=float)
        if self.nonneg:
            w = np.maximum(w, 0.0)
        return w / (1.0 + tau)

    def conjugate(self, p, dx):
        p = np.asarray(p, dtype=float)
        if self.nonneg:
            p = np.maximum(p, 0.0)
        return 0.5 * norm(p, dx, "l2") ** 2


class L1(Regulariser):
    name = "l1"

    def _value(self, u, dx):
        return norm(u, dx, "l1")

    def prox(self, w, dx, tau):
        w = np.asarray(w, dtype=float)
        if self.nonneg:
            return np.maximum(w - tau, 0.0)
        return np.sign(w) * np.maximum(np.abs(w) - tau, 0.0)

    def conjugate(self, p, dx):
        p = np.asarray(p, dtype=float)
        hi = float(np.max(p, initial=-np.inf))
        if self.nonneg:
            return 0.0 if hi <= 1.0 + _INDICATOR_RTOL else np.inf
        lo = float(np.min(p, initial=np.inf))
        ok = hi <= 1.0 + _INDICATOR_RTOL and lo >= -1.0 - _INDICATOR_RTOL
        return 0.0 if ok else np.inf


class TotalVariation1D(Regulariser):
    """J(u) = sum |u_{i+1} - u_i|; handled by the solver via a dual block."""

    name = "tv"
    prox_supported = False

    def _value(self, u, dx):
        return float(np.sum(np.abs(np.diff(u))))

    def prox(self, w, dx, tau):
        raise UnsupportedProxError(
            "tv regulariser has no separable prox; the solver splits it"
        )

    def conjugate(self, p, dx):
        # Finite iff dx*p lies in the image of D^T over multipliers in [-1, 1]
        # (with inequality slack below when the nonneg constraint is present).
        p = np.asarray(p, dtype=float)
        q = dx * p
        tol = _INDICATOR_RTOL * (1.0 + float(np.max(np.abs(q), initial=0.0)))
        if self.nonneg:
            lam = 0.0
            for j in range(p.size - 1):
                lam = min(1.0, lam - q[j]) if j else min(1.0, -q[0])
                if lam < -1.0 - tol:
                    return np.inf
            if p.size > 1 and lam < q[-1] - tol:
                return np.inf
            if p.size == 1 and q[0] > tol:
                return np.inf
            return 0.0
        partial = np.cumsum(q)
        if abs(partial[-1]) > tol:
            return np.inf
        if p.size > 1 and np.max(np.abs(partial[:-1])) > 1.0 + tol:
            return np.inf
        return 0.0


def subgradient_residual(
    reg: Regulariser, u, p, dx: float, eps: float = 1e-6
) -> float:
    """Coordinate-direction test of p in dJ(u).

    Probes the 2n directions +-e_j and returns the largest violation of
    <p, d> <= (J(u + eps d) - J(u)) / eps, clipped at zero. Values at or
    below 1e-4 count as membership for solver output.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    base = reg.eval(u, dx)
    if not np.isfinite(base):
        return np.inf
    worst = 0.0
    for j in range(u.size):
        for sgn in (1.0, -1.0):
            probe = u.copy()
            probe[j] += sgn * eps
            slope = (reg.eval(probe, dx) - base) / eps
            if not np.isfinite(slope):
                continue  # direction leaves the domain; no constraint from it
            worst = max(worst, sgn * dx * p[j] - slope)
    return worst


def make_regulariser(name: str, nonneg: bool = False) -> Regulariser:
    """Factory keyed by the config-file regulariser names."""
    kinds = {"sq_l2": SquaredL2, "l1": L1, "tv": TotalVariation1D}
    if name not in kinds:
        raise ValueError(f"unknown regulariser {name!r}")
    return kinds[name](nonneg=nonneg)
