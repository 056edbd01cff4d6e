"""Bregman distances, source-condition fixtures, and rate measurement.

The error measure for all convergence experiments is the Bregman distance
of the regulariser at a distinguished subgradient. Fixtures package a
ground truth u with a dual certificate: a source element omega whose
multiplier pair mu = (omega_minus, omega_plus) satisfies
-B* mu = A* omega in dJ(u) at the true operator. The rate bound

    D(u_n, u) <= delta_n/alpha_n
                 + [H*(alpha_n E* mu | f_n) - <alpha_n E* mu, f_bar>]/alpha_n
                 + C eta_n

is evaluated term by term so experiments can report its slack row by row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FixtureError
from .fidelities import Fidelity
from .lattice import BracketPair, Signal, inner, norm, pos_neg_split
from .regularisers import Regulariser, subgradient_residual

SUBGRADIENT_CHECK_TOL = 1e-4


def _require_subgradient(reg, point, p, dx, tol, what):
    res = subgradient_residual(reg, point, p, dx)
    if res > tol:
        raise ValueError(
            f"{what} fails the subgradient test: residual {res:g} > {tol:g}"
        )


def bregman_one_sided(
    reg: Regulariser,
    u,
    w,
    p,
    dx: float,
    check_tol: float | None = SUBGRADIENT_CHECK_TOL,
) -> float:
    """D_J^p(u, w) = J(u) - J(w) - <p, u - w> for p in dJ(w).

    check_tol=None skips the subgradient membership test (used when
    recording diagnostics at non-converged iterates).
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    ju = reg.eval(u, dx)
    jw = reg.eval(w, dx)
    if not (np.isfinite(ju) and np.isfinite(jw)):
        raise ValueError("Bregman distance needs finite J at both points")
    if check_tol is not None:
        _require_subgradient(reg, w, p, dx, check_tol, "base point")
    return ju - jw - inner(p, u - w, dx)


def bregman_symmetric(
    reg: Regulariser,
    u,
    w,
    q,
    p,
    dx: float,
    check_tol: float | None = SUBGRADIENT_CHECK_TOL,
) -> float:
    """Symmetric Bregman distance <q - p, u - w>, q in dJ(u), p in dJ(w)."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (np.isfinite(reg.eval(u, dx)) and np.isfinite(reg.eval(w, dx))):
        raise ValueError("Bregman distance needs finite J at both points")
    if check_tol is not None:
        _require_subgradient(reg, u, q, dx, check_tol, "first point")
        _require_subgradient(reg, w, p, dx, check_tol, "second point")
    return inner(np.asarray(q, float) - np.asarray(p, float), u - w, dx)


@dataclass
class SourceFixture:
    """Ground truth with a dual certificate for rate experiments.

    mu_dagger = (omega_minus, omega_plus), so mu2 - mu1 = omega and
    E* mu = -omega; p_dagger = A* omega is the certified subgradient.
    """

    u_dagger: Signal
    f_bar: Signal
    omega: Signal
    mu_dagger: tuple[np.ndarray, np.ndarray]
    p_dagger: Signal

    @property
    def e_star_mu(self) -> np.ndarray:
        return self.mu_dagger[0] - self.mu_dagger[1]

    def mu_l1_norm(self, dx: float) -> float:
        return norm(self.mu_dagger[0], dx, "l1") + norm(self.mu_dagger[1], dx, "l1")


def make_source_fixture(
    bracket: BracketPair,
    reg: Regulariser,
    omega=None,
    u_dagger=None,
    tol: float = 1e-8,
) -> SourceFixture:
    """Construct a fixture at the bracket's true operator.

    For the squared-L2 regulariser, omega must satisfy A* omega >= 0 and
    u = A* omega (so the subgradient is u itself). For the L1 regulariser,
    u_dagger is taken as given (sparse, nonnegative) and omega is solved
    from the support equations (A* omega = 1 on the support) by least
    squares; the off-support sign constraints are then verified.

    Raises
    ------
    FixtureError
        If the bracket has no truth operator, the requested pair violates
        the sign constraints (listed in the message), or the resulting
        subgradient fails the membership test at tolerance `tol`.
    """
    if bracket.truth is None:
        raise FixtureError("fixture construction needs the true operator")
    a = bracket.truth
    dx_u, dx_v = bracket.dx_in, bracket.dx_out

    if reg.name == "sq_l2":
        if omega is None:
            raise FixtureError("sq_l2 fixtures need a source element omega")
        omega = np.asarray(omega, dtype=float)
        p = a.adjoint.apply(omega)
        if np.min(p) < -1e-14:
            bad = np.nonzero(p < -1e-14)[0]
            raise FixtureError(
                f"A* omega has negative entries at indices {bad.tolist()[:8]}; "
                "pick omega with A* omega >= 0"
            )
        u = np.maximum(p, 0.0)
    elif reg.name == "l1":
        if u_dagger is None:
            raise FixtureError("l1 fixtures need the sparse truth u_dagger")
        u = np.asarray(u_dagger, dtype=float)
        if np.min(u) < 0:
            bad = np.nonzero(u < 0)[0]
            raise FixtureError(
                f"u_dagger must be nonnegative; negative at indices {bad.tolist()[:8]}"
            )
        support = u > 0
        if not np.any(support):
            omega = np.zeros(bracket.shape[0])
        else:
            # (A* omega)_j = 1 on the support; least squares over omega
            mat = a.adjoint.matrix[support, :]
            omega, *_ = np.linalg.lstsq(mat, np.ones(int(support.sum())), rcond=None)
        p = a.adjoint.apply(np.asarray(omega, dtype=float))
        viol = []
        for j in range(u.size):
            if support[j]:
                if abs(p[j] - 1.0) > 1e-9:
                    viol.append((j, "= 1", p[j]))
            elif reg.nonneg:
                if p[j] > 1.0 + 1e-9:
                    viol.append((j, "<= 1", p[j]))
            elif abs(p[j]) > 1.0 + 1e-9:
                viol.append((j, "|.| <= 1", p[j]))
        if viol:
            desc = ", ".join(f"index {j}: need {c}, got {val:g}" for j, c, val in viol[:8])
            raise FixtureError(f"source condition infeasible for this (A, J, u): {desc}")
    else:
        raise FixtureError(
            f"no constructive source recipe for regulariser {reg.name!r}"
        )

    omega = np.asarray(omega, dtype=float)
    f_bar = a.apply(u)
    mu_plus, mu_minus = pos_neg_split(omega)
    mu = (mu_minus, mu_plus)  # first component pairs with the lower constraint
    residual = subgradient_residual(reg, u, p, dx_u)
    if residual > tol:
        raise FixtureError(
            f"certificate fails the subgradient test: residual {residual:g}"
        )
    check = np.max(np.abs(a.apply(u) - f_bar))
    if check > 1e-12:  # defensive; f_bar is defined as this image
        raise FixtureError(f"forward image inconsistent by {check:g}")
    return SourceFixture(
        u_dagger=Signal(u, dx_u),
        f_bar=Signal(f_bar, dx_v),
        omega=Signal(omega, dx_v),
        mu_dagger=mu,
        p_dagger=Signal(p, dx_u),
    )


def save_source_fixture(path, fx: SourceFixture) -> None:
    """Versioned name = value text record (floats via repr, comma-joined)."""

    def fmt(arr):
        return ",".join(repr(float(x)) for x in np.asarray(arr, float))

    lines = [
        "format = latticereg-fixture",
        "version = 1",
        f"dx_in = {fx.u_dagger.grid_spacing!r}",
        f"dx_out = {fx.f_bar.grid_spacing!r}",
        f"u_dagger = {fmt(fx.u_dagger.values)}",
        f"f_bar = {fmt(fx.f_bar.values)}",
        f"omega = {fmt(fx.omega.values)}",
        f"p_dagger = {fmt(fx.p_dagger.values)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_source_fixture(path) -> SourceFixture:
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    if fields.get("format") != "latticereg-fixture":
        raise FixtureError(f"{path} is not a fixture record")
    if fields.get("version") != "1":
        raise FixtureError(f"unsupported fixture version {fields.get('version')!r}")

    def arr(key):
        return np.array([float(tok) for tok in fields[key].split(",")])

    dx_u = float(fields["dx_in"])
    dx_v = float(fields["dx_out"])
    omega = arr("omega")
    mu_plus, mu_minus = pos_neg_split(omega)
    return SourceFixture(
        u_dagger=Signal(arr("u_dagger"), dx_u),
        f_bar=Signal(arr("f_bar"), dx_v),
        omega=Signal(omega, dx_v),
        mu_dagger=(mu_minus, mu_plus),
        p_dagger=Signal(arr("p_dagger"), dx_u),
    )


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    used: int
    dropped: int

    @property
    def note(self) -> str:
        return f"fit on {self.used} points ({self.dropped} dropped)"


def fit_rate_slope(points) -> RateFit:
    """Least-squares slope of log y against log x.

    Points with y <= 0 are dropped (counted in the result); at least 4
    usable points are required and x must be strictly decreasing.
    """
    xs = np.array([float(p[0]) for p in points])
    ys = np.array([float(p[1]) for p in points])
    if np.any(xs <= 0):
        raise ValueError("x values must be positive")
    if not np.all(np.diff(xs) < 0):
        raise ValueError("x values must be strictly decreasing")
    keep = ys > 0
    dropped = int(np.sum(~keep))
    xs, ys = xs[keep], ys[keep]
    if xs.size < 4:
        raise ValueError(f"need >= 4 usable points, have {xs.size}")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), r2, int(xs.size), dropped)


def rate_constant(fixture: SourceFixture, sup_u_norm: float, dx_v: float) -> float:
    """C = ||mu|| * sup_n ||u_n||, the observed coefficient of the eta term.

    The pairing <mu, (B - B_n) u> is bounded by the weighted-l1 norm of mu
    times the sup norm of (B - B_n) u, and the operator difference is
    measured in the sup-induced norm, so these are the matching choices.
    """
    return fixture.mu_l1_norm(dx_v) * float(sup_u_norm)


def rate_bound_rhs(
    fid: Fidelity,
    fixture: SourceFixture,
    f_n,
    alpha: float,
    delta: float,
    eta: float,
    c_const: float,
) -> float:
    """Right-hand side of the one-sided and symmetric rate bounds."""
    dx = fixture.f_bar.grid_spacing
    q = alpha * fixture.e_star_mu
    hstar = fid.conjugate(q, np.asarray(f_n, float), dx)
    pairing = inner(q, fixture.f_bar.values, dx)
    return delta / alpha + (hstar - pairing) / alpha + c_const * eta
