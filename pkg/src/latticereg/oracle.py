"""Brute-force reference computations for validating the main pipeline.

Deliberately different in structure from the primal-dual solver: tiny
problems go to a general-purpose conic solver (via cvxpy) and, optionally,
to a projected-subgradient multistart; 1D transport costs come from the
monotone-coupling sweep; proxes from golden-section search. Agreement
between these and the fast paths is evidence, not tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import load_problem, parse_fidelity, save_problem
from .errors import OracleError
from .fidelities import (
    BallIndicator,
    Fidelity,
    InfConvFidelity,
    PhiDivergence,
    PowerNormFidelity,
    SumFidelity,
    TotalVariationFidelity,
    Wasserstein1D,
)
from .lattice import BracketPair, DenseOperator
from .regularisers import make_regulariser
from .solver import Problem

SIZE_LIMIT = 6


@dataclass
class OracleResult:
    value: float
    u: np.ndarray
    v: np.ndarray
    status: str
    solver_name: str


def _fidelity_expr(cp, fid: Fidelity, v, f: np.ndarray, dx: float, constraints):
    """cvxpy expression for H(v | f); appends domain constraints in place."""
    if isinstance(fid, SumFidelity):
        return _fidelity_expr(cp, fid.f1, v, f, dx, constraints) + _fidelity_expr(
            cp, fid.f2, v, f, dx, constraints
        )
    if isinstance(fid, InfConvFidelity):
        w = cp.Variable(f.size)
        zero = np.zeros(f.size)
        return _fidelity_expr(cp, fid.f1, w, zero, dx, constraints) + _fidelity_expr(
            cp, fid.f2, v - w, f, dx, constraints
        )
    if isinstance(fid, PowerNormFidelity):
        if fid.norm_kind == "l1":
            return dx * cp.norm1(v - f)
        base = math.sqrt(dx) * cp.norm(v - f, 2)
        if fid.lam == 1.0:
            return base
        return cp.power(base, fid.lam) / fid.lam
    if isinstance(fid, PhiDivergence):
        pos = f > 0.0
        fp = f[pos]
        vp = v[pos]
        if np.any(~pos):
            constraints.append(v[~pos] == 0)
        if fid.phi.name == "kl":
            return dx * cp.sum(cp.kl_div(vp, fp))
        if fid.phi.name == "chi2":
            constraints.append(vp >= 0)
            return dx * cp.sum(cp.multiply(1.0 / fp, cp.square(vp - fp)))
        if fid.phi.name == "hellinger2":
            return dx * (
                cp.sum(vp) - 2.0 * cp.sum(cp.multiply(np.sqrt(fp), cp.sqrt(vp))) + fp.sum()
            )
        if fid.phi.name == "reverse_kl":
            return dx * cp.sum(cp.kl_div(fp, vp))
        raise OracleError(f"no conic form for divergence {fid.phi.name!r}")
    if isinstance(fid, TotalVariationFidelity):
        return 0.5 * dx * cp.norm1(v - f)
    if isinstance(fid, Wasserstein1D):
        smat = fid.cdf_matrix(f.size, dx)
        return dx * cp.norm1(smat @ (v - f))
    if isinstance(fid, BallIndicator):
        z = v - f
        if fid.norm_kind == "l2":
            constraints.append(cp.norm(z, 2) <= fid.delta / math.sqrt(dx))
        elif fid.norm_kind == "max":
            constraints.append(cp.norm_inf(z) <= fid.delta)
        else:
            constraints.append(dx * cp.norm1(z) <= fid.delta)
        return cp.Constant(0.0)
    raise OracleError(f"no conic form for fidelity {fid.name!r}")


def _regulariser_expr(cp, reg, u, dx: float, constraints):
    if reg.nonneg:
        constraints.append(u >= 0)
    if reg.name == "sq_l2":
        return 0.5 * dx * cp.sum_squares(u)
    if reg.name == "l1":
        return dx * cp.norm1(u)
    if reg.name == "tv":
        return cp.tv(u) if u.size > 1 else cp.Constant(0.0)
    raise OracleError(f"no conic form for regulariser {reg.name!r}")


def brute_solve(problem: Problem, size_limit: int = SIZE_LIMIT) -> OracleResult:
    """Reference optimal value of a tiny instance via a conic solver.

    Raises
    ------
    OracleError
        If n + m exceeds size_limit or no solver reaches optimality.
    """
    import cvxpy as cp

    n, m = problem.n, problem.m
    if n + m > size_limit:
        raise OracleError(
            f"instance too large for the oracle: n + m = {n + m} > {size_limit}"
        )
    u = cp.Variable(n)
    v = cp.Variable(m)
    constraints = [
        problem.bracket.lower.matrix @ u <= v,
        v <= problem.bracket.upper.matrix @ u,
    ]
    dx = problem.dx_v
    h_expr = _fidelity_expr(cp, problem.fidelity, v, problem.data, dx, constraints)
    j_expr = _regulariser_expr(
        cp, problem.regulariser, u, problem.dx_u, constraints
    )
    objective = cp.Minimize(h_expr / problem.alpha + j_expr)
    prob = cp.Problem(objective, constraints)
    attempts = [
        ("CLARABEL", dict(tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)),
        ("SCS", dict(eps_abs=1e-9, eps_rel=1e-9, max_iters=200_000)),
    ]
    last_status = "unsolved"
    for solver_name, opts in attempts:
        try:
            prob.solve(solver=solver_name, **opts)
        except cp.error.SolverError:
            continue
        last_status = prob.status
        if prob.status == cp.OPTIMAL:
            return OracleResult(
                value=float(prob.value),
                u=np.asarray(u.value, dtype=float),
                v=np.asarray(v.value, dtype=float),
                status=prob.status,
                solver_name=solver_name,
            )
    raise OracleError(f"conic solvers failed on the instance (status {last_status})")


def _numeric_subgradient(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    f0 = fun(x)
    for i in range(x.size):
        step = h * (1.0 + abs(x[i]))
        xp = x.copy()
        xp[i] += step
        xm = x.copy()
        xm[i] -= step
        fp, fm = fun(xp), fun(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2.0 * step)
        elif np.isfinite(fp) and np.isfinite(f0):
            g[i] = (fp - f0) / step
        elif np.isfinite(f0) and np.isfinite(fm):
            g[i] = (f0 - fm) / step
    return g


def multistart_descent(
    problem: Problem,
    starts: int = 8,
    iters: int = 3000,
    seed: int = 0,
    step0: float = 0.5,
) -> float:
    """Best feasible value from projected-subgradient multistart.

    A slow sanity path with numeric subgradients; used only to cross-check
    the conic oracle on instances where both are cheap.
    """
    rng = np.random.default_rng(seed)
    n, m = problem.n, problem.m
    lo_m = problem.bracket.lower.matrix
    up_m = problem.bracket.upper.matrix
    dx = problem.dx_v

    def project(u: np.ndarray, v: np.ndarray):
        if problem.regulariser.nonneg:
            u = np.maximum(u, 0.0)
        lo = lo_m @ u
        hi = up_m @ u
        v = np.clip(v, np.minimum(lo, hi), np.maximum(lo, hi))
        return u, v

    def objective(x: np.ndarray) -> float:
        u, v = x[:n], x[n:]
        hval = problem.fidelity.eval_relaxed(v, problem.data, dx)
        jval = problem.regulariser.eval(u, problem.dx_u)
        return hval / problem.alpha + jval

    best = np.inf
    for _ in range(starts):
        u = rng.uniform(0.05, 1.0, n)
        v = np.clip(problem.data, lo_m @ u, np.maximum(lo_m @ u, up_m @ u))
        u, v = project(u, v)
        x = np.concatenate([u, v])
        for k in range(iters):
            val = objective(x)
            if np.isfinite(val):
                best = min(best, val)
            g = _numeric_subgradient(objective, x)
            gn = np.linalg.norm(g)
            if gn == 0.0:
                break
            x = x - (step0 / math.sqrt(k + 1.0)) * g / gn
            u, v = project(x[:n], x[n:])
            x = np.concatenate([u, v])
        val = objective(x)
        if np.isfinite(val):
            best = min(best, val)
    return float(best)


def brute_w1(rho, nu, dx: float = 1.0, positions=None) -> float:
    """Exact 1D transport cost by the monotone-coupling (northwest) sweep.

    Masses are dx * rho_i at the grid positions; both inputs must be
    nonnegative with equal dx-mass within 1e-9.
    """
    rho = np.asarray(rho, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if rho.shape != nu.shape or rho.ndim != 1:
        raise ValueError("brute_w1 needs two equal-length 1D arrays")
    if np.min(rho) < 0 or np.min(nu) < 0:
        raise ValueError("brute_w1 needs nonnegative masses")
    if positions is None:
        positions = (np.arange(rho.size) + 0.5) * dx
    positions = np.asarray(positions, dtype=float)
    a = dx * rho
    b = dx * nu
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError(
            f"mass mismatch: {a.sum()!r} vs {b.sum()!r} exceeds 1e-9"
        )
    cost = 0.0
    i = j = 0
    ra, rb = a.copy(), b.copy()
    while i < ra.size and j < rb.size:
        if ra[i] == 0.0:
            i += 1
            continue
        if rb[j] == 0.0:
            j += 1
            continue
        move = min(ra[i], rb[j])
        cost += move * abs(positions[i] - positions[j])
        ra[i] -= move
        rb[j] -= move
    return float(cost)


def brute_prox(fid: Fidelity, w: float, f: float, tau: float) -> float:
    """Scalar prox argmin 0.5 (v - w)^2 + tau H(v | f) by golden section."""
    if isinstance(fid, BallIndicator):
        lo, hi = f - fid.delta, f + fid.delta
    elif isinstance(fid, PhiDivergence):
        lo = 1e-14
        hi = max(w, 0.0) + 2.0 * tau + abs(f) + 10.0
    else:
        lo = min(w, f) - tau - 10.0
        hi = max(w, f) + tau + 10.0

    def obj(v: float) -> float:
        val = fid.eval_relaxed(np.array([v]), np.array([f]), 1.0)
        return 0.5 * (v - w) ** 2 + tau * val

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(200):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = obj(d)
        if b - a <= 1e-10:
            break
    return float(0.5 * (a + b))


# ---------------------------------------------------------------------------
# default tiny-instance suite


def _tiny_bracket(mat, width: float, dx_in: float, dx_out: float) -> BracketPair:
    mat = np.asarray(mat, dtype=float)
    spread = width * np.abs(mat)
    return BracketPair(
        lower=DenseOperator(mat - spread, dx_in, dx_out),
        upper=DenseOperator(mat + spread, dx_in, dx_out),
        truth=DenseOperator(mat, dx_in, dx_out),
    )


def default_suite() -> list[tuple[str, Problem]]:
    """Tiny problems (n + m <= 6) covering every fidelity kind."""
    m22 = [[1.0, 0.25], [0.25, 1.0]]
    m33 = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]]
    m23 = [[1.0, 0.5], [0.75, 0.75], [0.5, 1.0]]
    neg = [[-1.0, -0.5], [-0.25, -1.0]]
    f2 = np.array([1.0, 0.5])
    f3 = np.array([0.5, 0.25, 0.25])

    def prob(mat, width, fid, reg_name, nonneg, data, alpha, dx_in=None, dx_out=None):
        mat = np.asarray(mat, dtype=float)
        m, n = mat.shape
        dxi = 1.0 / n if dx_in is None else dx_in
        dxo = 1.0 / m if dx_out is None else dx_out
        return Problem(
            bracket=_tiny_bracket(mat, width, dxi, dxo),
            fidelity=parse_fidelity(fid) if isinstance(fid, str) else fid,
            regulariser=make_regulariser(reg_name, nonneg=nonneg),
            data=np.asarray(data, dtype=float),
            alpha=alpha,
        )

    suite = [
        ("kkt_1d", prob([[1.0]], 0.1, "sq_norm(2)", "sq_l2", True, [1.0], 1.0)),
        ("sq2_tikhonov", prob(m22, 0.0, "sq_norm(2)", "sq_l2", False, f2, 0.5)),
        ("sq1_exactpen", prob(m22, 0.1, "sq_norm(1)", "sq_l2", True, f2, 0.25)),
        ("sq1l1_l1reg", prob(m22, 0.1, "sq_norm(1,l1)", "l1", True, f2, 0.5)),
        ("kl_sq2", prob(m33, 0.1, "kl", "sq_l2", True, f3, 1.0)),
        ("chi2_sq2", prob(m33, 0.05, "chi2", "sq_l2", True, f3, 0.5)),
        ("hell_sq2", prob(m33, 0.1, "hellinger2", "sq_l2", True, f3, 2.0)),
        ("revkl_sq2", prob(m33, 0.1, "phi_generic(reverse_kl)", "sq_l2", True, f3, 1.0)),
        ("tv_l1", prob(m33, 0.1, "tv", "l1", True, f3, 0.5)),
        ("w1_sq2", prob(m33, 0.1, "w1", "sq_l2", True, f3, 0.5)),
        ("ball2_sq2", prob(m22, 0.1, "ball(0.1,l2)", "sq_l2", True, f2, 1.0)),
        ("ballmax_l1", prob(m22, 0.1, "ball(0.1,max)", "l1", True, f2, 1.0)),
        ("ball1_sq2", prob(m22, 0.1, "ball(0.1,l1)", "sq_l2", True, f2, 1.0)),
        ("sum_kl_tv", prob(m33, 0.1, "sum(kl,tv)", "sq_l2", True, f3, 1.0)),
        ("sum_sq2_sq1", prob(m22, 0.1, "sum(sq_norm(2),sq_norm(1))", "sq_l2", True, f2, 0.5)),
        ("infconv_sq2_kl", prob(m33, 0.1, "infconv(sq_norm(2),kl)", "sq_l2", True, f3, 1.0)),
        ("infconv_sq2_chi2", prob(m22, 0.1, "infconv(sq_norm(2),chi2)", "sq_l2", True, f2, 0.5)),
        ("tvreg_sq2", prob(m23, 0.1, "sq_norm(2)", "tv", True, f3, 0.5)),
        ("sourceid_sq2", prob(neg, 0.1, "sq_norm(2)", "sq_l2", True, [-0.5, -1.0], 0.5)),
    ]
    return suite


def write_default_suite(directory) -> list[Path]:
    """Write the tiny-instance suite as problem records; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, problem in default_suite():
        path = directory / f"{name}.problem"
        save_problem(path, name, problem)
        paths.append(path)
    return paths


def load_suite(directory) -> list[tuple[str, Problem]]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.problem"))
    if not paths:
        raise OracleError(f"no .problem records found in {directory}")
    return [load_problem(p) for p in paths]
