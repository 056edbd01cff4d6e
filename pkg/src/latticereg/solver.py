"""Primal-dual solver for bracket-constrained variational problems.

Solves min_{u,v} (1/alpha) H(v | f) + J(u) subject to A_l u <= v <= A_u u
with a Chambolle-Pock iteration on the equivalent saddle problem. The
bracket constraints form one dual block (projection onto the nonnegative
cone); nonsmooth pieces of H and J (total-variation terms, the Wasserstein
CDF norm, inf-convolution liftings) contribute further dual blocks, so
every prox in the iteration is closed-form or pointwise Newton.

Reported quantities follow the weighted-pairing convention: multipliers mu
are densities, E* mu = mu_1 - mu_2, B* mu = A_l* mu_1 - A_u* mu_2.

The primal value is evaluated at the bracket-projected point (v clipped
into [A_l u, A_u u]) and the dual value maximises t -> -(1/alpha) H*(t
alpha E* mu | f) - J*(-t B* mu) over t in [0, 1]; both are therefore valid
bounds and the reported gap is nonnegative up to roundoff at every iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fidelities import (
    Fidelity,
    InfConvFidelity,
    SumFidelity,
    TotalVariationFidelity,
    Wasserstein1D,
)
from .lattice import BracketPair, DenseOperator, stack_operators
from .regularisers import Regulariser, TotalVariation1D, diff_matrix, subgradient_residual


@dataclass
class SolverOptions:
    max_iters: int = 200_000
    tol_gap: float = 1e-7
    tol_feas: float = 1e-8
    tol_comp: float = 1e-6
    precondition: bool = False
    seed: int = 0
    check_every: int = 25


@dataclass
class FeasibilityReport:
    strictly_feasible: bool
    margin: float
    degenerate: bool


@dataclass
class Problem:
    """One bracket-regularisation instance on fixed data."""

    bracket: BracketPair
    fidelity: Fidelity
    regulariser: Regulariser
    data: np.ndarray
    alpha: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 1 or self.data.size != self.bracket.shape[0]:
            raise ConfigError("data length must match the bracket's output grid")
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("data must be finite")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")

    @property
    def n(self) -> int:
        return self.bracket.shape[1]

    @property
    def m(self) -> int:
        return self.bracket.shape[0]

    @property
    def dx_u(self) -> float:
        return self.bracket.dx_in

    @property
    def dx_v(self) -> float:
        return self.bracket.dx_out

    def operator_B(self) -> DenseOperator:
        """Stacked constraint operator u -> (A_l u, -A_u u)."""
        lo, up = self.bracket.lower, self.bracket.upper
        return stack_operators(
            [lo, DenseOperator(-up.matrix, up.dx_in, up.dx_out)]
        )

    def validate(self, seed: int = 0, tries: int = 8) -> FeasibilityReport:
        """Probe for a strictly feasible pair (Slater-type condition).

        Searches nonnegative inputs u_0 with A_l u_0 < A_u u_0 componentwise;
        the midpoint v_0 then has a positive margin. Zero-width brackets are
        flagged degenerate (the constraint is an equality there).
        """
        if self.bracket.degenerate:
            return FeasibilityReport(False, 0.0, True)
        rng = np.random.default_rng(seed)
        best = -np.inf
        for k in range(tries):
            u0 = np.ones(self.n) if k == 0 else rng.uniform(0.1, 1.0, self.n)
            margin = float(
                np.min(self.bracket.upper.apply(u0) - self.bracket.lower.apply(u0))
            ) / 2.0
            best = max(best, margin)
            if best > 0:
                break
        return FeasibilityReport(best > 0, best, False)


@dataclass
class SolveReport:
    u: np.ndarray
    v: np.ndarray
    mu: tuple[np.ndarray, np.ndarray]
    primal_value: float
    dual_value: float
    gap: float
    complementarity: float
    constraint_violation: float
    iterations: int
    converged: bool
    aux: dict = field(default_factory=dict)

    @property
    def e_star_mu(self) -> np.ndarray:
        return self.mu[0] - self.mu[1]


def b_star_mu(problem: Problem, mu1: np.ndarray, mu2: np.ndarray) -> np.ndarray:
    """B* mu = A_l* mu_1 - A_u* mu_2 in the density convention."""
    lo, up = problem.bracket.lower, problem.bracket.upper
    return lo.adjoint.apply(mu1) - up.adjoint.apply(mu2)


# ---------------------------------------------------------------------------
# block assembly


class _Block:
    """One dual block: rows of K plus the prox of its conjugate term."""

    def __init__(self, mat: np.ndarray, kind: str, **ctx):
        self.mat = mat
        self.kind = kind
        self.ctx = ctx

    def dual_prox(self, z: np.ndarray, sigma: float, alpha: float, dx: float):
        if self.kind == "cone":
            return np.maximum(z, 0.0)
        if self.kind == "unit_ball":  # conjugate of sum |y_i|
            return np.clip(z, -1.0, 1.0)
        if self.kind == "shifted_ball":  # conjugate of a |y - b|_1
            a = self.ctx["a"] / alpha
            return np.clip(z - sigma * self.ctx["b"], -a, a)
        if self.kind == "moreau":
            fid: Fidelity = self.ctx["fid"]
            data = self.ctx["data"]
            return z - sigma * fid.prox(z / sigma, data, dx, dx / (alpha * sigma))
        raise AssertionError(self.kind)


def _fidelity_terms(fid: Fidelity, f: np.ndarray, where: str = "v"):
    """Flatten a fidelity into solver terms (target, fidelity, data)."""
    if isinstance(fid, SumFidelity):
        if where != "v":
            raise ConfigError("sum fidelities cannot be nested inside infconv")
        return _fidelity_terms(fid.f1, f, "v") + _fidelity_terms(fid.f2, f, "v")
    if isinstance(fid, InfConvFidelity):
        if where != "v":
            raise ConfigError("infconv fidelities cannot be nested")
        return _fidelity_terms(fid.f1, np.zeros_like(f), "w") + _fidelity_terms(
            fid.f2, f, "v-w"
        )
    return [(where, fid, f)]


def _build_blocks(problem: Problem):
    n, m = problem.n, problem.m
    lo = problem.bracket.lower.matrix
    up = problem.bracket.upper.matrix
    terms = _fidelity_terms(problem.fidelity, problem.data)
    lifted = any(t[0] != "v" for t in terms)
    N = n + m + (m if lifted else 0)

    def cols(target: str) -> np.ndarray:
        c = np.zeros((m, N))
        if target in ("v", "v-w"):
            c[:, n : n + m] = np.eye(m)
        if target == "w":
            c[:, n + m :] = np.eye(m)
        if target == "v-w":
            c[:, n + m :] = -np.eye(m)
        return c

    blocks: list[_Block] = []
    bracket_rows = np.zeros((2 * m, N))
    bracket_rows[:m, :n] = lo
    bracket_rows[:m, n : n + m] = -np.eye(m)
    bracket_rows[m:, :n] = -up
    bracket_rows[m:, n : n + m] = np.eye(m)
    blocks.append(_Block(bracket_rows, "cone"))

    if isinstance(problem.regulariser, TotalVariation1D) and n > 1:
        rows = np.zeros((n - 1, N))
        rows[:, :n] = diff_matrix(n)
        blocks.append(_Block(rows, "unit_ball"))

    dx = problem.dx_v
    term_block_idx: list[int] = []
    for target, tfid, tdata in terms:
        base = cols(target)
        if isinstance(tfid, TotalVariationFidelity):
            blocks.append(_Block(base, "shifted_ball", a=0.5 * dx, b=tdata))
        elif isinstance(tfid, Wasserstein1D):
            smat = tfid.cdf_matrix(m, dx)
            blocks.append(_Block(smat @ base, "shifted_ball", a=dx, b=smat @ tdata))
        else:
            if not tfid.prox_supported:
                raise ConfigError(f"fidelity {tfid.name} is not solvable by splitting")
            blocks.append(_Block(base, "moreau", fid=tfid, data=tdata))
        term_block_idx.append(len(blocks) - 1)
    return blocks, terms, term_block_idx, lifted, N


def _prox_G(problem: Problem, y: np.ndarray, tau, lifted: bool) -> np.ndarray:
    n, m = problem.n, problem.m
    reg = problem.regulariser
    out = y.copy()
    uy = y[:n]
    tau_u = tau[:n] if isinstance(tau, np.ndarray) else tau
    dxu = problem.dx_u
    if isinstance(reg, TotalVariation1D):
        out[:n] = np.maximum(uy, 0.0) if reg.nonneg else uy
    elif reg.name == "sq_l2":
        base = np.maximum(uy, 0.0) if reg.nonneg else uy
        out[:n] = base / (1.0 + tau_u * dxu)
    elif reg.name == "l1":
        t = tau_u * dxu
        if reg.nonneg:
            out[:n] = np.maximum(uy - t, 0.0)
        else:
            out[:n] = np.sign(uy) * np.maximum(np.abs(uy) - t, 0.0)
    else:  # pragma: no cover - factory limits the kinds
        raise ConfigError(f"unknown regulariser {reg.name}")
    return out


# ---------------------------------------------------------------------------
# objective values


def primal_objective(problem: Problem, u: np.ndarray, v: np.ndarray, w=None):
    """Objective at the bracket-projected pair; returns (value, v_projected).

    For inf-convolution fidelities the value uses the lifted split w (an
    upper bound for any w, exact at the optimal split).
    """
    lo = problem.bracket.lower.apply(u)
    hi = problem.bracket.upper.apply(u)
    v_proj = np.clip(v, np.minimum(lo, hi), np.maximum(lo, hi))
    dx = problem.dx_v
    if isinstance(problem.fidelity, InfConvFidelity) and w is not None:
        hval = problem.fidelity.f1.eval_relaxed(
            w, np.zeros_like(w), dx
        ) + problem.fidelity.f2.eval_relaxed(v_proj - w, problem.data, dx)
    else:
        hval = problem.fidelity.eval_relaxed(v_proj, problem.data, dx)
    value = hval / problem.alpha + problem.regulariser.eval(u, problem.dx_u)
    return value, v_proj


def _dual_curve(problem: Problem, mu1, mu2, split=None):
    """Concave t -> dual value of the scaled multiplier t*mu on [0, 1]."""
    alpha = problem.alpha
    dx = problem.dx_v
    f = problem.data
    q0 = alpha * (mu1 - mu2)
    p0 = -b_star_mu(problem, mu1, mu2)
    fid = problem.fidelity

    if isinstance(fid, SumFidelity) and split is not None:
        qa = split

        def hstar(t):
            return fid.f1.conjugate(t * qa, f, dx) + fid.f2.conjugate(
                t * (q0 - qa), f, dx
            )

    else:

        def hstar(t):
            return fid.conjugate(t * q0, f, dx)

    def value(t):
        h = hstar(t)
        if not np.isfinite(h):
            return -np.inf
        j = problem.regulariser.conjugate(t * p0, problem.dx_u)
        if not np.isfinite(j):
            return -np.inf
        return -h / alpha - j

    return value


def dual_objective(problem: Problem, mu1, mu2, split=None) -> tuple[float, float]:
    """Best dual bound over scalings t*mu, t in [0, 1]; returns (value, t)."""
    value = _dual_curve(problem, mu1, mu2, split)
    v1 = value(1.0)
    if np.isfinite(v1):
        t_hi = 1.0
    else:
        lo_t, hi_t = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            if np.isfinite(value(mid)):
                lo_t = mid
            else:
                hi_t = mid
        t_hi = lo_t
    if t_hi == 0.0:
        return value(0.0), 0.0
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, t_hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = value(c), value(d)
    for _ in range(80):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = value(d)
    best_t = 0.5 * (a + b)
    candidates = [(value(t), t) for t in (best_t, t_hi, 1.0 if t_hi == 1.0 else best_t)]
    val, t = max(candidates, key=lambda p: p[0])
    return val, t


def complementarity(problem: Problem, u, v, mu1, mu2) -> float:
    """<mu, Bu - Ev> under the weighted pairing."""
    r1 = problem.bracket.lower.apply(u) - v
    r2 = v - problem.bracket.upper.apply(u)
    return problem.dx_v * (float(np.dot(mu1, r1)) + float(np.dot(mu2, r2)))


def constraint_violation(problem: Problem, u, v) -> float:
    r1 = problem.bracket.lower.apply(u) - v
    r2 = v - problem.bracket.upper.apply(u)
    return max(float(np.max(r1, initial=0.0)), float(np.max(r2, initial=0.0)), 0.0)


def duality_gap(problem: Problem, u, v, mu1, mu2, w=None, split=None) -> float:
    primal, _ = primal_objective(problem, u, v, w)
    dual, _ = dual_objective(problem, mu1, mu2, split)
    return primal - dual


def kkt_residuals(problem: Problem, report: "SolveReport") -> dict:
    """Stationarity diagnostics at a solve report.

    subgrad_J: coordinate-direction residual of -B* mu in dJ(u).
    fenchel_H: defect H(v) + H*(alpha E* mu) - <alpha E* mu, v> at the
    best feasible scaling of mu (nonnegative, zero exactly at a saddle).
    """
    mu1, mu2 = report.mu
    u = report.u
    p = -b_star_mu(problem, mu1, mu2)
    res_j = subgradient_residual(problem.regulariser, u, p, problem.dx_u)
    _, v_proj = primal_objective(problem, u, report.v, report.aux.get("w"))
    dx = problem.dx_v
    _, t = dual_objective(problem, mu1, mu2, report.aux.get("split"))
    q = t * problem.alpha * (mu1 - mu2)
    fid = problem.fidelity
    if isinstance(fid, SumFidelity) and report.aux.get("split") is not None:
        qa = t * report.aux["split"]
        hstar = fid.f1.conjugate(qa, problem.data, dx) + fid.f2.conjugate(
            q - qa, problem.data, dx
        )
    else:
        hstar = fid.conjugate(q, problem.data, dx)
    if isinstance(fid, InfConvFidelity) and report.aux.get("w") is not None:
        w = report.aux["w"]
        hval = fid.f1.eval_relaxed(w, np.zeros_like(w), dx) + fid.f2.eval_relaxed(
            v_proj - w, problem.data, dx
        )
    else:
        hval = fid.eval_relaxed(v_proj, problem.data, dx)
    from .lattice import inner

    fenchel_h = hval + hstar - inner(q, v_proj, dx)
    return {
        "subgrad_J": res_j,
        "fenchel_H": fenchel_h,
        "complementarity": abs(complementarity(problem, u, v_proj, mu1, mu2)),
        "constraint_violation": constraint_violation(problem, u, report.v),
    }


# ---------------------------------------------------------------------------
# the iteration


def solve(
    problem: Problem,
    options: SolverOptions | None = None,
    x0: np.ndarray | None = None,
    z0: list[np.ndarray] | None = None,
) -> SolveReport:
    """Run the primal-dual iteration until the gap and feasibility targets.

    Non-convergence within the iteration cap is reported through
    `converged=False`, not raised. `x0`/`z0` warm-start the iteration
    (`report.aux['state']` of a previous solve has the right layout).
    """
    opts = options or SolverOptions()
    blocks, terms, term_idx, lifted, N = _build_blocks(problem)
    n, m = problem.n, problem.m
    dx = problem.dx_v
    alpha = problem.alpha

    K = np.vstack([b.mat for b in blocks])
    row_of = []
    start = 0
    for b in blocks:
        row_of.append(slice(start, start + b.mat.shape[0]))
        start += b.mat.shape[0]

    if opts.precondition:
        norms = [np.linalg.norm(b.mat, 2) for b in blocks]
        sigmas = np.array([0.97 / nb if nb > 0 else 1.0 for nb in norms])
        tau = 0.97 / sum(nb * s for nb, s in zip(norms, sigmas))
    else:
        L = np.linalg.norm(K, 2)
        tau = 0.97 / L if L > 0 else 1.0
        sigmas = np.full(len(blocks), 0.97 / L if L > 0 else 1.0)

    if x0 is not None:
        x = np.array(x0, dtype=float).copy()
        if x.size != N:
            raise ConfigError("warm-start state has the wrong dimension")
    else:
        x = np.zeros(N)
        x[:n] = 1.0
        mid = 0.5 * (
            problem.bracket.lower.apply(x[:n]) + problem.bracket.upper.apply(x[:n])
        )
        x[n : n + m] = mid
        if lifted:
            x[n + m :] = 0.0
    if z0 is not None:
        z = [np.array(zb, dtype=float).copy() for zb in z0]
        if len(z) != len(blocks) or any(
            zb.size != b.mat.shape[0] for zb, b in zip(z, blocks)
        ):
            raise ConfigError("warm-start duals have the wrong layout")
    else:
        z = [np.zeros(b.mat.shape[0]) for b in blocks]

    xbar = x.copy()
    best = None
    it = 0
    converged = False
    check_every = max(1, opts.check_every)

    def evaluate(xc, zc):
        u = xc[:n]
        v = xc[n : n + m]
        w = xc[n + m :] if lifted else None
        z_br = zc[0]
        mu1 = z_br[:m] / dx
        mu2 = z_br[m:] / dx
        split = None
        if isinstance(problem.fidelity, SumFidelity):
            za = zc[term_idx[0]]
            split = alpha * za / dx
        primal, v_proj = primal_objective(problem, u, v, w)
        dual, t = dual_objective(problem, mu1, mu2, split)
        gap = primal - dual
        feas = constraint_violation(problem, u, v)
        comp = complementarity(problem, u, v_proj, mu1, mu2)
        return {
            "u": u,
            "v": v,
            "v_proj": v_proj,
            "w": w,
            "mu": (mu1, mu2),
            "split": split,
            "primal": primal,
            "dual": dual,
            "gap": gap,
            "feas": feas,
            "comp": comp,
            "t": t,
        }

    while it < opts.max_iters:
        Kxbar = K @ xbar
        for i, b in enumerate(blocks):
            z[i] = b.dual_prox(z[i] + sigmas[i] * Kxbar[row_of[i]], sigmas[i], alpha, dx)
        zfull = np.concatenate(z)
        x_new = _prox_G(problem, x - tau * (K.T @ zfull), tau, lifted)
        xbar = 2.0 * x_new - x
        x = x_new
        it += 1
        if it % check_every == 0 or it == opts.max_iters:
            state = evaluate(x, z)
            best = state
            scale = 1.0 + abs(state["primal"]) if np.isfinite(state["primal"]) else 1.0
            if (
                np.isfinite(state["gap"])
                and state["gap"] <= opts.tol_gap * scale
                and state["feas"] <= opts.tol_feas
                and abs(state["comp"]) <= opts.tol_comp * scale
            ):
                converged = True
                break

    if best is None:
        best = evaluate(x, z)
    aux = {
        "w": best["w"],
        "split": best["split"],
        "state": (x, [zb.copy() for zb in z]),
        "dual_scale_t": best["t"],
        "v_projected": best["v_proj"],
    }
    if problem.fidelity.requires_probability:
        aux["mass_drift"] = abs(
            dx * float(best["v_proj"].sum() - problem.data.sum())
        )
    return SolveReport(
        u=best["u"].copy(),
        v=best["v"].copy(),
        mu=(best["mu"][0].copy(), best["mu"][1].copy()),
        primal_value=float(best["primal"]),
        dual_value=float(best["dual"]),
        gap=float(best["gap"]),
        complementarity=float(best["comp"]),
        constraint_violation=float(best["feas"]),
        iterations=it,
        converged=converged,
        aux=aux,
    )
