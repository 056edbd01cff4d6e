"""Regularisation-parameter rules: a-priori schedules and the discrepancy principle.

The discrepancy principle picks alpha_n = sup{alpha : h(alpha) <= tau*delta_n},
where h(alpha) is the fidelity value of the solution at parameter alpha.
h is nondecreasing and j(alpha) = J(u^alpha) nonincreasing, so the sup is
found by geometric expansion followed by bisection on log(alpha). Because h
may jump, the implementation accepts any alpha whose h lands in the band
[delta_n, tau*delta_n] and whose bracketing interval is tight.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, MonotonicityError, WellPosednessError
from .solver import Problem, SolveReport, SolverOptions, solve


@dataclass
class Schedule:
    """alpha rule: power (a * delta^p), constant (c), or an explicit table."""

    kind: str
    a: float = 1.0
    p: float = 0.5
    c: float = 1.0
    table: list[float] | None = None

    def __post_init__(self):
        if self.kind not in ("power", "constant", "table"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "table" and not self.table:
            raise ConfigError("table schedule needs a nonempty table")


def apriori_alpha(s: Schedule, delta_n: float, index: int | None = None) -> float:
    """Evaluate the schedule; raises on nonpositive results."""
    if s.kind == "power":
        if delta_n <= 0:
            raise ConfigError("power schedules need delta_n > 0")
        alpha = s.a * delta_n**s.p
    elif s.kind == "constant":
        alpha = s.c
    else:
        if index is None or not 0 <= index < len(s.table):
            raise ConfigError(f"table schedule needs a valid index, got {index!r}")
        alpha = float(s.table[index])
    if not alpha > 0:
        raise ConfigError(f"schedule produced a nonpositive alpha: {alpha!r}")
    return float(alpha)


@dataclass
class DiscrepancyTrace:
    """All (alpha, h, j) probes of one discrepancy search, in solve order."""

    probes: list[tuple[float, float, float]] = field(default_factory=list)
    expansions: int = 0
    bisections: int = 0

    def check_monotone(self, slack: float = 1e-6) -> None:
        """Verify h nondecreasing and j nonincreasing over recorded probes."""
        by_alpha = sorted(self.probes)
        for (a0, h0, j0), (a1, h1, j1) in zip(by_alpha, by_alpha[1:]):
            if h1 < h0 - slack * (1.0 + abs(h0)):
                raise MonotonicityError(
                    f"h decreased from {h0:g} at alpha={a0:g} to {h1:g} at "
                    f"alpha={a1:g}"
                )
            if j1 > j0 + slack * (1.0 + abs(j0)):
                raise MonotonicityError(
                    f"j increased from {j0:g} at alpha={a0:g} to {j1:g} at "
                    f"alpha={a1:g}"
                )


def _h_and_j(problem: Problem, report: SolveReport) -> tuple[float, float]:
    v = report.aux.get("v_projected", report.v)
    h = problem.fidelity.eval_relaxed(v, problem.data, problem.dx_v)
    j = problem.regulariser.eval(report.u, problem.dx_u)
    return float(h), float(j)


def discrepancy_alpha(
    problem: Problem,
    f_n,
    delta_n: float,
    tau: float = 1.5,
    options: SolverOptions | None = None,
    alpha0: float | None = None,
    expand_factor: float = 10.0,
    max_expand: int = 40,
    band_ratio: float = 1.05,
    mono_slack: float = 1e-6,
) -> tuple[float, SolveReport, DiscrepancyTrace]:
    """Largest alpha with fidelity value at most tau * delta_n.

    `problem` serves as the template (its alpha and data are replaced).
    Expands alpha geometrically from alpha0 (default delta_n) until
    h(alpha) > tau*delta_n, then bisects on log(alpha) until the interval
    ratio is at most band_ratio and h at the left end lies in
    [delta_n, tau*delta_n]. Returns that left end with its solve report.

    Raises
    ------
    WellPosednessError
        If h never exceeds tau*delta_n within the expansion cap (the noise
        level is too large relative to the model), or the band cannot be
        reached by bisection.
    MonotonicityError
        If the recorded probes violate monotonicity of h or j beyond
        mono_slack.
    """
    if tau <= 1.0:
        raise ConfigError("discrepancy principle needs tau > 1")
    if delta_n <= 0:
        raise ConfigError("delta_n must be > 0")
    opts = options or SolverOptions()
    f_n = np.asarray(f_n, dtype=float)
    trace = DiscrepancyTrace()
    state = {"warm": None}

    def run(alpha: float) -> tuple[float, float, SolveReport]:
        prob = replace(problem, alpha=alpha, data=f_n)
        warm = state["warm"]
        rep = solve(
            prob,
            opts,
            x0=None if warm is None else warm[0],
            z0=None if warm is None else warm[1],
        )
        state["warm"] = rep.aux.get("state")
        h, j = _h_and_j(prob, rep)
        trace.probes.append((alpha, h, j))
        trace.check_monotone(mono_slack)
        return h, j, rep

    target = tau * delta_n
    alpha_lo = float(alpha0) if alpha0 is not None else float(delta_n)
    h_lo, _, rep_lo = run(alpha_lo)

    shrink = 0
    while h_lo > target and shrink < max_expand:
        alpha_lo /= expand_factor
        h_lo, _, rep_lo = run(alpha_lo)
        shrink += 1
    if h_lo > target:
        raise WellPosednessError(
            f"h(alpha) stays above tau*delta = {target:g} down to "
            f"alpha = {alpha_lo:g} (h = {h_lo:g})"
        )

    alpha_hi = alpha_lo
    h_hi = h_lo
    stalled = 0
    while h_hi <= target:
        if trace.expansions >= max_expand or stalled >= 3:
            raise WellPosednessError(
                f"h(alpha) never exceeds tau*delta = {target:g} "
                f"(plateau at h = {h_hi:g}); the noise level is too large "
                "for this model"
            )
        alpha_hi *= expand_factor
        h_prev = h_hi
        h_hi, _, _ = run(alpha_hi)
        trace.expansions += 1
        # h is nondecreasing in alpha, so a flat stretch means saturation
        stalled = stalled + 1 if h_hi <= h_prev * (1.0 + 1e-10) + 1e-300 else 0

    for _ in range(200):
        ratio_ok = alpha_hi / alpha_lo <= band_ratio
        band_ok = delta_n <= h_lo <= target
        if ratio_ok and band_ok:
            break
        mid = float(np.sqrt(alpha_lo * alpha_hi))
        if mid <= alpha_lo or mid >= alpha_hi:
            break
        h_mid, _, rep_mid = run(mid)
        trace.bisections += 1
        if h_mid <= target:
            alpha_lo, h_lo, rep_lo = mid, h_mid, rep_mid
        else:
            alpha_hi, h_hi = mid, h_mid
    else:
        raise WellPosednessError("discrepancy bisection did not terminate")
    if not (delta_n <= h_lo <= target):
        raise WellPosednessError(
            f"no alpha with fidelity value in [{delta_n:g}, {target:g}] was "
            f"found (closest: h = {h_lo:g} at alpha = {alpha_lo:g}); h appears "
            "to jump across the band"
        )
    return alpha_lo, rep_lo, trace


@dataclass
class MonotonicityReport:
    alphas: np.ndarray
    h_values: np.ndarray
    j_values: np.ndarray
    max_h_drop: float
    max_j_rise: float

    def ok(self, slack: float = 1e-6) -> bool:
        return self.max_h_drop <= slack and self.max_j_rise <= slack


def monotonicity_sweep(
    problem: Problem,
    alphas,
    options: SolverOptions | None = None,
) -> MonotonicityReport:
    """Solve along an increasing alpha grid and measure monotonicity defects.

    Returns the largest decrease of h and the largest increase of j between
    consecutive grid points (relative to 1 + |value|); both should be ~0.
    """
    alphas = np.sort(np.asarray(alphas, dtype=float))
    if alphas.size < 2 or alphas[0] <= 0:
        raise ConfigError("need at least two positive alphas")
    opts = options or SolverOptions()
    hs, js = [], []
    warm = None
    for alpha in alphas:
        prob = replace(problem, alpha=float(alpha))
        rep = solve(
            prob,
            opts,
            x0=None if warm is None else warm[0],
            z0=None if warm is None else warm[1],
        )
        warm = rep.aux.get("state")
        h, j = _h_and_j(prob, rep)
        hs.append(h)
        js.append(j)
    hs = np.array(hs)
    js = np.array(js)
    h_drop = float(np.max((hs[:-1] - hs[1:]) / (1.0 + np.abs(hs[:-1])), initial=0.0))
    j_rise = float(np.max((js[1:] - js[:-1]) / (1.0 + np.abs(js[:-1])), initial=0.0))
    return MonotonicityReport(alphas, hs, js, h_drop, j_rise)
