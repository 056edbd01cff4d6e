"""Config-driven rate experiments: sweep noise and bracket widths, solve,
measure Bregman distances, verify the rate inequality, fit slopes, emit CSV.

A run builds one source fixture at the true operator, then for each schedule
point n: brackets the operator at width eta_n, calibrates a noisy datum at
level delta_n along a fixed seeded direction, chooses alpha by the
configured rule (a-priori schedule or discrepancy principle), solves, and
records one RateRow. The rate-inequality slack uses the observed constant
C = ||mu|| * sup_n ||u_n|| computed after the sweep.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    SourceFixture,
    bregman_one_sided,
    bregman_symmetric,
    fit_rate_slope,
    make_source_fixture,
    rate_bound_rhs,
    rate_constant,
)
from .config import ExperimentConfig, OperatorSpec
from .errors import ConfigError, LatticeRegError
from .fidelities import BallIndicator, PowerNormFidelity, TotalVariationFidelity, Wasserstein1D
from .lattice import BracketPair, degenerate_bracket, inner, norm
from .operators import (
    bracket_from_kernel_bounds,
    bracket_from_riemann,
    constant_kernel,
    exponential_kernel,
    gaussian_kernel,
    integral_operator,
    source_identification_bracket,
)
from .parameter_choice import Schedule, apriori_alpha, discrepancy_alpha
from .regularisers import Regulariser
from .solver import Problem, SolverOptions, b_star_mu, solve

CSV_HEADER = "n,delta,eta,alpha,primal,gap,comp,breg_one,breg_symm,h_val,j_val,slack,converged"


@dataclass
class RateRow:
    n: int
    delta: float
    eta: float
    alpha: float
    primal: float
    gap: float
    comp: float
    breg_one: float
    breg_symm: float
    h_val: float
    j_val: float
    slack: float
    converged: bool

    def to_csv(self) -> str:
        vals = [
            str(self.n),
            *(
                repr(float(getattr(self, name)))
                for name in (
                    "delta",
                    "eta",
                    "alpha",
                    "primal",
                    "gap",
                    "comp",
                    "breg_one",
                    "breg_symm",
                    "h_val",
                    "j_val",
                    "slack",
                )
            ),
            "true" if self.converged else "false",
        ]
        return ",".join(vals)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    fixture: SourceFixture
    rows: list[RateRow]
    summary: dict
    reports: list = field(default_factory=list, repr=False)
    problems: list = field(default_factory=list, repr=False)


def _kernel(spec: OperatorSpec):
    if spec.kind == "gaussian":
        return gaussian_kernel(spec.sigma)
    if spec.kind == "exponential":
        return exponential_kernel(spec.rate)
    if spec.kind == "constant":
        return constant_kernel(spec.value)
    return None


def build_bracket(spec: OperatorSpec, eps: float | None) -> BracketPair:
    """Bracket at width controlled by eps; eps=None gives the exact truth."""
    if spec.kind == "source_id":
        if eps is None:
            mid = 0.5 * (spec.a_lower + spec.a_upper)
            return source_identification_bracket(mid, mid, spec.n, spec.length)
        return source_identification_bracket(
            spec.a_lower, spec.a_upper, spec.n, spec.length
        )
    k = _kernel(spec)
    if eps is None:
        return degenerate_bracket(integral_operator(k, spec.n, length=spec.length))
    if spec.bracket == "kernel_bounds":
        return bracket_from_kernel_bounds(
            lambda x, xi: (1.0 - eps) * k(x, xi),
            lambda x, xi: (1.0 + eps) * k(x, xi),
            spec.n,
            length=spec.length,
            k_truth=k,
        )
    if spec.bracket == "riemann":
        return bracket_from_riemann(k, spec.n, spec.coarse_factor, spec.length)
    raise ConfigError(f"bracket mode {spec.bracket!r} has no width schedule")


def make_omega(cfg: ExperimentConfig, m: int) -> np.ndarray:
    """Gaussian bump source element on the data grid (scaled later)."""
    x = (np.arange(m) + 0.5) * (cfg.operator.length / m)
    w = max(cfg.omega_width, 1e-6)
    return np.exp(-((x - cfg.omega_center) ** 2) / (2.0 * w**2))


def build_fixture(cfg: ExperimentConfig) -> SourceFixture:
    base = build_bracket(cfg.operator, None)
    if cfg.regulariser.name == "l1":
        if cfg.u_dagger is None:
            raise ConfigError("[source] u_dagger is required for l1 regularisation")
        return make_source_fixture(
            base, cfg.regulariser, u_dagger=np.asarray(cfg.u_dagger, dtype=float)
        )
    omega = make_omega(cfg, base.shape[0])
    fx = make_source_fixture(base, cfg.regulariser, omega=omega)
    mass = fx.f_bar.mass
    if mass <= 0:
        raise ConfigError("source fixture has nonpositive data mass")
    return make_source_fixture(base, cfg.regulariser, omega=omega / mass)


def exact_penalisation_threshold(fid, fixture: SourceFixture, dx: float):
    """Largest constant alpha for which the one-homogeneous theory applies.

    Returns None for fidelities without a one-homogeneous coercivity bound;
    inf for the ball indicator (alpha does not matter there).
    """
    q0 = fixture.e_star_mu
    if isinstance(fid, BallIndicator):
        return np.inf
    if isinstance(fid, PowerNormFidelity) and fid.lam == 1.0:
        dual = "max" if fid.norm_kind == "l1" else "l2"
        qn = norm(q0, dx, dual)
        return np.inf if qn == 0 else 1.0 / qn
    if isinstance(fid, TotalVariationFidelity):
        qn = norm(q0, dx, "max")
        return np.inf if qn == 0 else 0.5 / qn
    if isinstance(fid, Wasserstein1D):
        qn = fid.dual_violation(q0, dx)
        return np.inf if qn == 0 else 1.0 / qn
    return None


def _schedule(cfg: ExperimentConfig) -> Schedule | None:
    if cfg.alpha_rule == "discrepancy":
        return None
    params = cfg.alpha_params
    return Schedule(
        kind=cfg.alpha_rule,
        a=float(params.get("a", 1.0)),
        p=float(params.get("p", 0.5)),
        c=float(params.get("c", 1.0)),
        table=params.get("table"),
    )


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Execute the configured sweep; returns rows, summary, and reports."""
    fixture = build_fixture(cfg)
    fid = cfg.fidelity
    reg = cfg.regulariser
    dx_u = fixture.u_dagger.grid_spacing
    dx_v = fixture.f_bar.grid_spacing
    f_bar = fixture.f_bar.values

    rng = np.random.default_rng(cfg.seed)
    direction = rng.standard_normal(f_bar.size)
    direction /= np.max(np.abs(direction))

    schedule = _schedule(cfg)
    tau = float(cfg.alpha_params.get("tau", 1.5))
    count = len(cfg.deltas)
    eps_list = cfg.operator.eps or [None] * count

    def solve_point(i: int):
        try:
            return _solve_point(i)
        except LatticeRegError as exc:
            exc.args = (f"row {i + 1}: {exc}",)
            raise

    def _solve_point(i: int):
        delta_n = cfg.deltas[i]
        bracket_n = build_bracket(cfg.operator, eps_list[i])
        eta_n = 0.0 if eps_list[i] is None else bracket_n.width("max")
        fid_n = fid.with_noise_level(delta_n)
        f_n = fid_n.calibrate_noise(f_bar, direction, delta_n, dx_v)
        if schedule is not None:
            alpha_n = apriori_alpha(schedule, delta_n, i)
            problem = Problem(bracket_n, fid_n, reg, f_n, alpha_n)
            report = solve(problem, cfg.solver)
        else:
            template = Problem(bracket_n, fid_n, reg, f_n, 1.0)
            alpha_n, report, _ = discrepancy_alpha(
                template,
                f_n,
                delta_n,
                tau=tau,
                options=cfg.solver,
                alpha0=cfg.alpha_params.get("alpha0"),
                expand_factor=float(cfg.alpha_params.get("expand_factor", 10.0)),
                max_expand=int(cfg.alpha_params.get("max_expand", 40)),
                band_ratio=float(cfg.alpha_params.get("band_ratio", 1.05)),
            )
            problem = Problem(bracket_n, fid_n, reg, f_n, alpha_n)
        return i, delta_n, eta_n, alpha_n, problem, report

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(solve_point, range(count)))
    else:
        points = [solve_point(i) for i in range(count)]
    points.sort(key=lambda item: item[0])

    rows: list[RateRow] = []
    reports = []
    problems = []
    u_sup = 0.0
    for _, delta_n, eta_n, alpha_n, problem, report in points:
        u_sup = max(u_sup, norm(report.u, dx_u, "max"))
        v_hat = report.aux.get("v_projected", report.v)
        h_val = problem.fidelity.eval_relaxed(v_hat, problem.data, dx_v)
        j_val = reg.eval(report.u, dx_u)
        breg_one = bregman_one_sided(
            reg, report.u, fixture.u_dagger.values, fixture.p_dagger.values,
            dx_u, check_tol=None,
        )
        p_n = -b_star_mu(problem, *report.mu)
        breg_symm = bregman_symmetric(
            reg, report.u, fixture.u_dagger.values, p_n, fixture.p_dagger.values,
            dx_u, check_tol=None,
        )
        rows.append(
            RateRow(
                n=len(rows) + 1,
                delta=delta_n,
                eta=eta_n,
                alpha=alpha_n,
                primal=report.primal_value,
                gap=report.gap,
                comp=report.complementarity,
                breg_one=breg_one,
                breg_symm=breg_symm,
                h_val=h_val,
                j_val=j_val,
                slack=np.nan,
                converged=report.converged,
            )
        )
        reports.append(report)
        problems.append(problem)

    c_const = rate_constant(fixture, u_sup, dx_v)
    worst_slack = np.inf
    for row, problem in zip(rows, problems):
        rhs = rate_bound_rhs(
            problem.fidelity, fixture, problem.data, row.alpha, row.delta,
            row.eta, c_const,
        )
        row.slack = min(rhs - row.breg_one, rhs - row.breg_symm)
        if row.converged:
            worst_slack = min(worst_slack, row.slack)

    summary: dict = {
        "name": cfg.name,
        "seed": cfg.seed,
        "fidelity": fid.name,
        "regulariser": reg.name,
        "alpha_rule": cfg.alpha_rule,
        "target": cfg.target,
        "rows": len(rows),
        "converged_rows": sum(r.converged for r in rows),
        "c_const": c_const,
        "sup_u_norm": u_sup,
        "worst_slack": worst_slack,
        "slack_ok": bool(worst_slack >= -1e-6),
    }

    threshold = exact_penalisation_threshold(fid, fixture, dx_v)
    if threshold is not None:
        summary["exact_penalisation_threshold"] = threshold
        if cfg.alpha_rule == "constant" and cfg.check_threshold:
            c_val = float(cfg.alpha_params.get("c", 1.0))
            summary["alpha_below_threshold"] = bool(c_val <= threshold)

    if cfg.alpha_rule == "discrepancy":
        j_truth = reg.eval(fixture.u_dagger.values, dx_u)
        excess = max(
            (row.j_val - j_truth) for row in rows if row.converged
        ) if any(r.converged for r in rows) else np.nan
        pairings = []
        bands = []
        for row, report in zip(rows, reports):
            if not row.converged:
                continue
            v_hat = report.aux.get("v_projected", report.v)
            pairings.append(
                inner(report.e_star_mu, f_bar - v_hat, dx_v)
            )
            bands.append(row.delta <= row.h_val <= tau * row.delta + 1e-9)
        summary["max_j_excess"] = excess
        summary["max_dual_pairing"] = max(pairings) if pairings else np.nan
        summary["discrepancy_band_ok"] = bool(all(bands)) if bands else False

    converged = [r for r in rows if r.converged]
    xs_key = "delta" if cfg.target == "delta" else "eta"
    points_fit = [(getattr(r, xs_key), r.breg_one) for r in converged]
    try:
        fit = fit_rate_slope(points_fit)
        summary["slope"] = fit.slope
        summary["intercept"] = fit.intercept
        summary["r_squared"] = fit.r_squared
        summary["fit_note"] = fit.note
        summary["slope_ok"] = bool(cfg.slope_lo <= fit.slope <= cfg.slope_hi)
    except ValueError as exc:
        summary["fit_error"] = str(exc)
        summary["slope"] = np.nan
        summary["slope_ok"] = False

    passed = summary["slack_ok"] and summary["slope_ok"]
    if cfg.alpha_rule == "discrepancy":
        passed = passed and summary["discrepancy_band_ok"]
        passed = passed and (summary["max_j_excess"] <= 1e-6)
        passed = passed and (summary["max_dual_pairing"] <= 1e-6)
    summary["passed"] = bool(passed)
    return ExperimentResult(cfg, fixture, rows, summary, reports, problems)


# ---------------------------------------------------------------------------
# outputs


def emit_outputs(result: ExperimentResult, out_dir, plot: bool = False) -> dict:
    """Write rows.csv, summary.csv, and optionally plot.svg; returns paths."""
    if not result.rows:
        raise ValueError("no rows to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_path = out_dir / "rows.csv"
    with open(rows_path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in result.rows:
            fh.write(row.to_csv() + "\n")

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("key,value\n")
        for key in sorted(result.summary):
            value = result.summary[key]
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            fh.write(f"{key},{text}\n")

    paths = {"rows": rows_path, "summary": summary_path}
    if plot:
        paths["plot"] = _write_plot(result, out_dir / "plot.svg")
    return paths


def _write_plot(result: ExperimentResult, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    key = "delta" if result.config.target == "delta" else "eta"
    xs = [getattr(r, key) for r in result.rows if r.converged and r.breg_one > 0]
    ys = [r.breg_one for r in result.rows if r.converged and r.breg_one > 0]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(xs, ys, "o", label="measured")
    slope = result.summary.get("slope")
    intercept = result.summary.get("intercept")
    if xs and slope is not None and np.isfinite(slope):
        grid = np.array([min(xs), max(xs)])
        ax.loglog(
            grid,
            np.exp(intercept) * grid**slope,
            "-",
            label=f"fit: slope {slope:.3f}",
        )
    ax.set_xlabel(key)
    ax.set_ylabel("Bregman distance")
    ax.set_title(result.config.name)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def read_rows_csv(path) -> list[RateRow]:
    """Parse a rows.csv back into RateRow objects (round-trip helper)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 13:
                raise ValueError(f"malformed row {line!r}")
            rows.append(
                RateRow(
                    n=int(parts[0]),
                    delta=float(parts[1]),
                    eta=float(parts[2]),
                    alpha=float(parts[3]),
                    primal=float(parts[4]),
                    gap=float(parts[5]),
                    comp=float(parts[6]),
                    breg_one=float(parts[7]),
                    breg_symm=float(parts[8]),
                    h_val=float(parts[9]),
                    j_val=float(parts[10]),
                    slack=float(parts[11]),
                    converged=parts[12] == "true",
                )
            )
    return rows
