"""Config parsing: fidelity descriptors, experiment TOML files, problem records.

Fidelity descriptors are compact strings such as "kl", "ball(0.05,l2)",
"sq_norm(1,l1)" or "sum(kl,tv)"; they round-trip through Fidelity.name.
Experiment configs are TOML files with the sections documented on
ExperimentConfig. Tiny problems (for the oracle suite) serialise to flat
"name = value" text records.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .fidelities import Fidelity, make_fidelity
from .lattice import BracketPair, DenseOperator
from .regularisers import Regulariser, make_regulariser
from .solver import Problem, SolverOptions


def _split_top_level(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced parentheses in {text!r}")
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in {text!r}")
    parts.append(text[start:])
    return [p.strip() for p in parts]


def parse_fidelity(descriptor: str) -> Fidelity:
    """Build a fidelity from its descriptor string (inverse of .name)."""
    desc = descriptor.strip()
    if "(" not in desc:
        name, args = desc, []
    else:
        if not desc.endswith(")"):
            raise ConfigError(f"malformed fidelity descriptor {descriptor!r}")
        name, inner = desc.split("(", 1)
        name = name.strip()
        args = _split_top_level(inner[:-1])
    try:
        if name == "sq_norm":
            lam = float(args[0]) if args else 2.0
            kind = args[1] if len(args) > 1 else "l2"
            return make_fidelity("sq_norm", lam=lam, norm=kind)
        if name == "ball":
            if not args:
                raise ConfigError("ball descriptor needs a radius: ball(delta[,norm])")
            kind = args[1] if len(args) > 1 else "l2"
            return make_fidelity("ball", delta=float(args[0]), norm=kind)
        if name == "phi_generic":
            if len(args) != 1:
                raise ConfigError("phi_generic takes one phi name")
            return make_fidelity("phi_generic", phi=args[0])
        if name in ("sum", "infconv"):
            if len(args) != 2:
                raise ConfigError(f"{name} takes exactly two fidelity arguments")
            return make_fidelity(
                name, a=parse_fidelity(args[0]), b=parse_fidelity(args[1])
            )
        if name in ("kl", "chi2", "hellinger2", "tv", "w1"):
            if args:
                raise ConfigError(f"{name} takes no arguments")
            return make_fidelity(name)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad fidelity descriptor {descriptor!r}: {exc}") from exc
    raise ConfigError(f"unknown fidelity {name!r}")


def build_fidelity(section: dict) -> Fidelity:
    """Fidelity from a config table: either a full descriptor in `kind`,
    or a bare name plus parameter keys (delta, norm, lam, phi)."""
    kind = section.get("kind")
    if not isinstance(kind, str):
        raise ConfigError("[fidelity] needs a string `kind`")
    extras = {k: v for k, v in section.items() if k != "kind"}
    if "(" in kind or not extras:
        return parse_fidelity(kind)
    try:
        return make_fidelity(kind, **extras)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad [fidelity] section: {exc}") from exc


def build_regulariser(section: dict) -> Regulariser:
    kind = section.get("kind", "sq_l2")
    nonneg = bool(section.get("nonneg", False))
    try:
        return make_regulariser(kind, nonneg=nonneg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class OperatorSpec:
    kind: str  # gaussian | exponential | constant | source_id
    n: int
    length: float = 1.0
    sigma: float = 0.1
    rate: float = 1.0
    value: float = 1.0
    bracket: str = "exact"  # exact | kernel_bounds | riemann
    eps: list[float] = field(default_factory=list)
    coarse_factor: int = 2
    a_lower: float = 1.0
    a_upper: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "exponential", "constant", "source_id"):
            raise ConfigError(f"unknown operator kind {self.kind!r}")
        if self.bracket not in ("exact", "kernel_bounds", "riemann"):
            raise ConfigError(f"unknown bracket mode {self.bracket!r}")
        if self.n < 1:
            raise ConfigError("operator n must be >= 1")
        if self.bracket == "kernel_bounds" and not self.eps:
            raise ConfigError("kernel_bounds bracketing needs an eps list")


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    TOML sections: top-level `name`/`seed`, [operator], [fidelity],
    [regulariser], [source], [noise], [alpha], [solver], [expect].
    """

    name: str
    seed: int
    operator: OperatorSpec
    fidelity: Fidelity
    regulariser: Regulariser
    omega_center: float
    omega_width: float
    u_dagger: list[float] | None
    deltas: list[float]
    alpha_rule: str  # power | constant | table | discrepancy
    alpha_params: dict
    solver: SolverOptions
    slope_lo: float
    slope_hi: float
    target: str  # delta | eta
    check_threshold: bool

    def __post_init__(self):
        if len(self.deltas) < 4:
            raise ConfigError("need at least 4 noise levels for slope fitting")
        d = np.asarray(self.deltas, dtype=float)
        if np.any(d <= 0):
            raise ConfigError("noise levels must be positive")
        # eta-target sweeps pin delta at a numerically negligible constant
        if self.target == "eta":
            if np.any(np.diff(d) > 0):
                raise ConfigError("noise levels must be nonincreasing")
        elif not np.all(np.diff(d) < 0):
            raise ConfigError("noise levels must be strictly decreasing")
        if self.operator.eps:
            e = np.asarray(self.operator.eps, dtype=float)
            if np.any(np.diff(e) > 0):
                raise ConfigError("bracket widths eps must be nonincreasing")
            if self.target == "eta" and not np.all(np.diff(e) < 0):
                raise ConfigError("eta-target sweeps need strictly decreasing eps")
            if len(self.operator.eps) != len(self.deltas):
                raise ConfigError("eps list must match the noise schedule length")
        if self.alpha_rule not in ("power", "constant", "table", "discrepancy"):
            raise ConfigError(f"unknown alpha rule {self.alpha_rule!r}")
        if self.target not in ("delta", "eta"):
            raise ConfigError(f"unknown slope target {self.target!r}")
        if self.target == "eta" and self.operator.bracket != "kernel_bounds":
            raise ConfigError(
                "eta-target experiments need kernel_bounds bracketing with an eps schedule"
            )


def _section(data: dict, key: str, required: bool = True) -> dict:
    sec = data.get(key)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{key}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{key}] must be a table")
    return dict(sec)


def load_experiment_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file; raises ConfigError."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error in {path}: {exc}") from exc

    op_sec = _section(data, "operator")
    try:
        operator = OperatorSpec(**op_sec)
    except TypeError as exc:
        raise ConfigError(f"bad [operator] section: {exc}") from exc

    source = _section(data, "source", required=False)
    noise = _section(data, "noise")
    alpha = _section(data, "alpha")
    solver_sec = _section(data, "solver", required=False)
    expect = _section(data, "expect", required=False)
    try:
        solver = SolverOptions(**solver_sec)
    except TypeError as exc:
        raise ConfigError(f"bad [solver] section: {exc}") from exc

    rule = alpha.get("rule")
    if not isinstance(rule, str):
        raise ConfigError("[alpha] needs a string `rule`")

    return ExperimentConfig(
        name=str(data.get("name", path.stem)),
        seed=int(data.get("seed", 0)),
        operator=operator,
        fidelity=build_fidelity(_section(data, "fidelity")),
        regulariser=build_regulariser(_section(data, "regulariser")),
        omega_center=float(source.get("omega_center", 0.5)),
        omega_width=float(source.get("omega_width", 0.1)),
        u_dagger=source.get("u_dagger"),
        deltas=[float(x) for x in noise.get("deltas", [])],
        alpha_rule=rule,
        alpha_params={k: v for k, v in alpha.items() if k != "rule"},
        solver=solver,
        slope_lo=float(expect.get("slope_lo", -np.inf)),
        slope_hi=float(expect.get("slope_hi", np.inf)),
        target=str(expect.get("target", "delta")),
        check_threshold=bool(alpha.get("check_threshold", True)),
    )


# ---------------------------------------------------------------------------
# tiny-problem text records (oracle suite)


def _fmt_matrix(mat: np.ndarray) -> str:
    return ";".join(",".join(repr(float(x)) for x in row) for row in np.atleast_2d(mat))


def _parse_matrix(text: str) -> np.ndarray:
    return np.array(
        [[float(tok) for tok in row.split(",")] for row in text.split(";")]
    )


def save_problem(path, name: str, problem: Problem) -> None:
    """Write a problem as a versioned flat text record."""
    br = problem.bracket
    lines = [
        "format = latticereg-problem",
        "version = 1",
        f"name = {name}",
        f"dx_in = {br.dx_in!r}",
        f"dx_out = {br.dx_out!r}",
        f"lower = {_fmt_matrix(br.lower.matrix)}",
        f"upper = {_fmt_matrix(br.upper.matrix)}",
        f"truth = {_fmt_matrix(br.truth.matrix) if br.truth is not None else 'none'}",
        f"alpha = {problem.alpha!r}",
        f"data = {','.join(repr(float(x)) for x in problem.data)}",
        f"fidelity = {problem.fidelity.name}",
        f"regulariser = {problem.regulariser.name}",
        f"nonneg = {'true' if problem.regulariser.nonneg else 'false'}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> tuple[str, Problem]:
    """Read a problem record; raises ConfigError on malformed files."""
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}: malformed line {line!r}")
            fields[key.strip()] = value.strip()
    if fields.get("format") != "latticereg-problem":
        raise ConfigError(f"{path} is not a problem record")
    if fields.get("version") != "1":
        raise ConfigError(f"{path}: unsupported version {fields.get('version')!r}")
    try:
        dx_in = float(fields["dx_in"])
        dx_out = float(fields["dx_out"])
        lower = DenseOperator(_parse_matrix(fields["lower"]), dx_in, dx_out)
        upper = DenseOperator(_parse_matrix(fields["upper"]), dx_in, dx_out)
        truth = (
            None
            if fields["truth"] == "none"
            else DenseOperator(_parse_matrix(fields["truth"]), dx_in, dx_out)
        )
        bracket = BracketPair(lower=lower, upper=upper, truth=truth)
        problem = Problem(
            bracket=bracket,
            fidelity=parse_fidelity(fields["fidelity"]),
            regulariser=make_regulariser(
                fields["regulariser"], nonneg=fields.get("nonneg") == "true"
            ),
            data=np.array([float(tok) for tok in fields["data"].split(",")]),
            alpha=float(fields["alpha"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad problem record ({exc})") from exc
    return fields.get("name", Path(path).stem), problem
