"""Data-fidelity functionals H(v | f) and their convex calculus.

Every fidelity provides a strict evaluation (enforcing its domain: sign,
mass, absolute continuity), a relaxed evaluation (the convex functional the
solver actually minimises, with the probability-simplex constraint dropped),
a pointwise prox where one exists, the convex conjugate against the
dx-weighted pairing, and noise calibration by scalar bisection. Divergences
are built from a phi function via d(v|f) = dx * sum f_i phi(v_i / f_i); the
conjugate is then dx * sum f_i phi*(q_i), exact for the mass-unconstrained
divergence. Sums and infimal convolutions of fidelities are first-class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import lambertw

from .errors import CalibrationError, UnsupportedProxError
from .lattice import dual_norm_kind, inner, norm

TOL_MASS = 1e-9
_INDICATOR_RTOL = 1e-9


def _check_inputs(*arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if np.any(np.isnan(a)):
            raise ValueError("fidelity inputs must not contain NaN")
        out.append(a)
    if len({a.shape for a in out}) > 1:
        raise ValueError("fidelity arguments must share a shape")
    return out


def _bracketed_newton(g, gprime, lo, hi, tol, max_iter=120):
    """Vectorized safeguarded Newton for componentwise increasing g.

    Assumes g(lo) <= 0 <= g(hi) componentwise; keeps the bracket and falls
    back to bisection whenever the Newton step leaves it.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    v = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gv = g(v)
        if np.all(np.abs(gv) <= tol):
            break
        lo = np.where(gv <= 0.0, v, lo)
        hi = np.where(gv > 0.0, v, hi)
        d = gprime(v)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            cand = v - gv / d
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        v = np.where(bad, 0.5 * (lo + hi), cand)
    return v


@dataclass
class PhiFunction:
    """Scalar entropy phi defining a divergence, with its conjugate.

    phi must be convex on [0, inf) with phi(1) = 0; phi_star is its
    conjugate, star_domain_hi the supremum of the conjugate's domain
    (np.inf when the conjugate is finite everywhere). phi_at_zero is the
    limit of phi at 0+ (np.inf when the divergence forbids zeros).
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    phi_double_prime: Callable[[np.ndarray], np.ndarray]
    phi_star: Callable[[np.ndarray], np.ndarray]
    phi_at_zero: float
    star_domain_hi: float = np.inf

    def remainder(self, x):
        """r(x) = phi*(x) - x, the superlinear part of the conjugate."""
        return self.phi_star(np.asarray(x, dtype=float)) - np.asarray(x, dtype=float)


def _kl_phi():
    def phi(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x * np.log(x) - x + 1.0
        return np.where(x == 0.0, 1.0, out)

    return PhiFunction(
        name="kl",
        phi=phi,
        phi_prime=np.log,
        phi_double_prime=lambda x: 1.0 / x,
        phi_star=lambda q: np.expm1(q),
        phi_at_zero=1.0,
    )


def _chi2_phi():
    def star(q):
        q = np.asarray(q, dtype=float)
        return np.where(q >= -2.0, q + q**2 / 4.0, -1.0)

    return PhiFunction(
        name="chi2",
        phi=lambda x: (x - 1.0) ** 2,
        phi_prime=lambda x: 2.0 * (x - 1.0),
        phi_double_prime=lambda x: np.full_like(np.asarray(x, float), 2.0),
        phi_star=star,
        phi_at_zero=1.0,
    )


def _hellinger2_phi():
    def star(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = q / (1.0 - q)
        return np.where(q < 1.0, out, np.inf)

    return PhiFunction(
        name="hellinger2",
        phi=lambda x: (np.sqrt(x) - 1.0) ** 2,
        phi_prime=lambda x: 1.0 - 1.0 / np.sqrt(x),
        phi_double_prime=lambda x: 0.5 * x**-1.5,
        phi_star=star,
        phi_at_zero=1.0,
        star_domain_hi=1.0,
    )


def _reverse_kl_phi():
    def star(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.log1p(-q)
        return np.where(q < 1.0, out, np.inf)

    return PhiFunction(
        name="reverse_kl",
        phi=lambda x: x - 1.0 - np.log(x),
        phi_prime=lambda x: 1.0 - 1.0 / x,
        phi_double_prime=lambda x: x**-2.0,
        phi_star=star,
        phi_at_zero=np.inf,
        star_domain_hi=1.0,
    )


PHI_FUNCTIONS: dict[str, Callable[[], PhiFunction]] = {
    "kl": _kl_phi,
    "chi2": _chi2_phi,
    "hellinger2": _hellinger2_phi,
    "reverse_kl": _reverse_kl_phi,
}


def register_phi(name: str, factory: Callable[[], PhiFunction]) -> None:
    """Extension point: add a named phi for phi_generic fidelities."""
    PHI_FUNCTIONS[name] = factory


class Fidelity:
    """Base class; subclasses fill in the relaxed evaluation and calculus."""

    name = "fidelity"
    prox_supported = False
    requires_probability = False
    coercive = True

    def eval(self, v, f, dx: float, strict: bool = True) -> float:
        """H(v | f); strict mode enforces the domain flags."""
        v, f = _check_inputs(v, f)
        if strict and self.requires_probability:
            if np.min(v) < -1e-15:
                return np.inf
            v = np.maximum(v, 0.0)
            if abs(dx * (v.sum() - f.sum())) > TOL_MASS:
                return np.inf
        return self._relaxed(v, f, dx)

    def eval_relaxed(self, v, f, dx: float) -> float:
        """The mass-unconstrained convex functional used by the solver."""
        v, f = _check_inputs(v, f)
        return self._relaxed(v, f, dx)

    def _relaxed(self, v, f, dx):  # pragma: no cover - abstract
        raise NotImplementedError

    def prox(self, w, f, dx: float, tau: float) -> np.ndarray:
        """argmin_v 0.5 ||v - w||^2 + tau H(v | f), dx-weighted norm."""
        raise UnsupportedProxError(
            f"{self.name} has no pointwise prox; the solver handles it by splitting"
        )

    def conjugate(self, q, f, dx: float) -> float:  # pragma: no cover - abstract
        """H*(q | f) = sup_v <q, v> - H(v | f) against the dx-weighted pairing."""
        raise NotImplementedError

    def project_noise(self, candidate, f_bar, dx: float) -> np.ndarray:
        """Map a perturbed datum back into the fidelity's domain."""
        if self.requires_probability:
            v = np.maximum(candidate, 0.0)
            mass = dx * v.sum()
            target = dx * np.asarray(f_bar, float).sum()
            if mass <= 0.0:
                raise CalibrationError("perturbed datum has no mass left")
            return v * (target / mass)
        return np.asarray(candidate, dtype=float)

    def with_noise_level(self, delta: float) -> "Fidelity":
        """Fidelity instance appropriate for data at noise level delta.

        Identity for most fidelities; the ball indicator reparameterises
        its radius so the clean datum stays feasible at every level.
        """
        return self

    def domain_direction(self, direction, f_bar) -> np.ndarray:
        """Renormalise a raw unit direction to the fidelity's domain.

        Divergences scale componentwise by f_bar so the perturbed ray stays
        inside the positive cone for a full unit of t; everything else takes
        the direction as is.
        """
        direction = np.asarray(direction, dtype=float)
        if self.requires_probability:
            return direction * np.asarray(f_bar, dtype=float)
        return direction

    def noise_level(self, f_bar, f_n, dx: float) -> float:
        """The quantity calibrated against delta (H(f_bar | f_n) by default)."""
        return self.eval_relaxed(f_bar, f_n, dx)

    def calibrate_noise(
        self,
        f_bar,
        direction,
        delta: float,
        dx: float,
        tol_rel: float = 1e-10,
        max_expand: int = 200,
    ) -> np.ndarray:
        """Find f_n = project(f_bar + t * direction) with noise level delta.

        Scalar bisection on t; the perturbation is re-projected into the
        fidelity domain at every trial.

        Raises
        ------
        CalibrationError
            If the requested level cannot be bracketed along the direction.
        """
        f_bar, direction = _check_inputs(f_bar, direction)
        if delta <= 0:
            raise CalibrationError("delta must be > 0")
        direction = self.domain_direction(direction, f_bar)
        if not np.any(direction != 0.0):
            raise CalibrationError("noise direction is identically zero")

        def level(t: float) -> tuple[float, np.ndarray]:
            f_n = self.project_noise(f_bar + t * direction, f_bar, dx)
            return self.noise_level(f_bar, f_n, dx), f_n

        t_hi = delta / max(norm(direction, dx, "max"), 1e-300)
        g_hi, f_hi = level(t_hi)
        expansions = 0
        while g_hi < delta:
            t_hi *= 2.0
            g_hi, f_hi = level(t_hi)
            expansions += 1
            if expansions > max_expand:
                raise CalibrationError(
                    f"noise level {delta:g} unreachable along this direction "
                    f"(plateau at {g_hi:g})"
                )
        t_lo = 0.0
        f_best, g_best = f_hi, g_hi
        for _ in range(200):
            if abs(g_best - delta) <= tol_rel * delta:
                break
            t_mid = 0.5 * (t_lo + t_hi)
            if t_mid == t_lo or t_mid == t_hi:
                break
            g_mid, f_mid = level(t_mid)
            if not np.isfinite(g_mid) or g_mid >= delta:
                t_hi, g_best, f_best = t_mid, g_mid, f_mid
            else:
                t_lo = t_mid
        if not np.isfinite(g_best) or abs(g_best - delta) > 1e6 * tol_rel * delta:
            raise CalibrationError(
                f"bisection stalled at level {g_best:g}, target {delta:g}"
            )
        return f_best

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"


class PowerNormFidelity(Fidelity):
    """H(v | f) = (1/lam) ||v - f||^lam for the dx-weighted norm.

    lam = 2 is the squared-norm fidelity, lam = 1 the plain norm distance
    (one-homogeneous, so constant-alpha exact penalisation applies).
    """

    def __init__(self, lam: float = 2.0, norm_kind: str = "l2"):
        if lam < 1.0:
            raise ValueError("lam must be >= 1")
        if norm_kind not in ("l2", "l1"):
            raise ValueError("sq_norm supports norm kinds 'l2' and 'l1'")
        if norm_kind == "l1" and lam != 1.0:
            raise ValueError("the l1 variant is only one-homogeneous (lam = 1)")
        self.lam = float(lam)
        self.norm_kind = norm_kind
        self.name = f"sq_norm({lam:g})" if norm_kind == "l2" else "sq_norm(1,l1)"
        self.prox_supported = True

    def _relaxed(self, v, f, dx):
        return norm(v - f, dx, self.norm_kind) ** self.lam / self.lam

    def prox(self, w, f, dx, tau):
        w, f = _check_inputs(w, f)
        if self.norm_kind == "l1":
            # dx cancels between the weighted square and the weighted l1 term
            return f + np.sign(w - f) * np.maximum(np.abs(w - f) - tau, 0.0)
        z = w - f
        r = norm(z, dx, "l2")
        if r == 0.0:
            return f.copy()
        lam = self.lam
        if lam == 2.0:
            s = r / (1.0 + tau)
        elif lam == 1.0:
            s = max(0.0, r - tau)
        else:
            s = _bracketed_newton(
                lambda s: s + tau * s ** (lam - 1.0) - r,
                lambda s: 1.0 + tau * (lam - 1.0) * s ** (lam - 2.0),
                np.zeros(1),
                np.full(1, r),
                tol=1e-14 * (1.0 + r),
            )[0]
        return f + (s / r) * z

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        qn = norm(q, dx, dual_norm_kind(self.norm_kind))
        pairing = inner(q, f, dx)
        if self.lam == 1.0:
            if qn > 1.0 + _INDICATOR_RTOL:
                return np.inf
            return pairing
        lam_star = self.lam / (self.lam - 1.0)
        return qn**lam_star / lam_star + pairing


class PhiDivergence(Fidelity):
    """Divergence d(v|f) = dx * sum f_i phi(v_i / f_i) for a convex phi."""

    requires_probability = True

    def __init__(self, phi: PhiFunction, name: str | None = None):
        self.phi = phi
        self.name = name or phi.name
        self.prox_supported = True

    def _relaxed(self, v, f, dx):
        if np.min(v) < 0.0 or np.min(f) < 0.0:
            return np.inf
        pos = f > 0.0
        if np.any(v[~pos] > 0.0):
            return np.inf  # absolute continuity: v must vanish where f does
        vv, ff = v[pos], f[pos]
        zero = vv == 0.0
        if np.any(zero) and not np.isfinite(self.phi.phi_at_zero):
            return np.inf
        terms = np.empty_like(vv)
        terms[zero] = self.phi.phi_at_zero
        nz = ~zero
        terms[nz] = self.phi.phi(vv[nz] / ff[nz])
        val = dx * float(np.dot(ff, terms))
        return val if np.isfinite(val) else np.inf

    def _prox_positive(self, w, f, tau):
        """Componentwise solve v - w + tau * phi'(v/f) = 0 on f > 0."""
        if self.phi.name == "kl":
            # closed form via Lambert W: v = tau * W(exp(w/tau) * f / tau)
            c = w / tau + np.log(f / tau)
            v = np.empty_like(w)
            small = c < 650.0
            v[small] = tau * np.real(lambertw(np.exp(c[small])))
            big = ~small
            if np.any(big):
                cb = c[big]
                lw = cb - np.log(cb)
                lw = lw + np.log(cb / lw)  # one iteration of the asymptotic fix
                v[big] = tau * lw
            for _ in range(3):  # polish to the stationarity residual
                g = v - w + tau * np.log(v / f)
                v = np.maximum(v - g / (1.0 + tau / v), 1e-300)
            return v
        if self.phi.name == "chi2":
            return np.maximum(0.0, f * (w + 2.0 * tau) / (f + 2.0 * tau))

        def g(v):
            return v - w + tau * self.phi.phi_prime(v / f)

        def gp(v):
            return 1.0 + (tau / f) * self.phi.phi_double_prime(v / f)

        hi = np.maximum(w, 0.0) + tau + f + 1.0
        lo = np.minimum(f, 1.0) * 1e-24
        for _ in range(8):  # push lo down until it brackets the root
            bad = g(lo) > 0.0
            if not np.any(bad):
                break
            lo = np.where(bad, lo * 1e-6, lo)
        return _bracketed_newton(g, gp, lo, hi, tol=1e-12 * (1.0 + np.abs(w)))

    def prox(self, w, f, dx, tau):
        w, f = _check_inputs(w, f)
        v = np.zeros_like(w)
        pos = f > 0.0
        if np.any(pos):
            v[pos] = self._prox_positive(w[pos], f[pos], float(tau))
        return v

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        pos = f > 0.0
        if np.any(q[pos] > self.phi.star_domain_hi + _INDICATOR_RTOL):
            return np.inf
        vals = self.phi.phi_star(np.minimum(q[pos], self.phi.star_domain_hi))
        out = dx * float(np.dot(f[pos], vals))
        return out if np.isfinite(out) else np.inf


class TotalVariationFidelity(Fidelity):
    """H(v | f) = 0.5 * ||v - f||_1 (dx-weighted), the measure-space distance."""

    name = "tv"
    prox_supported = False

    def _relaxed(self, v, f, dx):
        return 0.5 * norm(v - f, dx, "l1")

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        if np.max(np.abs(q)) > 0.5 + _INDICATOR_RTOL:
            return np.inf
        return inner(q, f, dx)


class Wasserstein1D(Fidelity):
    """1D Wasserstein-1 distance via the CDF formula.

    H(v | f) = dx * sum_i |dx * cumsum(v - f)_i|; on probability vectors
    this is the exact transport cost for the distance |x - y| on the grid.
    The relaxed form extends it to arbitrary vectors (the dual-norm view),
    which is what the solver minimises.
    """

    name = "w1"
    prox_supported = False
    requires_probability = True

    def cdf_matrix(self, n: int, dx: float) -> np.ndarray:
        return dx * np.tril(np.ones((n, n)))

    def _relaxed(self, v, f, dx):
        cdf = dx * np.cumsum(v - f)
        return dx * float(np.sum(np.abs(cdf)))

    def dual_violation(self, q, dx: float) -> float:
        """max-norm of (S*)^{-1} q; the conjugate is finite iff this is <= 1."""
        q = np.asarray(q, dtype=float)
        diff = np.append(q[:-1] - q[1:], q[-1])
        return float(np.max(np.abs(diff)) / dx)

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        if self.dual_violation(q, dx) > 1.0 + _INDICATOR_RTOL:
            return np.inf
        return inner(q, f, dx)


class BallIndicator(Fidelity):
    """Indicator of the radius-delta ball around the datum.

    H(v | f) = 0 if ||v - f|| <= delta else +inf; the norm kind is
    configurable. The regularisation weight alpha has no effect on the
    minimisers for this fidelity. Noise is calibrated in the underlying
    norm (the fidelity itself is {0, inf}-valued).
    """

    coercive = False

    def __init__(self, delta: float, norm_kind: str = "l2"):
        if delta <= 0:
            raise ValueError("ball radius must be > 0")
        if norm_kind not in ("l2", "max", "l1"):
            raise ValueError("ball supports norm kinds 'l2', 'max', 'l1'")
        self.delta = float(delta)
        self.norm_kind = norm_kind
        self.name = f"ball({delta:g},{norm_kind})"
        self.prox_supported = True

    def _relaxed(self, v, f, dx):
        d = norm(v - f, dx, self.norm_kind)
        return 0.0 if d <= self.delta * (1.0 + _INDICATOR_RTOL) + 1e-15 else np.inf

    def prox(self, w, f, dx, tau):
        w, f = _check_inputs(w, f)
        z = w - f
        if self.norm_kind == "l2":
            r = norm(z, dx, "l2")
            if r > self.delta:
                z = z * (self.delta / r)
            return f + z
        if self.norm_kind == "max":
            return f + np.clip(z, -self.delta, self.delta)
        # weighted-l1 ball: project coordinates onto sum |z_i| <= delta / dx
        radius = self.delta / dx
        if np.sum(np.abs(z)) <= radius:
            return f + z
        a = np.sort(np.abs(z))[::-1]
        cum = np.cumsum(a)
        k = np.arange(1, a.size + 1)
        idx = np.nonzero(a - (cum - radius) / k > 0)[0][-1]
        theta = (cum[idx] - radius) / (idx + 1.0)
        return f + np.sign(z) * np.maximum(np.abs(z) - theta, 0.0)

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        return self.delta * norm(q, dx, dual_norm_kind(self.norm_kind)) + inner(
            q, f, dx
        )

    def noise_level(self, f_bar, f_n, dx):
        return norm(np.asarray(f_n, float) - np.asarray(f_bar, float), dx, self.norm_kind)

    def with_noise_level(self, delta: float) -> "BallIndicator":
        return BallIndicator(delta, self.norm_kind)


class SumFidelity(Fidelity):
    """H = H1 + H2 on a shared datum.

    The conjugate is the proportional-split upper bound
    min_{lam in [0,1]} H1*(lam q) + H2*((1-lam) q), evaluated by line
    search; the solver certifies its duality gap with the exact split it
    maintains internally.
    """

    def __init__(self, f1: Fidelity, f2: Fidelity):
        self.f1 = f1
        self.f2 = f2
        self.name = f"sum({f1.name},{f2.name})"
        self.prox_supported = False
        self.requires_probability = f1.requires_probability or f2.requires_probability
        self.coercive = f1.coercive or f2.coercive

    def _relaxed(self, v, f, dx):
        return self.f1.eval_relaxed(v, f, dx) + self.f2.eval_relaxed(v, f, dx)

    def eval(self, v, f, dx, strict=True):
        a = self.f1.eval(v, f, dx, strict=strict)
        b = self.f2.eval(v, f, dx, strict=strict)
        return a + b

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)

        def val(lam: float) -> float:
            return self.f1.conjugate(lam * q, f, dx) + self.f2.conjugate(
                (1.0 - lam) * q, f, dx
            )

        grid = np.linspace(0.0, 1.0, 33)
        vals = np.array([val(t) for t in grid])
        if not np.any(np.isfinite(vals)):
            return np.inf
        i = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        fc, fd = val(c), val(d)
        for _ in range(120):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = val(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = val(d)
            if b - a < 1e-13:
                break
        return min(val(0.5 * (a + b)), float(np.min(vals)))


class InfConvFidelity(Fidelity):
    """Infimal convolution H(v|f) = inf_w H1(w | 0) + H2(v - w | f).

    H1 must be coercive so the infimum is attained; the conjugate is then
    exactly H1*(q | 0) + H2*(q | f). Evaluation runs an inner proximal
    (Douglas-Rachford) loop on w; the solver never calls it, lifting w as
    an explicit primal variable instead.
    """

    def __init__(self, f1: Fidelity, f2: Fidelity):
        if not f1.coercive:
            raise ValueError("infconv needs a coercive first component")
        if not (f1.prox_supported and f2.prox_supported):
            raise ValueError("infconv evaluation needs prox-supported components")
        self.f1 = f1
        self.f2 = f2
        self.name = f"infconv({f1.name},{f2.name})"
        self.prox_supported = False
        self.requires_probability = False
        self.coercive = f1.coercive and f2.coercive

    def _relaxed(self, v, f, dx):
        zero = np.zeros_like(v)
        tau = 1.0
        x = np.zeros_like(v)
        w = x
        prev = None
        for _ in range(20000):
            w = self.f1.prox(x, zero, dx, tau)
            refl = 2.0 * w - x
            # prox of w -> H2(v - w | f) by reflection through v
            y = v - self.f2.prox(v - refl, f, dx, tau)
            x = x + y - w
            if prev is not None and np.max(np.abs(w - prev)) <= 1e-12 * (
                1.0 + np.max(np.abs(v))
            ):
                break
            prev = w
        return self.f1.eval_relaxed(w, zero, dx) + self.f2.eval_relaxed(v - w, f, dx)

    def conjugate(self, q, f, dx):
        q, f = _check_inputs(q, f)
        zero = np.zeros_like(f)
        return self.f1.conjugate(q, zero, dx) + self.f2.conjugate(q, f, dx)


def combine_sum(f1: Fidelity, f2: Fidelity) -> SumFidelity:
    """Sum of two fidelities; domains intersect (both contain the datum)."""
    return SumFidelity(f1, f2)


def combine_infconv(f1: Fidelity, f2: Fidelity) -> InfConvFidelity:
    """Infimal convolution; raises if f1 is not flagged coercive."""
    return InfConvFidelity(f1, f2)


def make_fidelity(name: str, **params) -> Fidelity:
    """Factory keyed by the config-file fidelity names."""
    if name == "sq_norm":
        return PowerNormFidelity(
            lam=float(params.get("lambda", params.get("lam", 2.0))),
            norm_kind=params.get("norm", "l2"),
        )
    if name in ("kl", "chi2", "hellinger2"):
        return PhiDivergence(PHI_FUNCTIONS[name]())
    if name == "phi_generic":
        phi = params["phi"]
        if isinstance(phi, str):
            phi = PHI_FUNCTIONS[phi]()
        return PhiDivergence(phi, name=f"phi_generic({phi.name})")
    if name == "tv":
        return TotalVariationFidelity()
    if name == "w1":
        return Wasserstein1D()
    if name == "ball":
        return BallIndicator(
            delta=float(params["delta"]), norm_kind=params.get("norm", "l2")
        )
    if name == "sum":
        return combine_sum(params["a"], params["b"])
    if name == "infconv":
        return combine_infconv(params["a"], params["b"])
    raise ValueError(f"unknown fidelity {name!r}")
