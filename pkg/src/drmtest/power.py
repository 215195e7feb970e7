"""Local power analytics for the DELR test.

Information matrices are expectations under the baseline F_0 computed by
adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad_vec``) after
mapping the support onto a bounded interval. Under the local alternative
beta_k = beta_k* + n_k^{-1/2} c_k the DELR statistic is asymptotically
noncentral chi-square with

    delta2 = eta' {Lambda - Lambda J (J' Lambda J)^{-1} J' Lambda} eta,
    eta    = (rho_1^{-1/2} c_1, ..., rho_m^{-1/2} c_m),

or eta' Lambda eta when the hypothesis pins down all of beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy import integrate, special

from .chisq import chi2_quantile, noncentral_chi2_sf
from .infer import InfoMatrix
from .model import BasisFn, ConstraintSpec, ParameterError, Theta, as_basis

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
NORMALIZATION_TOL = 1e-8
MAX_SAMPLE_SIZE = 10**7


class DivergentIntegralError(ValueError):
    """An expectation under F_0 does not exist."""


class UnreachablePowerError(ValueError):
    def __init__(self, message, achieved_power=None):
        super().__init__(message)
        self.achieved_power = achieved_power


# ---------------------------------------------------------------------------
# Baseline distributions
# ---------------------------------------------------------------------------

_FAMILY_ARITY = {"normal": 2, "gamma": 2, "lognormal": 2, "pareto": 1, "weibull": 2}


@dataclass(frozen=True)
class BaselineSpec:
    """A parametric distribution used as F_0 (or as a data-generating G_k).

    * ``normal(mu, sigma)``
    * ``gamma(shape, rate)``
    * ``lognormal(mu, sigma)`` (parameters on the log scale)
    * ``pareto(shape)`` with support x > 1
    * ``weibull(shape, scale)``
    """

    family: str
    params: tuple

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if fam not in _FAMILY_ARITY:
            raise ParameterError(f"unknown family {self.family!r}; choose from {sorted(_FAMILY_ARITY)}")
        if len(self.params) != _FAMILY_ARITY[fam]:
            raise ParameterError(f"{fam} takes {_FAMILY_ARITY[fam]} parameter(s), got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise ParameterError(f"non-finite parameter in {self}")
        positive = self.params[1:] if fam in ("normal", "lognormal") else self.params
        if any(p <= 0 for p in positive):
            raise ParameterError(f"{fam} parameters {self.params} violate positivity")
        total = float(np.ravel(expectation(self, lambda x, lw: np.exp(lw)[None]))[0])
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ParameterError(f"{self} density integrates to {total!r}, not 1")

    @classmethod
    def parse(cls, text: str) -> "BaselineSpec":
        """``"gamma:2,1"`` -> Gamma(shape 2, rate 1)."""
        name, _, rest = text.partition(":")
        params = tuple(float(v) for v in rest.split(",")) if rest.strip() else ()
        return cls(name.strip(), params)

    def __str__(self) -> str:
        return f"{self.family}:{','.join(f'{p:g}' for p in self.params)}"

    @property
    def support_kind(self) -> str:
        if self.family == "normal":
            return "real"
        if self.family == "pareto":
            return "above_one"
        return "positive"

    @property
    def scale(self) -> float:
        """Rough location/scale used to center the quadrature map."""
        p = self.params
        if self.family == "normal":
            return p[1]
        if self.family == "gamma":
            return p[0] / p[1]
        if self.family == "lognormal":
            return math.exp(p[0])
        if self.family == "weibull":
            return p[1]
        return 1.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == "normal":
                mu, s = p
                return -0.5 * ((x - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
            if self.family == "gamma":
                a, rate = p
                out = a * math.log(rate) - math.lgamma(a) + (a - 1) * np.log(x) - rate * x
                return np.where(x > 0, out, -np.inf)
            if self.family == "lognormal":
                mu, s = p
                lx = np.log(x)
                out = -0.5 * ((lx - mu) / s) ** 2 - lx - math.log(s) - 0.5 * math.log(2 * math.pi)
                return np.where(x > 0, out, -np.inf)
            if self.family == "pareto":
                (g,) = p
                out = math.log(g) - (g + 1) * np.log(x)
                return np.where(x > 1, out, -np.inf)
            a, b = p
            z = x / b
            out = math.log(a / b) + (a - 1) * np.log(z) - z**a
            return np.where(x > 0, out, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "normal":
            return special.ndtr((x - p[0]) / p[1])
        if self.family == "gamma":
            return special.gammainc(p[0], p[1] * np.maximum(x, 0))
        if self.family == "lognormal":
            with np.errstate(divide="ignore"):
                return np.where(x > 0, special.ndtr((np.log(np.maximum(x, 1e-300)) - p[0]) / p[1]), 0.0)
        if self.family == "pareto":
            return np.where(x > 1, 1 - np.maximum(x, 1) ** (-p[0]), 0.0)
        return np.where(x > 0, -np.expm1(-((np.maximum(x, 0) / p[1]) ** p[0])), 0.0)


def _mapping(spec: BaselineSpec):
    """(a, b, x(t), log|dx/dt|) mapping a bounded interval onto the support."""
    s = spec.scale
    kind = spec.support_kind
    if kind == "real":
        mu = spec.params[0]

        def x_of(u):
            return mu + s * u / (1 - u * u)

        def logjac(u):
            return math.log(s) + np.log1p(u * u) - 2 * np.log1p(-u * u)

        return -1.0, 1.0, x_of, logjac
    shift = 1.0 if kind == "above_one" else 0.0

    def x_of(t):
        return shift + s * t / (1 - t)

    def logjac(t):
        return math.log(s) - 2 * np.log1p(-t)

    return 0.0, 1.0, x_of, logjac


def expectation(spec: BaselineSpec, fn, epsabs: float = QUAD_EPSABS, epsrel: float = QUAD_EPSREL):
    """Integral of ``fn(x, log_weight)`` over the mapped support.

    ``log_weight`` is log f_0(x) + log|dx/dt|, handed to ``fn`` so it can
    combine large exponentials in log space. ``fn`` must return a 1-d array.
    """
    a, b, x_of, logjac = _mapping(spec)

    def integrand(t):
        x = x_of(t)
        lw = spec.logpdf(x) + logjac(t)
        return np.asarray(fn(x, lw), dtype=float)

    value, _ = integrate.quad_vec(integrand, a, b, epsabs=epsabs, epsrel=epsrel, limit=5000)
    return value


def _tail_log_growth(spec: BaselineSpec, log_integrand) -> float:
    """Growth of a log-integrand between (1 - 1e-6) and (1 - 1e-12) of the mapped interval."""
    a, b, x_of, logjac = _mapping(spec)
    worst = -np.inf
    ends = [(b, -1.0)] + ([(a, 1.0)] if spec.support_kind == "real" else [])
    for end, sign in ends:
        vals = []
        for eps in (1e-6, 1e-12):
            t = end + sign * eps
            x = x_of(t)
            vals.append(float(np.ravel(log_integrand(x) + spec.logpdf(x) + logjac(t))[0]))
        worst = max(worst, vals[1] - vals[0])
    return worst


def normalizing_alpha(f0: BaselineSpec, beta_k, basis) -> float:
    """alpha_k = -log E_0 exp(beta_k' q(X))."""
    basis = as_basis(basis)
    beta_k = np.asarray(beta_k, dtype=float)
    if not np.any(beta_k):
        return 0.0

    def log_tilt(x):
        with np.errstate(over="ignore", invalid="ignore"):
            return _safe_basis(basis, x) @ beta_k

    growth = _tail_log_growth(f0, log_tilt)
    # Integrable end-point singularities grow slower than 1/(1-t); 6 decades of
    # t-distance give log(1e6) for exactly 1/(1-t).
    if not np.isfinite(growth) or growth > 0.999 * math.log(1e6):
        raise DivergentIntegralError(
            f"E_0[exp(beta' q(X))] diverges for beta = {beta_k.tolist()} under {f0}"
        )
    # Scale by the integrand's peak so the integral is O(1).
    grid = _probe_grid(f0)
    peak = np.max(log_tilt(grid) + f0.logpdf(grid))

    def fn(x, lw):
        return np.exp(log_tilt(x) + lw - peak)[None]

    total = float(np.ravel(expectation(f0, fn))[0])
    if not (np.isfinite(total) and total > 0):
        raise DivergentIntegralError(
            f"E_0[exp(beta' q(X))] is not finite for beta = {beta_k.tolist()} under {f0}"
        )
    return -(math.log(total) + peak)


def _probe_grid(f0: BaselineSpec) -> np.ndarray:
    a, b, x_of, _ = _mapping(f0)
    t = np.linspace(a, b, 403)[1:-1]
    return x_of(t)


def _safe_basis(basis: BasisFn, x) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return np.column_stack([term(np.asarray(x, float)) for term in basis.spec.terms])


def theoretical_information(f0: BaselineSpec, beta_star, rho, basis) -> InfoMatrix:
    """Information matrix U at theta* by quadrature under F_0.

    Only beta* is used; each alpha_k* is recomputed as the normalizing
    constant of exp(beta_k*' q) under F_0.
    """
    basis = as_basis(basis)
    d = basis.d
    if isinstance(beta_star, Theta):
        beta_star = beta_star.beta
    rho = _check_rho(rho)
    m = rho.size - 1
    betas = np.asarray(beta_star, dtype=float).reshape(m, d)
    alphas = np.array([normalizing_alpha(f0, b, basis) for b in betas])
    log_rho = np.log(rho)
    k = d + 1

    def fn(x, lw):
        qx = _safe_basis(basis, x)
        x = np.atleast_1d(x)
        logits = np.empty((x.size, m + 1))
        logits[:, 0] = log_rho[0]
        logits[:, 1:] = log_rho[1:] + alphas + qx @ betas.T
        ls = special.logsumexp(logits, axis=1)
        w = np.exp(logits[:, 1:] - ls[:, None])  # h / s, each in [0, 1]
        scale = np.exp(ls + lw)  # s f_0 |dx/dt|
        if not np.all(np.isfinite(scale)) or not np.all(np.isfinite(qx)):
            qx = np.where(np.isfinite(qx), qx, 0.0)
            scale = np.where(np.isfinite(scale), scale, 0.0)
        Hs = (np.einsum("ir,rs->irs", w, np.eye(m)) - w[:, :, None] * w[:, None, :]) * scale[:, None, None]
        Q = np.column_stack([np.ones(x.size), qx])
        M = np.einsum("irs,ia,ib->rasb", Hs, Q, Q)
        return M.reshape(-1)

    M = expectation(f0, fn).reshape(m * k, m * k)
    perm = np.concatenate([np.arange(m) * k, (np.arange(m)[:, None] * k + 1 + np.arange(d)).ravel()])
    U = M[np.ix_(perm, perm)]
    return InfoMatrix(U, m, d)


def _check_rho(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or rho.size < 2:
        raise ValueError("rho needs one proportion per sample (at least two)")
    if np.any(rho <= 0) or np.any(rho >= 1) or abs(rho.sum() - 1) > 1e-10:
        raise ValueError(f"proportions must lie in (0,1) and sum to 1, got {rho.tolist()}")
    return rho


# ---------------------------------------------------------------------------
# Local alternatives and noncentrality
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalAlternative:
    """beta_k = beta_k* + n_k^{-1/2} c_k with limiting proportions rho (baseline first)."""

    beta_star: np.ndarray
    drifts: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        rho = _check_rho(self.rho)
        m = rho.size - 1
        drifts = np.asarray(self.drifts, dtype=float).reshape(m, -1)
        beta = np.asarray(self.beta_star, dtype=float).ravel()
        if beta.size != drifts.size:
            raise ValueError(f"beta* has {beta.size} entries but drifts have {drifts.size}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "drifts", drifts)
        object.__setattr__(self, "beta_star", beta)

    @property
    def m(self) -> int:
        return self.rho.size - 1

    @property
    def d(self) -> int:
        return self.drifts.shape[1]

    @property
    def eta(self) -> np.ndarray:
        return (self.drifts / np.sqrt(self.rho[1:])[:, None]).ravel()

    def check_null(self, c: ConstraintSpec, tol: float = 1e-10):
        res = c.residual(self.beta_star)
        if np.max(np.abs(res)) > tol:
            raise ValueError(f"beta* violates the null hypothesis: A beta* - b = {res.tolist()}")


@dataclass(frozen=True, eq=False)
class NullJacobian:
    """J with A J = 0, built as J' = (-(A1^{-1} A2)', I) after column pivoting.

    ``matrix`` is None when q = m*d (the hypothesis fixes beta entirely).
    ``pivot`` lists the columns of A chosen for the invertible block A1
    first, then the remaining ones.
    """

    matrix: Optional[np.ndarray]
    pivot: np.ndarray

    @property
    def full(self) -> bool:
        return self.matrix is None


def null_jacobian(c: ConstraintSpec) -> NullJacobian:
    A = c.A
    q, p = A.shape
    _, R, piv = scipy.linalg.qr(A, pivoting=True, mode="economic")
    if abs(R[q - 1, q - 1]) <= 1e-10 * max(1.0, abs(R[0, 0])):
        raise np.linalg.LinAlgError("constraint matrix is rank deficient")
    if q == p:
        return NullJacobian(None, piv)
    A1, A2 = A[:, piv[:q]], A[:, piv[q:]]
    top = -np.linalg.solve(A1, A2)
    Jp = np.vstack([top, np.eye(p - q)])
    J = np.empty_like(Jp)
    J[piv] = Jp  # back to the original coordinate order of beta
    return NullJacobian(J, piv)


def _lambda_of(U) -> np.ndarray:
    return U.Lambda if isinstance(U, InfoMatrix) else np.asarray(U, dtype=float)


def noncentrality_from_eta(eta, Lambda, c: ConstraintSpec) -> float:
    eta = np.asarray(eta, dtype=float)
    Lam = _lambda_of(Lambda)
    nj = null_jacobian(c)
    if nj.full:
        val = float(eta @ Lam @ eta)
    else:
        J = nj.matrix
        LJ = Lam @ J
        try:
            cf = scipy.linalg.cho_factor(J.T @ LJ)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("J' Lambda J is singular") from exc
        v = LJ.T @ eta
        val = float(eta @ Lam @ eta - v @ scipy.linalg.cho_solve(cf, v))
    if val < 0:
        if val < -1e-10 * max(1.0, float(eta @ eta)):
            raise ArithmeticError(f"negative noncentrality {val:.3g}")
        val = 0.0
    return val


def noncentrality(alt: LocalAlternative, U, c: ConstraintSpec) -> float:
    alt.check_null(c)
    return noncentrality_from_eta(alt.eta, U, c)


def null_projector(Lambda, c: ConstraintSpec) -> np.ndarray:
    """Lambda^{1/2} {Lambda^{-1} - J (J' Lambda J)^{-1} J'} Lambda^{1/2}; idempotent with trace q."""
    Lam = _lambda_of(Lambda)
    root = scipy.linalg.sqrtm(Lam).real
    inner = np.linalg.inv(Lam)
    nj = null_jacobian(c)
    if not nj.full:
        J = nj.matrix
        inner = inner - J @ np.linalg.solve(J.T @ Lam @ J, J.T)
    return root @ inner @ root


def local_power(delta2: float, q: int, level: float) -> float:
    """P(chi2_q(delta2) >= chi2_{q, 1-level})."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if delta2 < 0:
        raise ValueError(f"noncentrality must be >= 0, got {delta2}")
    if delta2 == 0:
        return float(level)
    return noncentral_chi2_sf(q, delta2, chi2_quantile(q, 1 - level))


# ---------------------------------------------------------------------------
# Sample size
# ---------------------------------------------------------------------------


@dataclass
class SampleSizeResult:
    n_star: int
    power_at_n_star: float
    power_below: float
    delta2_per_n: float


def sample_size(
    target_power: float,
    level: float,
    shifts,
    rho,
    f0: BaselineSpec,
    beta_star,
    c: ConstraintSpec,
    basis,
    U: Optional[InfoMatrix] = None,
) -> SampleSizeResult:
    """Smallest total n whose local power reaches ``target_power``.

    A fixed shift beta_k - beta_k* = shift_k corresponds to the drift
    c_k(n) = shift_k sqrt(rho_k n), so eta(n) = sqrt(n) * shift and
    delta2(n) = n * delta2(1).
    """
    if not level < target_power < 1:
        raise ValueError(f"target power must lie in (level, 1), got {target_power}")
    rho = _check_rho(rho)
    basis = as_basis(basis)
    shifts = np.asarray(shifts, dtype=float).reshape(rho.size - 1, basis.d)
    alt = LocalAlternative(beta_star, np.zeros_like(shifts), rho)
    alt.check_null(c)
    if U is None:
        U = theoretical_information(f0, alt.beta_star, rho, basis)
    unit = noncentrality_from_eta(shifts.ravel(), U, c)

    def power(n):
        return local_power(n * unit, c.q, level)

    if unit <= 0:
        raise UnreachablePowerError(
            "the shift lies in the null directions: power equals the level for every n",
            achieved_power=level,
        )
    hi = 1
    while power(hi) < target_power:
        hi *= 2
        if hi > MAX_SAMPLE_SIZE:
            p = power(MAX_SAMPLE_SIZE)
            if p >= target_power:
                hi = MAX_SAMPLE_SIZE
                break
            raise UnreachablePowerError(
                f"power {p:.4f} at n = {MAX_SAMPLE_SIZE} is below the target {target_power}",
                achieved_power=p,
            )
    lo = hi // 2  # power(lo) < target, or lo == 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power(mid) >= target_power:
            hi = mid
        else:
            lo = mid
    return SampleSizeResult(hi, power(hi), power(hi - 1) if hi > 1 else 0.0, unit)


# ---------------------------------------------------------------------------
# Information pooling: subset vs pooled designs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """A DRM design for analytic power: baseline, basis, proportions, null, drifts, hypothesis."""

    f0: BaselineSpec
    basis: object
    rho: np.ndarray
    beta_star: np.ndarray
    drifts: np.ndarray
    constraint: ConstraintSpec

    def __post_init__(self):
        object.__setattr__(self, "basis", as_basis(self.basis))
        alt = self.alternative
        object.__setattr__(self, "rho", alt.rho)
        object.__setattr__(self, "beta_star", alt.beta_star)
        object.__setattr__(self, "drifts", alt.drifts)

    @property
    def alternative(self) -> LocalAlternative:
        return LocalAlternative(self.beta_star, self.drifts, self.rho)

    @property
    def m(self) -> int:
        return self.rho.size - 1

    def information(self) -> InfoMatrix:
        return theoretical_information(self.f0, self.beta_star, self.rho, self.basis)

    def delta2(self) -> float:
        return noncentrality(self.alternative, self.information(), self.constraint)

    def subset(self, r: int) -> "DesignSpec":
        """The same hypothesis analysed with samples 0..r only (proportions renormalized).

        The hypothesis must only involve beta_1..beta_r.
        """
        d = self.basis.d
        if not 1 <= r <= self.m:
            raise ValueError(f"r must lie in 1..{self.m}")
        A = self.constraint.A
        if np.any(A[:, r * d :]):
            raise ValueError("hypothesis involves samples beyond r")
        rho = self.rho[: r + 1] / self.rho[: r + 1].sum()
        return DesignSpec(
            self.f0, self.basis, rho, self.beta_star[: r * d], self.drifts[:r],
            ConstraintSpec(A[:, : r * d], self.constraint.b),
        )


@dataclass
class DesignComparison:
    delta2_subset: float
    delta2_pooled: float
    dominates: bool


def compare_designs(subset_spec: DesignSpec, pooled_spec: DesignSpec) -> DesignComparison:
    """Noncentralities of the subset-sample and all-sample DELR tests of the same hypothesis."""
    r, m, d = subset_spec.m, pooled_spec.m, pooled_spec.basis.d
    if subset_spec.f0 != pooled_spec.f0:
        raise ValueError("designs use different baselines")
    if subset_spec.basis.spec != pooled_spec.basis.spec:
        raise ValueError("designs use different bases")
    if r > m:
        raise ValueError("subset design has more samples than the pooled design")
    if not np.allclose(subset_spec.beta_star, pooled_spec.beta_star[: r * d]):
        raise ValueError("designs disagree on beta_1*..beta_r*")
    if not np.allclose(subset_spec.drifts, pooled_spec.drifts[:r]):
        raise ValueError("designs disagree on drifts c_1..c_r")
    if np.any(pooled_spec.drifts[r:]):
        raise ValueError("pooled design must have zero drift for samples r+1..m")
    A1, A2 = subset_spec.constraint.A, pooled_spec.constraint.A
    if (
        A1.shape[0] != A2.shape[0]
        or not np.allclose(A2[:, : r * d], A1)
        or np.any(A2[:, r * d :])
        or not np.allclose(subset_spec.constraint.b, pooled_spec.constraint.b)
    ):
        raise ValueError("designs test different hypotheses")
    if r == m and not np.allclose(subset_spec.rho, pooled_spec.rho):
        raise ValueError("designs with the same samples disagree on proportions")
    d1 = subset_spec.delta2()
    d2 = d1 if (r == m) else pooled_spec.delta2()
    return DesignComparison(d1, d2, d2 >= d1 - 1e-8)
