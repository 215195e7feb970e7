"""Hypothesis tests under the DRM: DELR, Wald and label permutation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .chisq import (  # noqa: F401  (re-exported)
    chi2,
    chi2_cdf,
    chi2_quantile,
    chi2_sf,
    noncentral_chi2_cdf,
    noncentral_chi2_quantile,
    noncentral_chi2_sf,
)
from .dual import ConvergenceError, DualLikelihood, FitOptions, fit_constrained, fit_mele
from .model import ConstraintSpec, MultiSample, Theta, as_basis

NEGATIVE_SLACK = 1e-8
MAX_CONDITION = 1e12


class SingularInformationError(np.linalg.LinAlgError):
    """Information matrix (or a block of it) is numerically singular."""


class InternalConsistencyError(RuntimeError):
    pass


class UnsupportedHypothesisError(ValueError):
    pass


class SmallSampleWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """Information matrix U in (alpha, beta) block order and its Schur complement.

    ``Lambda = U_bb - U_ba U_aa^{-1} U_ab`` is computed through a Cholesky
    factor of ``U_aa``.
    """

    U: np.ndarray
    m: int
    d: int
    Lambda: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        U = 0.5 * (U + U.T)
        object.__setattr__(self, "U", U)
        m = self.m
        Uaa, Uab, Ubb = U[:m, :m], U[:m, m:], U[m:, m:]
        cond = np.linalg.cond(Uaa)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularInformationError(
                f"U_aa is numerically singular (condition {cond:.3g}); "
                "use more data or a smaller basis"
            )
        try:
            L = scipy.linalg.cholesky(Uaa, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularInformationError("U_aa is not positive definite") from exc
        X = scipy.linalg.solve_triangular(L, Uab, lower=True)
        lam = Ubb - X.T @ X
        object.__setattr__(self, "Lambda", 0.5 * (lam + lam.T))

    @property
    def U_aa(self) -> np.ndarray:
        return self.U[: self.m, : self.m]

    @property
    def U_ab(self) -> np.ndarray:
        return self.U[: self.m, self.m :]

    @property
    def U_ba(self) -> np.ndarray:
        return self.U[self.m :, : self.m]

    @property
    def U_bb(self) -> np.ndarray:
        return self.U[self.m :, self.m :]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.U)[0])

    @property
    def lambda_min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.Lambda)[0])


def empirical_information(theta, data: MultiSample, basis) -> InfoMatrix:
    """U_n = -n^{-1} times the DEL Hessian at theta."""
    dl = DualLikelihood(data, basis)
    vec = theta.to_vector() if isinstance(theta, Theta) else np.asarray(theta, float)
    _, _, h = dl.evaluate(vec)
    return InfoMatrix(-h / dl.n, dl.m, dl.d)


@dataclass
class TestResult:
    statistic: float
    df: int
    p_value: float
    method: str
    fits: tuple = ()
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def theta_hat(self) -> Optional[Theta]:
        return self.fits[0].theta_hat if self.fits else None


def _warn_small(data: MultiSample, q: int, d: int):
    need = 10 * q * d
    if data.sizes.min() < need:
        warnings.warn(
            f"smallest sample has {data.sizes.min()} observations; the chi-square "
            f"approximation is reliable for n_k >= 10*q*d = {need}",
            SmallSampleWarning,
            stacklevel=3,
        )


def _check_constraint(c: ConstraintSpec, m: int, d: int):
    if c.dim != m * d:
        raise ValueError(f"constraint acts on {c.dim} coefficients, model has m*d = {m * d}")


def delr_test(data: MultiSample, basis, c: ConstraintSpec, opts: Optional[FitOptions] = None,
              warn: bool = True) -> TestResult:
    """DELR statistic R_n = 2 {l_n(theta_hat) - l_n(theta_tilde)} with a chi2_q reference."""
    basis = as_basis(basis)
    _check_constraint(c, data.m, basis.d)
    if warn:
        _warn_small(data, c.q, basis.d)
    try:
        full = fit_mele(data, basis, opts)
    except ConvergenceError as exc:
        raise ConvergenceError(f"unconstrained fit failed: {exc}", exc.theta, exc.gradient_norm,
                               exc.iterations) from exc
    try:
        null = fit_constrained(data, basis, c, opts, start=full.theta_hat)
    except ConvergenceError as exc:
        raise ConvergenceError(f"constrained fit failed: {exc}", exc.theta, exc.gradient_norm,
                               exc.iterations) from exc
    stat = 2.0 * (full.del_value - null.del_value)
    if stat < 0:
        if stat < -NEGATIVE_SLACK:
            raise InternalConsistencyError(
                f"constrained maximum exceeds unconstrained maximum by {-stat / 2:.3g}"
            )
        stat = 0.0
    return TestResult(stat, c.q, chi2_sf(c.q, stat), "DELR", (full, null))


def wald_test(data: MultiSample, basis, c: ConstraintSpec, opts: Optional[FitOptions] = None,
              warn: bool = True) -> TestResult:
    """n (A beta_hat - b)' (A Lambda_hat^{-1} A')^{-1} (A beta_hat - b) with a chi2_q reference.

    sqrt(n)(beta_hat - beta*) has asymptotic covariance Lambda^{-1}; Lambda_hat
    is the Schur complement of the empirical information at theta_hat.
    """
    basis = as_basis(basis)
    _check_constraint(c, data.m, basis.d)
    if warn:
        _warn_small(data, c.q, basis.d)
    full = fit_mele(data, basis, opts)
    info = empirical_information(full.theta_hat, data, basis)
    r = c.residual(full.theta_hat.beta)
    try:
        cov = c.A @ scipy.linalg.solve(info.Lambda, c.A.T, assume_a="pos")
        stat = float(data.n * r @ scipy.linalg.solve(cov, r, assume_a="pos"))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularInformationError(f"A Lambda^-1 A' is singular: {exc}") from exc
    stat = max(stat, 0.0)
    return TestResult(stat, c.q, chi2_sf(c.q, stat), "Wald", (full,), {"Lambda": info.Lambda})


def equal_distributions_statistic(data: MultiSample, basis, opts: Optional[FitOptions] = None) -> float:
    """R_n for H0: F_0 = ... = F_m.

    Under beta = 0 the constrained maximum is alpha = 0 with l_n = 0, so
    R_n reduces to 2 l_n(theta_hat).
    """
    return max(0.0, 2.0 * fit_mele(data, basis, opts).del_value)


def permutation_test(
    data: MultiSample,
    basis,
    reps: int = 999,
    seed: int = 0,
    c: Optional[ConstraintSpec] = None,
    opts: Optional[FitOptions] = None,
) -> TestResult:
    """Label-permutation p-value for the DELR statistic of H0: all distributions equal.

    Replicate i draws its permutation from an RNG seeded by (seed, i).
    Permuted datasets whose fit diverges are counted as at least as extreme.
    """
    basis = as_basis(basis)
    if c is not None and not c.is_full_equality():
        raise UnsupportedHypothesisError(
            "the permutation test is only valid for H0: all distributions equal (beta = 0)"
        )
    if reps < 99:
        raise ValueError(f"need at least 99 permutations, got {reps}")
    observed = equal_distributions_statistic(data, basis, opts)
    pooled = data.pooled
    cuts = np.cumsum(data.sizes)[:-1]
    exceed = 0
    failures = 0
    for i in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        perm = MultiSample(tuple(np.split(rng.permutation(pooled), cuts)))
        try:
            stat = equal_distributions_statistic(perm, basis, opts)
        except ConvergenceError:
            failures += 1
            exceed += 1
            continue
        if stat >= observed - 1e-9:
            exceed += 1
    p = (1 + exceed) / (reps + 1)
    df = data.m * basis.d
    return TestResult(observed, df, p, "Permutation", (), {"reps": reps, "seed": seed, "failures": failures})
