"""Dual empirical likelihood (DEL) under the density ratio model.

With lambda_r = n_r / n fixed at the sample proportions,

    l_n(theta) = -sum_{k,j} log sum_r lambda_r exp(alpha_r + beta_r' q(x_kj))
                 + sum_{k,j} (alpha_k + beta_k' q(x_kj)),

which is smooth and concave on all of R^{m(d+1)}. Parameter vectors are
laid out as (alpha_1..alpha_m, beta_1..beta_m), matching :class:`Theta`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .model import ConstraintSpec, MultiSample, Theta, as_basis

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
# Relative size of an objective change that double rounding can hide.
ROUNDING_GAIN = 1e-13


class DimensionError(ValueError):
    """Parameter and data/basis dimensions disagree."""


class ConvergenceError(RuntimeError):
    """The maximizer did not converge; carries the last iterate."""

    def __init__(self, message, theta=None, gradient_norm=None, iterations=None):
        super().__init__(message)
        self.theta = theta
        self.gradient_norm = gradient_norm
        self.iterations = iterations


@dataclass
class FitOptions:
    max_iter: int = 200
    grad_tol: Optional[float] = None  # default 1e-8 * n
    step_tol: float = 1e-12


@dataclass
class FitResult:
    theta_hat: Theta
    del_value: float
    gradient_norm: float
    iterations: int
    converged: bool
    tol: float
    constraint: Optional[ConstraintSpec] = None

    @property
    def constrained(self) -> bool:
        return self.constraint is not None


class DualLikelihood:
    """DEL objective bound to one dataset and basis.

    Caches the basis matrix so repeated evaluations during fitting only
    cost O(n m d^2).
    """

    def __init__(self, data: MultiSample, basis):
        self.data = data
        self.basis = as_basis(basis)
        self.m = data.m
        self.d = self.basis.d
        self.n = data.n
        if self.m < 1:
            raise DimensionError("the DEL needs at least two samples")
        x = data.pooled
        self.q = self.basis(x)
        self.Qt = np.column_stack([np.ones(self.n), self.q])  # (n, d+1)
        self.labels = data.labels
        self.lam = data.proportions
        self.log_lam = np.log(self.lam)
        # Per-sample sums of (1, q): the data term of the score.
        sums = np.zeros((self.m + 1, self.d + 1))
        np.add.at(sums, self.labels, self.Qt)
        self.sample_sums = sums[1:]
        # Map (r, a) layout -> (alpha, beta) layout.
        m, d = self.m, self.d
        perm = np.empty(m * (d + 1), dtype=int)
        for r in range(m):
            perm[r] = r * (d + 1)
            perm[m + r * d : m + (r + 1) * d] = r * (d + 1) + 1 + np.arange(d)
        self._perm = perm

    @property
    def dim(self) -> int:
        return self.m * (self.d + 1)

    def _coef(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise DimensionError(f"theta has length {vec.size}, expected m(d+1) = {self.dim}")
        coef = np.empty((self.d + 1, self.m))
        coef[0] = vec[: self.m]
        coef[1:] = vec[self.m :].reshape(self.m, self.d).T
        return coef

    def _linear(self, vec):
        lin = self.Qt @ self._coef(vec)  # (n, m): alpha_r + beta_r' q(x_i)
        logits = np.empty((self.n, self.m + 1))
        logits[:, 0] = self.log_lam[0]
        logits[:, 1:] = lin + self.log_lam[1:]
        lse = _log_mixture(lin, logits, self.lam)
        own = np.zeros(self.n)
        mask = self.labels > 0
        own[mask] = lin[mask, self.labels[mask] - 1]
        return lin, logits, lse, own

    def value(self, vec) -> float:
        _, _, lse, own = self._linear(vec)
        return float(own.sum() - lse.sum())

    def weights(self, vec) -> np.ndarray:
        """h/s per observation: (n, m) array of lambda_r phi_r / sum_t lambda_t phi_t."""
        _, logits, lse, _ = self._linear(vec)
        return np.exp(logits[:, 1:] - lse[:, None])

    def evaluate(self, vec, hessian: bool = True):
        """Return (value, gradient, hessian) in (alpha, beta) layout."""
        _, logits, lse, own = self._linear(vec)
        w = np.exp(logits[:, 1:] - lse[:, None])
        val = float(own.sum() - lse.sum())
        grad_ra = self.sample_sums - w.T @ self.Qt  # (m, d+1)
        grad = grad_ra.ravel()[self._perm]
        if not hessian:
            return val, grad, None
        k = self.d + 1
        X = (w[:, :, None] * self.Qt[:, None, :]).reshape(self.n, self.m * k)
        hess = X.T @ X
        diag_blocks = np.einsum("ir,ia,ib->rab", w, self.Qt, self.Qt)
        for r in range(self.m):
            hess[r * k : (r + 1) * k, r * k : (r + 1) * k] -= diag_blocks[r]
        hess = hess[np.ix_(self._perm, self._perm)]
        hess = 0.5 * (hess + hess.T)
        return val, grad, hess


def _log_mixture(lin, logits, lam):
    """log sum_r lambda_r exp(lin_r) per row, with lin_0 = 0.

    Rows with small tilts use log1p(sum_{r>=1} lambda_r expm1(lin_r)), which
    is exact at theta = 0 and avoids cancellation nearby; the rest use a
    max-shifted log-sum-exp.
    """
    out = np.empty(lin.shape[0])
    small = np.max(np.abs(lin), axis=1) <= 1.0
    out[small] = np.log1p(np.expm1(lin[small]) @ lam[1:])
    big = ~small
    if big.any():
        out[big] = logsumexp(logits[big], axis=1)
    return out


def _theta_vec(theta, m: int, d: int) -> np.ndarray:
    if isinstance(theta, Theta):
        if theta.m != m or theta.d != d:
            raise DimensionError(f"theta has m={theta.m}, d={theta.d}; data/basis need m={m}, d={d}")
        return theta.to_vector()
    vec = np.asarray(theta, dtype=float)
    if vec.shape != (m * (d + 1),):
        raise DimensionError(f"theta has length {vec.size}, expected {m * (d + 1)}")
    return vec


def del_value(theta, data: MultiSample, basis) -> float:
    dl = DualLikelihood(data, basis)
    return dl.value(_theta_vec(theta, dl.m, dl.d))


def del_derivatives(theta, data: MultiSample, basis) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient and Hessian of l_n at theta, (alpha, beta) layout."""
    dl = DualLikelihood(data, basis)
    _, g, h = dl.evaluate(_theta_vec(theta, dl.m, dl.d))
    return g, h


# ---------------------------------------------------------------------------
# Maximization
# ---------------------------------------------------------------------------


def _newton_ascent(fun, x0, tol, opts: FitOptions):
    """Damped Newton with Armijo backtracking for a concave objective.

    ``fun(x, hessian=True)`` returns (value, gradient, hessian). Falls back to a gradient
    step whenever the negated Hessian is not numerically positive definite.
    Returns (x, value, grad_norm, iterations, converged).
    """
    x = np.array(x0, dtype=float)
    val, g, h = fun(x)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    it = 0
    while it < opts.max_iter:
        if gnorm <= tol:
            return (*_polish(fun, x, val, g, h, gnorm), it, True)
        it += 1
        try:
            cf = scipy.linalg.cho_factor(-h, lower=True, check_finite=True)
            p = scipy.linalg.cho_solve(cf, g)
            newton = True
        except (np.linalg.LinAlgError, ValueError):
            p = g / max(1.0, float(np.linalg.norm(g)))
            newton = False
            logger.debug("Hessian not negative definite at iteration %d; gradient step", it)
        slope = float(g @ p)
        if newton and slope <= ROUNDING_GAIN * max(1.0, abs(val)):
            # The predicted gain is below the rounding level of l_n, so the
            # value cannot rank points here; judge the full step by the gradient.
            x_new = x + p
            val_new, g_new, h_new = fun(x_new)
            gnorm_new = float(np.max(np.abs(g_new)))
            if np.isfinite(val_new) and gnorm_new < gnorm:
                x, val, g, h, gnorm = x_new, val_new, g_new, h_new, gnorm_new
                continue
            logger.debug("Newton step at rounding level did not reduce |g| (%.3g)", gnorm)
            return x, val, gnorm, it, gnorm <= tol
        t = 1.0
        for _ in range(MAX_BACKTRACKS):
            x_new = x + t * p
            val_new = fun(x_new, hessian=False)[0]
            if np.isfinite(val_new) and val_new >= val + ARMIJO_C1 * t * slope:
                break
            t *= BACKTRACK
        else:
            logger.debug("line search stalled at iteration %d (|g|=%.3g)", it, gnorm)
            return x, val, gnorm, it, gnorm <= tol
        step = t * p
        x = x_new
        val, g, h = fun(x)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if newton and float(np.linalg.norm(step)) <= opts.step_tol:
            return x, val, gnorm, it, gnorm <= tol
    return x, val, gnorm, it, gnorm <= tol


def _polish(fun, x, val, g, h, gnorm):
    """One extra full Newton step once the tolerance is met.

    Quadratic convergence takes the gradient from ~tol to rounding level,
    which the Lagrange identities of the fitted weights rely on. The step
    is kept only if it shrinks the gradient without lowering the value.
    """
    if gnorm == 0.0:
        return x, val, gnorm
    try:
        p = scipy.linalg.cho_solve(scipy.linalg.cho_factor(-h, lower=True), g)
    except (np.linalg.LinAlgError, ValueError):
        return x, val, gnorm
    x_new = x + p
    val_new, g_new, _ = fun(x_new, hessian=False)
    gnorm_new = float(np.max(np.abs(g_new)))
    if np.isfinite(val_new) and val_new >= val - 1e-12 * max(1.0, abs(val)) and gnorm_new < gnorm:
        return x_new, val_new, gnorm_new
    return x, val, gnorm


def _grad_tol(opts: FitOptions, n: int) -> float:
    return opts.grad_tol if opts.grad_tol is not None else 1e-8 * n


def fit_mele(data: MultiSample, basis, opts: Optional[FitOptions] = None, start=None) -> FitResult:
    """Maximum DEL estimate theta_hat, started from theta = 0 unless ``start`` is given."""
    opts = opts or FitOptions()
    dl = DualLikelihood(data, basis)
    tol = _grad_tol(opts, dl.n)
    x0 = np.zeros(dl.dim) if start is None else _theta_vec(start, dl.m, dl.d)

    def fun(x, hessian=True):
        return dl.evaluate(x, hessian=hessian)

    x, val, gnorm, it, ok = _newton_ascent(fun, x0, tol, opts)
    theta = Theta.from_vector(x, dl.m)
    if not ok:
        raise ConvergenceError(
            f"MELE did not converge after {it} iterations (|grad|_inf = {gnorm:.3g}, tol {tol:.3g}); "
            "the samples may be separated in some basis coordinate",
            theta=theta, gradient_norm=gnorm, iterations=it,
        )
    return FitResult(theta, val, gnorm, it, True, tol)


def null_space_parametrization(c: ConstraintSpec) -> tuple[np.ndarray, np.ndarray]:
    """(beta_p, N): minimum-norm solution of A beta = b and an orthonormal basis of null(A)."""
    beta_p = np.linalg.lstsq(c.A, c.b, rcond=None)[0]
    N = scipy.linalg.null_space(c.A, rcond=1e-12)
    if N.shape[1] != c.dim - c.q:
        raise ValueError("constraint matrix is rank deficient")
    return beta_p, N


def fit_constrained(
    data: MultiSample,
    basis,
    c: ConstraintSpec,
    opts: Optional[FitOptions] = None,
    start=None,
) -> FitResult:
    """Maximize l_n subject to A beta = b.

    beta = beta_p + N gamma keeps every iterate exactly feasible; alpha is
    free. ``start`` (a Theta) is projected onto the feasible set.
    """
    opts = opts or FitOptions()
    dl = DualLikelihood(data, basis)
    m, d = dl.m, dl.d
    if c.dim != m * d:
        raise DimensionError(f"constraint acts on {c.dim} coefficients but m*d = {m * d}")
    tol = _grad_tol(opts, dl.n)
    beta_p, N = null_space_parametrization(c)
    r = N.shape[1]
    # theta = offset + T phi, phi = (alpha, gamma)
    T = np.zeros((dl.dim, m + r))
    T[:m, :m] = np.eye(m)
    T[m:, m:] = N
    offset = np.concatenate([np.zeros(m), beta_p])

    phi0 = np.zeros(m + r)
    if start is not None:
        sv = _theta_vec(start, m, d)
        phi0[:m] = sv[:m]
        phi0[m:] = N.T @ (sv[m:] - beta_p)

    def fun(phi, hessian=True):
        val, g, h = dl.evaluate(offset + T @ phi, hessian=hessian)
        return val, T.T @ g, (T.T @ h @ T if h is not None else None)

    phi, val, gnorm, it, ok = _newton_ascent(fun, phi0, tol, opts)
    vec = offset + T @ phi
    theta = Theta.from_vector(vec, m)
    if not ok:
        raise ConvergenceError(
            f"constrained DEL fit did not converge after {it} iterations "
            f"(projected |grad|_inf = {gnorm:.3g}, tol {tol:.3g})",
            theta=theta, gradient_norm=gnorm, iterations=it,
        )
    return FitResult(theta, val, gnorm, it, True, tol, constraint=c)
