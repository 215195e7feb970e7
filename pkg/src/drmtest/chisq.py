"""Central and noncentral chi-square distribution functions.

The central CDF is the regularized lower incomplete gamma P(q/2, x/2),
evaluated by its power series below a+1 and by a Lentz continued fraction
for the upper tail Q above it. The noncentral CDF is the Poisson mixture
sum_j Pois(j; delta2/2) * CentralCDF(q + 2j, x).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

EPS = 1e-16
TINY = 1e-300
MAX_ITER = 1_000_000
POISSON_TAIL = 1e-12


def _check_df(q):
    if not (q > 0 and math.isfinite(q)):
        raise ValueError(f"degrees of freedom must be positive, got {q}")


def _gamma_series(a: float, x: float) -> float:
    """P(a, x) by its power series; converges fast for x < a + 1."""
    ap = a
    term = total = 1.0 / a
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


def chi2_cdf(q: float, x: float) -> float:
    _check_df(q)
    return gamma_p(0.5 * q, 0.5 * x)


def chi2_sf(q: float, x: float) -> float:
    _check_df(q)
    return gamma_q(0.5 * q, 0.5 * x)


def _root(f, target: float, q: float) -> float:
    hi = max(1.0, 2.0 * q)
    while f(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("quantile bracket exceeded 1e12")
    return brentq(lambda t: f(t) - target, 0.0, hi, xtol=1e-12, rtol=1e-14, maxiter=500)


def chi2_quantile(q: float, p: float) -> float:
    """Inverse of :func:`chi2_cdf` by bracketed root finding."""
    _check_df(q)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    return _root(lambda t: chi2_cdf(q, t), p, q)


def _poisson_mixture(q: float, delta2: float, x: float, central) -> float:
    lam = 0.5 * delta2
    if lam == 0.0:
        return central(q, x)
    log_lam = math.log(lam)

    def weight(j):
        return math.exp(-lam + j * log_lam - math.lgamma(j + 1.0))

    # Sum outwards from the Poisson mode so huge noncentralities stay cheap.
    mode = int(lam)
    lo, hi = mode, mode + 1
    w_lo, w_hi = weight(lo), weight(hi)
    total_w = total = 0.0
    while True:
        take_lo = lo >= 0 and (w_lo >= w_hi or w_hi < TINY)
        if take_lo:
            j, w = lo, w_lo
            lo -= 1
            w_lo = weight(lo) if lo >= 0 else 0.0
        else:
            j, w = hi, w_hi
            hi += 1
            w_hi = weight(hi)
        total += w * central(q + 2.0 * j, x)
        total_w += w
        if 1.0 - total_w < POISSON_TAIL:
            break
        if (lo < 0 or w_lo < 1e-18) and w_hi < 1e-18:
            break
    return min(1.0, max(0.0, total))


def noncentral_chi2_cdf(q: float, delta2: float, x: float) -> float:
    _check_df(q)
    if delta2 < 0 or not math.isfinite(delta2):
        raise ValueError(f"noncentrality must be finite and >= 0, got {delta2}")
    if x <= 0:
        return 0.0
    return _poisson_mixture(q, delta2, x, chi2_cdf)


def noncentral_chi2_sf(q: float, delta2: float, x: float) -> float:
    """Upper tail, summed directly so small tail probabilities keep precision."""
    _check_df(q)
    if delta2 < 0 or not math.isfinite(delta2):
        raise ValueError(f"noncentrality must be finite and >= 0, got {delta2}")
    if x <= 0:
        return 1.0
    return _poisson_mixture(q, delta2, x, chi2_sf)


def noncentral_chi2_quantile(q: float, delta2: float, p: float) -> float:
    _check_df(q)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    return _root(lambda t: noncentral_chi2_cdf(q, delta2, t), p, q + delta2)


def chi2(q: float, x: float) -> dict:
    """Central chi-square CDF at x and, for x in [0, 1), the quantile at probability x."""
    out = {"cdf": chi2_cdf(q, x)}
    if 0.0 <= x < 1.0:
        out["quantile"] = chi2_quantile(q, x)
    return out


# Array conveniences for goodness-of-fit checks and QQ tables.
chi2_cdf_vec = np.vectorize(chi2_cdf, otypes=[float])
noncentral_chi2_cdf_vec = np.vectorize(noncentral_chi2_cdf, otypes=[float])
