"""Post-fit EL estimators: baseline weights, fitted CDFs, EL-weighted kernel densities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .dual import FitResult
from .model import MultiSample, Theta, as_basis


class FitNotConvergedError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightedBaseline:
    """Fitted point masses p_kj of F_0 on the pooled observations.

    ``log_tilts[i, k]`` is alpha_k + beta_k' q(x_i) for k = 0..m (column 0 is 0),
    so the mass F_k puts on x_i is exp(log_tilts[i, k]) * weights[i].
    """

    points: np.ndarray
    weights: np.ndarray
    log_tilts: np.ndarray
    theta_hat: Theta
    _order: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        order = np.argsort(self.points, kind="stable")
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_cum", np.cumsum(self.masses()[order], axis=0))

    @property
    def m(self) -> int:
        return self.log_tilts.shape[1] - 1

    def masses(self, k: int | None = None) -> np.ndarray:
        """Point masses of F_k (all k as columns when k is None)."""
        tilt = np.exp(self.log_tilts) * self.weights[:, None]
        return tilt if k is None else tilt[:, self._check_k(k)]

    def _check_k(self, k: int) -> int:
        if not 0 <= k <= self.m:
            raise IndexError(f"population index {k} out of range 0..{self.m}")
        return k

    def lagrange_residuals(self) -> np.ndarray:
        """sum_i exp(alpha_t + beta_t' q(x_i)) p_i - 1 for t = 0..m."""
        return self.masses().sum(axis=0) - 1.0


def baseline_weights(fit: FitResult, data: MultiSample, basis) -> WeightedBaseline:
    """p_kj = n^{-1} {sum_r lambda_r exp(alpha_r + beta_r' q(x_kj))}^{-1}, lambda_r = n_r / n."""
    if not fit.converged:
        raise FitNotConvergedError("baseline weights need a converged fit")
    basis = as_basis(basis)
    theta = fit.theta_hat
    x = data.pooled
    qx = basis(x)
    log_tilts = np.zeros((x.size, theta.m + 1))
    log_tilts[:, 1:] = theta.alpha + qx @ theta.beta_blocks.T
    log_s = logsumexp(log_tilts + np.log(data.proportions), axis=1)
    weights = np.exp(-log_s) / data.n
    return WeightedBaseline(x, weights, log_tilts, theta)


def fitted_cdf(wb: WeightedBaseline, k: int, x) -> np.ndarray | float:
    """F_k-hat(x) = sum_i exp(alpha_k + beta_k' q(x_i)) p_i 1(x_i <= x)."""
    k = wb._check_k(k)
    xs = wb.points[wb._order]
    idx = np.searchsorted(xs, np.asarray(x, dtype=float), side="right")
    cum = np.concatenate([[0.0], wb._cum[:, k]])
    out = np.clip(cum[idx], 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def silverman_bandwidth(points, masses) -> float:
    """Silverman's rule of thumb on a weighted sample."""
    w = np.asarray(masses, float) / np.sum(masses)
    x = np.asarray(points, float)
    mean = w @ x
    sd = np.sqrt(w @ (x - mean) ** 2)
    order = np.argsort(x)
    cw = np.cumsum(w[order])
    q25, q75 = np.interp([0.25, 0.75], cw, x[order])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    n_eff = 1.0 / np.sum(w * w)
    return float(0.9 * spread * n_eff ** (-0.2))


def el_kernel_density(wb: WeightedBaseline, k: int, bandwidth=None, grid=None) -> np.ndarray:
    """Gaussian-kernel density of F_k with masses exp(alpha_k + beta_k' q(x_i)) p_i.

    Without a grid, 512 points spanning the data plus four bandwidths are used.
    """
    masses = wb.masses(k)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(wb.points, masses)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        pad = 4 * bandwidth
        grid = np.linspace(wb.points.min() - pad, wb.points.max() + pad, 512)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    z = (grid[:, None] - wb.points[None, :]) / bandwidth
    kern = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * bandwidth)
    return kern @ masses


def write_grid_csv(path, x, values, header=("x", "value")):
    """Two-column CSV for plotting density or CDF grids."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, vi in zip(np.ravel(x), np.ravel(values)):
            writer.writerow([repr(float(xi)), repr(float(vi))])
