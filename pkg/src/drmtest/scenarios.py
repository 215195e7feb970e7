"""Ready-made simulation designs and power-analysis examples.

Gamma tilts in these designs use the basis order (x, log x): a tilt by
beta = (b1, b2) maps Gamma(shape, rate) to Gamma(shape + b2, rate - b1).
"""

from __future__ import annotations

import numpy as np

from .hypothesis import parse_hypothesis
from .model import BasisSpec, ConstraintSpec
from .power import BaselineSpec, DesignSpec
from .sim import FamilySpec, LocalStudy, StudyConfig


def _family(dists, sizes) -> FamilySpec:
    return FamilySpec(tuple(BaselineSpec(f, tuple(p)) for f, p in dists), tuple(sizes))


# ---------------------------------------------------------------------------
# Analytic power examples
# ---------------------------------------------------------------------------


def example1_design() -> DesignSpec:
    """Three gamma populations, H0: 2 beta_1 - beta_2 = 0."""
    basis = BasisSpec.parse("x,logx")
    return DesignSpec(
        f0=BaselineSpec("gamma", (2.0, 1.0)),
        basis=basis,
        rho=np.array([0.4, 0.3, 0.3]),
        beta_star=np.array([-1.0, 1.0, -2.0, 2.0]),
        drifts=np.array([[2.0, 3.0], [-1.0, 0.0]]),
        constraint=parse_hypothesis("lincomb:2*b1-b2=0", 2, 2),
    )


def example3_designs() -> tuple[DesignSpec, DesignSpec]:
    """Normal populations N(0,1), N(1.5,0.5), N(-1,2) with n = (120, 60, 60).

    Returns (two-sample design on samples 0-1, three-sample design); the
    hypothesis is beta_1 = (6, -1.5) and the drift on beta_1 is (2, 2).
    """
    basis = BasisSpec.parse("x,x2")
    pooled = DesignSpec(
        f0=BaselineSpec("normal", (0.0, 1.0)),
        basis=basis,
        rho=np.array([0.5, 0.25, 0.25]),
        beta_star=np.array([6.0, -1.5, -0.25, 0.375]),
        drifts=np.array([[2.0, 2.0], [0.0, 0.0]]),
        constraint=ConstraintSpec.fixed(1, [6.0, -1.5], 2, 2),
    )
    return pooled.subset(1), pooled


# ---------------------------------------------------------------------------
# Null calibration (six samples, H0: F1 = F2 and F3 = F4)
# ---------------------------------------------------------------------------

CALIBRATION_SIZES = (90, 60, 120, 80, 110, 30)


def calibration_normal(replicates: int = 2000, seed: int = 51) -> StudyConfig:
    means = (0, 2, 2, 1, 1, 3.2)
    sds = (1, 1.5, 1.5, 3, 3, 2)
    fam = _family([("normal", (m, s)) for m, s in zip(means, sds)], CALIBRATION_SIZES)
    return StudyConfig("calibration-normal", [fam], BasisSpec.parse("x,x2"), "equal:1,2;3,4",
                       replicates=replicates, seed=seed)


def calibration_gamma(replicates: int = 2000, seed: int = 52) -> StudyConfig:
    shapes = (3, 4, 4, 5, 5, 3.2)
    rates = (0.5, 0.8, 0.8, 1.1, 1.1, 1.5)
    fam = _family([("gamma", (a, b)) for a, b in zip(shapes, rates)], CALIBRATION_SIZES)
    return StudyConfig("calibration-gamma", [fam], BasisSpec.parse("logx,x"), "equal:1,2;3,4",
                       replicates=replicates, seed=seed)


# ---------------------------------------------------------------------------
# Local alternatives (four samples, sizes 120/160/80/60)
# ---------------------------------------------------------------------------

LOCAL_SIZES = (120, 160, 80, 60)


def local_normal(replicates: int = 2000, seed: int = 53) -> LocalStudy:
    """H0: beta_1 = beta_2 with drift (1, 0) on beta_2; chi2_2 limit."""
    return LocalStudy(
        f0=BaselineSpec("normal", (0.0, 0.5)),
        basis=BasisSpec.parse("x,x2"),
        sizes=LOCAL_SIZES,
        constraint="equal:1,2",
        beta_star=[0.25, 1.875, 0.25, 1.875, 0.125, 1.97],
        drifts=[[0, 0], [1, 0], [0, 0]],
        replicates=replicates,
        seed=seed,
        scenario="local-normal",
    )


def local_gamma(replicates: int = 2000, seed: int = 54) -> LocalStudy:
    """H0: beta_1 = beta_2 and beta_3 = (-6, 9); chi2_4 limit."""
    return LocalStudy(
        f0=BaselineSpec("gamma", (3.0, 2.0)),
        basis=BasisSpec.parse("x,logx"),
        sizes=LOCAL_SIZES,
        constraint="equal:1,2&fix:3=-6,9",
        beta_star=[-4, 5, -4, 5, -6, 9],
        drifts=[[0.5, 0.5], [1, 1], [2, 2]],
        replicates=replicates,
        seed=seed,
        scenario="local-gamma",
    )


# ---------------------------------------------------------------------------
# Power comparisons, H0: all distributions equal
# ---------------------------------------------------------------------------

POWER_SIZES = (30, 40, 25, 45, 50)

_NONNORMAL = {
    "gamma": (
        ("gamma", (0.2, 0.8)),
        "logx,x",
        [
            [(0.18, 0.7), (0.22, 0.85), (0.23, 0.95), (0.24, 1.05)],
            [(0.17, 0.6), (0.24, 0.95), (0.255, 1.2), (0.27, 1.3)],
            [(0.16, 0.5), (0.255, 1.05), (0.275, 1.25), (0.29, 1.4)],
            [(0.155, 0.45), (0.18, 0.7), (0.29, 1.4), (0.31, 1.55)],
            [(0.14, 0.4), (0.17, 0.6), (0.33, 1.6), (0.35, 1.85)],
        ],
    ),
    "lognormal": (
        ("lognormal", (0.0, 1.5)),
        "logx,logx2",
        [
            [(0.44, 1.3), (0.22, 1.32), (0.18, 1.35), (0.37, 1.38)],
            [(0.7, 1.2), (0.57, 1.30), (0.63, 1.33), (0.60, 1.35)],
            [(0.9, 1.15), (0.62, 1.25), (0.73, 1.30), (0.70, 1.33)],
            [(1.0, 1.0), (0.67, 1.20), (0.83, 1.28), (0.75, 1.32)],
            [(1.2, 0.85), (0.87, 1.0), (0.85, 1.28), (0.95, 1.30)],
        ],
    ),
    "pareto": (
        ("pareto", (2.0,)),
        "logx",
        [
            [(1.9,), (2.1,), (2.35,), (2.5,)],
            [(1.85,), (2.2,), (2.55,), (2.78,)],
            [(1.8,), (2.3,), (2.70,), (2.98,)],
            [(1.75,), (1.85,), (2.85,), (3.2,)],
            [(1.7,), (1.75,), (3.25,), (3.75,)],
        ],
    ),
    "weibull": (
        ("weibull", (0.8, 1.0)),
        "x^0.8",
        [
            [(0.8, 0.76), (0.8, 1.2), (0.8, 1.08), (0.8, 0.90)],
            [(0.8, 0.65), (0.8, 1.26), (0.8, 1.05), (0.8, 0.89)],
            [(0.8, 0.59), (0.8, 1.31), (0.8, 1.10), (0.8, 0.85)],
            [(0.8, 0.53), (0.8, 1.35), (0.8, 1.12), (0.8, 0.82)],
            [(0.8, 0.42), (0.8, 1.42), (0.8, 1.14), (0.8, 0.78)],
        ],
    ),
}


def power_nonnormal(family: str, replicates: int = 2000, seed: int = 55,
                    methods=("DELR", "Wald", "ANOVA", "KW")) -> StudyConfig:
    """Five samples of sizes (30, 40, 25, 45, 50); setting 0 draws every sample from F0."""
    if family not in _NONNORMAL:
        raise ValueError(f"family must be one of {sorted(_NONNORMAL)}")
    (fam0, p0), basis, alts = _NONNORMAL[family]
    settings = [_family([(fam0, p0)] * 5, POWER_SIZES)]
    settings += [_family([(fam0, p0)] + [(fam0, p) for p in row], POWER_SIZES) for row in alts]
    return StudyConfig(f"power-{family}", settings, BasisSpec.parse(basis), "equal:all",
                       replicates=replicates, seed=seed, methods=tuple(methods))


MISSPEC_SIZES = (90, 120, 75, 135, 150)

_WEIBULL2 = [
    [(0.9, 0.95), (0.98, 0.98), (1.03, 1.04), (1.01, 0.95)],
    [(0.85, 0.94), (0.96, 0.96), (1.05, 1.06), (1.02, 0.92)],
    [(0.82, 0.92), (0.95, 0.95), (1.07, 1.07), (1.03, 0.90)],
    [(0.79, 0.91), (0.94, 0.94), (1.09, 1.08), (1.05, 0.89)],
    [(0.75, 0.88), (0.91, 0.92), (1.12, 1.12), (1.07, 0.85)],
]


def power_misspecified(replicates: int = 2000, seed: int = 56,
                       methods=("DELR", "Wald", "ANOVA", "KW")) -> StudyConfig:
    """Two-parameter Weibull data analysed with the (misspecified) basis (x, log x)."""
    f0 = ("weibull", (1.0, 1.0))
    settings = [_family([f0] * 5, MISSPEC_SIZES)]
    settings += [_family([f0] + [("weibull", p) for p in row], MISSPEC_SIZES) for row in _WEIBULL2]
    return StudyConfig("power-misspecified", settings, BasisSpec.parse("x,logx"), "equal:all",
                       replicates=replicates, seed=seed, methods=tuple(methods))


# ---------------------------------------------------------------------------
# Pooling: a test on beta_1 with and without the extra samples
# ---------------------------------------------------------------------------

_NORMAL_F1 = [(1.5, 0.5), (1.57, 0.45), (1.58, 0.41), (1.6, 0.39), (1.62, 0.36), (1.64, 0.31)]
_GAMMA_F1 = [(4, 3), (5.3, 4.3), (6.3, 5.3), (7.1, 6.1), (8.3, 7.3), (10, 9)]

# Extra gamma populations. "near" keeps F2, F3 close to F0 = Gamma(2, 1);
# "far" moves them well away from it.
GAMMA_EXTRAS = {
    "near": [(2.2, 1.1), (1.8, 0.9)],
    "far": [(8.0, 1.0), (1.0, 3.0)],
}


def pooling_normal(replicates: int = 2000, seed: int = 57) -> StudyConfig:
    """N(0,1), F1, N(-1,2) with n = (120, 60, 60); H0: beta_1 = (6, -1.5)."""
    settings = [
        _family([("normal", (0, 1)), ("normal", f1), ("normal", (-1, 2))], (120, 60, 60))
        for f1 in _NORMAL_F1
    ]
    return StudyConfig("pooling-normal", settings, BasisSpec.parse("x,x2"), "fix:1=6,-1.5",
                       replicates=replicates, seed=seed, methods=("DELR", "Wald"), subset_r=1)


def pooling_gamma(extras: str = "near", replicates: int = 2000, seed: int = 58) -> StudyConfig:
    """Gamma(2,1), F1, F2, F3 with n = (60, 30, 40, 90); H0: beta_1 = (-2, 2)."""
    f2, f3 = GAMMA_EXTRAS[extras]
    settings = [
        _family([("gamma", (2, 1)), ("gamma", f1), ("gamma", f2), ("gamma", f3)], (60, 30, 40, 90))
        for f1 in _GAMMA_F1
    ]
    return StudyConfig(f"pooling-gamma-{extras}", settings, BasisSpec.parse("x,logx"), "fix:1=-2,2",
                       replicates=replicates, seed=seed, methods=("DELR", "Wald"), subset_r=1)
