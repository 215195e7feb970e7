"""Monte Carlo studies: null calibration, local alternatives, and power tables.

Every replicate draws from its own RNG stream keyed by (seed, setting,
replicate, sample), so results do not depend on execution order and the
same configuration always reproduces the same table.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .chisq import chi2_cdf_vec, chi2_quantile, chi2_sf, noncentral_chi2_cdf_vec, noncentral_chi2_quantile
from .dual import ConvergenceError
from .hypothesis import parse_hypothesis
from .infer import SmallSampleWarning, TestResult, delr_test, permutation_test, wald_test
from .model import BasisSpec, ConstraintSpec, MultiSample, ParameterError, as_basis
from .power import BaselineSpec, LocalAlternative, noncentrality, theoretical_information

logger = logging.getLogger(__name__)

METHODS = ("DELR", "Wald", "ANOVA", "KW", "Permutation")
WARN_FAILURE_RATE = 0.001
ABORT_FAILURE_RATE = 0.01


class StudyAbortedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """Generating distributions, one per population, with sample sizes."""

    dists: tuple
    sizes: tuple

    def __post_init__(self):
        dists = tuple(d if isinstance(d, BaselineSpec) else BaselineSpec(*d) for d in self.dists)
        sizes = tuple(int(s) for s in self.sizes)
        if len(dists) != len(sizes):
            raise ValueError("need one size per distribution")
        if any(s < 1 for s in sizes):
            raise ValueError(f"sample sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "dists", dists)
        object.__setattr__(self, "sizes", sizes)


def stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def draw(dist: BaselineSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw from a baseline family.

    numpy's normal and gamma generators are ziggurat and Marsaglia-Tsang
    respectively; Weibull and Pareto use the inverse CDF.
    """
    p = dist.params
    if dist.family == "normal":
        return p[0] + p[1] * rng.standard_normal(size)
    if dist.family == "gamma":
        return rng.standard_gamma(p[0], size) / p[1]
    if dist.family == "lognormal":
        return np.exp(p[0] + p[1] * rng.standard_normal(size))
    # 1 - U lies in (0, 1], so the logs below are finite.
    u = 1.0 - rng.random(size)
    if dist.family == "pareto":
        return u ** (-1.0 / p[0])
    return p[1] * (-np.log(u)) ** (1.0 / p[0])


def sample_family(spec: FamilySpec, seed: int, *key: int) -> MultiSample:
    """One dataset; sample k uses the stream (seed, *key, k)."""
    return MultiSample(tuple(draw(d, stream(seed, *key, k), n) for k, (d, n) in enumerate(zip(spec.dists, spec.sizes))))


def tilted(f0: BaselineSpec, basis, beta) -> BaselineSpec:
    """The distribution exp(alpha + beta' q(x)) dF_0(x) when it stays in F_0's family.

    Supported: normal with terms from {x, x2}; gamma with {logx, x};
    lognormal with {logx, logx2}; Pareto with {logx}; Weibull with {x^a}
    where a is the baseline shape.
    """
    basis = as_basis(basis)
    beta = np.asarray(beta, dtype=float)
    coef: dict = {}
    for term, b in zip(basis.spec.terms, beta):
        key = ("pow", term.power) if term.kind == "pow" else term.kind
        coef[key] = coef.get(key, 0.0) + b
    p = f0.params

    def only(*allowed):
        extra = [k for k, v in coef.items() if v != 0 and k not in allowed]
        if extra:
            raise ParameterError(f"cannot tilt {f0} along {extra} within its family")

    if f0.family == "normal":
        only("x", "x2")
        prec = 1.0 / p[1] ** 2 - 2.0 * coef.get("x2", 0.0)
        if prec <= 0:
            raise ParameterError("tilt leaves a non-integrable normal")
        var = 1.0 / prec
        return BaselineSpec("normal", (var * (p[0] / p[1] ** 2 + coef.get("x", 0.0)), math.sqrt(var)))
    if f0.family == "gamma":
        only("logx", "x")
        return BaselineSpec("gamma", (p[0] + coef.get("logx", 0.0), p[1] - coef.get("x", 0.0)))
    if f0.family == "lognormal":
        only("logx", "logx2")
        prec = 1.0 / p[1] ** 2 - 2.0 * coef.get("logx2", 0.0)
        if prec <= 0:
            raise ParameterError("tilt leaves a non-integrable lognormal")
        var = 1.0 / prec
        return BaselineSpec("lognormal", (var * (p[0] / p[1] ** 2 + coef.get("logx", 0.0)), math.sqrt(var)))
    if f0.family == "pareto":
        only("logx")
        return BaselineSpec("pareto", (p[0] - coef.get("logx", 0.0),))
    a, b = p
    key = "x" if a == 1.0 else ("x2" if a == 2.0 else ("pow", a))
    only(key)
    rate = b ** (-a) - coef.get(key, 0.0)
    if rate <= 0:
        raise ParameterError("tilt leaves a non-integrable Weibull")
    return BaselineSpec("weibull", (a, rate ** (-1.0 / a)))


# ---------------------------------------------------------------------------
# Competitor tests
# ---------------------------------------------------------------------------


def anova_test(data: MultiSample) -> TestResult:
    """One-way ANOVA F statistic with an F(m, n - m - 1) reference."""
    groups = data.samples
    n, k = data.n, len(groups)
    df_between, df_within = k - 1, n - k
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if df_within < 1:
        raise ValueError("ANOVA needs within-group degrees of freedom (some group must have >= 2 observations)")
    grand = data.pooled.mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    if ss_within <= 0:
        if ss_between <= 1e-300:
            return TestResult(0.0, df_between, 1.0, "ANOVA")
        return TestResult(math.inf, df_between, 0.0, "ANOVA")
    f = (ss_between / df_between) / (ss_within / df_within)
    return TestResult(float(f), df_between, float(stats.f.sf(f, df_between, df_within)), "ANOVA")


def kruskal_wallis_test(data: MultiSample) -> TestResult:
    """Kruskal-Wallis H with mid-ranks, tie correction, and a chi2_m reference."""
    n, k = data.n, len(data.samples)
    if k < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    ranks = stats.rankdata(data.pooled)
    labels = data.labels
    rank_sums = np.bincount(labels, weights=ranks, minlength=k)
    h = 12.0 / (n * (n + 1)) * np.sum(rank_sums**2 / data.sizes) - 3.0 * (n + 1)
    _, counts = np.unique(data.pooled, return_counts=True)
    correction = 1.0 - np.sum(counts**3 - counts) / (n**3 - n) if n > 1 else 0.0
    if correction <= 0:
        return TestResult(0.0, k - 1, 1.0, "KW")
    h = max(0.0, h / correction)
    return TestResult(float(h), k - 1, chi2_sf(k - 1, h), "KW")


# ---------------------------------------------------------------------------
# Study configuration
# ---------------------------------------------------------------------------


@dataclass
class StudyConfig:
    """A simulation study: settings[0] is the null model.

    ``subset_r`` additionally runs DELR and Wald on samples 0..r only, with
    the hypothesis restricted to beta_1..beta_r; those rows are tagged
    ``DELR_subset`` and ``Wald_subset``.
    """

    scenario: str
    settings: list
    basis: BasisSpec
    constraint: ConstraintSpec
    level: float = 0.05
    replicates: int = 2000
    seed: int = 20160101
    methods: tuple = ("DELR",)
    subset_r: Optional[int] = None
    perm_reps: int = 199

    def __post_init__(self):
        self.settings = [s if isinstance(s, FamilySpec) else FamilySpec(*s) for s in self.settings]
        if not self.settings:
            raise ValueError("study needs at least the null setting 0")
        if not isinstance(self.basis, BasisSpec):
            self.basis = BasisSpec.parse(self.basis)
        m = len(self.settings[0].sizes) - 1
        if isinstance(self.constraint, str):
            self.constraint = parse_hypothesis(self.constraint, m, self.basis.d)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not 0 < self.level <= 1:
            raise ValueError(f"level must lie in (0, 1], got {self.level}")

    @property
    def m(self) -> int:
        return len(self.settings[0].sizes) - 1


def load_study_config(source) -> StudyConfig:
    """Read a study config from a JSON path, JSON text, or a dict.

    Schema::

        {"scenario": str,
         "families": [[{"family": "gamma", "params": [2, 1], "size": 30}, ...],  # setting 0
                      ...],
         "basis": "logx,x", "hypothesis": "equal:all", "level": 0.05,
         "replicates": 2000, "seed": 1, "methods": ["DELR", "KW"],
         "subset_r": null, "perm_reps": 199}
    """
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        raw = json.loads(Path(text).read_text() if not text.lstrip().startswith("{") else text)
    try:
        settings = [
            FamilySpec(tuple(BaselineSpec(p["family"], tuple(p["params"])) for p in setting),
                       tuple(p["size"] for p in setting))
            for setting in raw["families"]
        ]
        return StudyConfig(
            scenario=raw.get("scenario", "study"),
            settings=settings,
            basis=BasisSpec.parse(raw["basis"]),
            constraint=raw["hypothesis"],
            level=float(raw.get("level", 0.05)),
            replicates=int(raw.get("replicates", 2000)),
            seed=int(raw.get("seed", 20160101)),
            methods=tuple(raw.get("methods", ["DELR"])),
            subset_r=raw.get("subset_r"),
            perm_reps=int(raw.get("perm_reps", 199)),
        )
    except KeyError as exc:
        raise ValueError(f"study config is missing key {exc}") from None


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def _map(fn, items, workers: Optional[int]):
    """Apply fn over items, in parallel when workers > 1; results keep item order."""
    items = list(items)
    if workers is None:
        workers = 1
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        return fn(*args, **kwargs)


def _delr_stat(data, basis, c) -> Optional[float]:
    try:
        return _quiet(delr_test, data, basis, c, warn=False).statistic
    except (ConvergenceError, np.linalg.LinAlgError):
        return None


def _check_failures(failures: int, total: int, what: str):
    if total and failures / total > ABORT_FAILURE_RATE:
        raise StudyAbortedError(f"{what}: {failures} of {total} fits failed (> {ABORT_FAILURE_RATE:.0%})")
    if total and failures / total > WARN_FAILURE_RATE:
        warnings.warn(f"{what}: {failures} of {total} fits failed and were excluded", RuntimeWarning)


def ks_distance(sample, cdf) -> float:
    """Kolmogorov distance between the empirical CDF of ``sample`` and ``cdf``."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


@dataclass
class NullStudyResult:
    rejection_rate: float
    statistics: np.ndarray
    df: int
    failures: int
    level: float

    @property
    def se(self) -> float:
        p, n = self.rejection_rate, self.statistics.size
        return math.sqrt(p * (1 - p) / n) if n else float("nan")

    def qq_pairs(self) -> np.ndarray:
        """(chi2_q quantile at (i - 0.5)/N, i-th smallest statistic) rows."""
        x = np.sort(self.statistics)
        probs = (np.arange(1, x.size + 1) - 0.5) / x.size
        theo = np.array([chi2_quantile(self.df, p) for p in probs])
        return np.column_stack([theo, x])

    def ks_distance(self) -> float:
        return ks_distance(self.statistics, lambda t: chi2_cdf_vec(self.df, t))


def _null_replicate(rep: int, cfg: StudyConfig):
    data = sample_family(cfg.settings[0], cfg.seed, 0, rep)
    return _delr_stat(data, cfg.basis, cfg.constraint)


def run_null_study(cfg: StudyConfig, workers: Optional[int] = 1) -> NullStudyResult:
    """Simulate setting 0 and record the DELR statistic of every replicate."""
    stats_ = _map(partial(_null_replicate, cfg=cfg), range(cfg.replicates), workers)
    ok = np.array([s for s in stats_ if s is not None], dtype=float)
    failures = len(stats_) - ok.size
    _check_failures(failures, len(stats_), f"null study {cfg.scenario!r}")
    crit = chi2_quantile(cfg.constraint.q, 1 - cfg.level) if cfg.level < 1 else 0.0
    rate = float(np.mean(ok >= crit)) if ok.size else float("nan")
    return NullStudyResult(rate, ok, cfg.constraint.q, failures, cfg.level)


@dataclass
class LocalStudy:
    """Data from tilts of F_0 at beta_k* + n_k^{-1/2} c_k with the given sample sizes."""

    f0: BaselineSpec
    basis: BasisSpec
    sizes: tuple
    constraint: ConstraintSpec
    beta_star: np.ndarray
    drifts: np.ndarray
    replicates: int = 2000
    seed: int = 20160102
    scenario: str = "local"

    def __post_init__(self):
        if not isinstance(self.basis, BasisSpec):
            self.basis = BasisSpec.parse(self.basis)
        m, d = len(self.sizes) - 1, self.basis.d
        if isinstance(self.constraint, str):
            self.constraint = parse_hypothesis(self.constraint, m, d)
        self.beta_star = np.asarray(self.beta_star, float).reshape(m * d)
        self.drifts = np.asarray(self.drifts, float).reshape(m, d)

    @property
    def rho(self) -> np.ndarray:
        sizes = np.asarray(self.sizes, dtype=float)
        return sizes / sizes.sum()

    @property
    def alternative(self) -> LocalAlternative:
        return LocalAlternative(self.beta_star, self.drifts, self.rho)

    def family_spec(self) -> FamilySpec:
        d = self.basis.d
        betas = self.beta_star.reshape(-1, d) + self.drifts / np.sqrt(np.asarray(self.sizes[1:], float))[:, None]
        dists = (self.f0,) + tuple(tilted(self.f0, self.basis, b) for b in betas)
        return FamilySpec(dists, tuple(self.sizes))


@dataclass
class LocalStudyResult:
    statistics: np.ndarray
    delta2: float
    df: int
    failures: int

    def cdf(self, x):
        return noncentral_chi2_cdf_vec(self.df, self.delta2, x)

    def ks_test(self):
        """One-sample KS test of the statistics against chi2_q(delta2)."""
        return stats.kstest(self.statistics, self.cdf)

    def qq_pairs(self) -> np.ndarray:
        x = np.sort(self.statistics)
        probs = (np.arange(1, x.size + 1) - 0.5) / x.size
        theo = np.array([noncentral_chi2_quantile(self.df, self.delta2, p) for p in probs])
        return np.column_stack([theo, x])


def _local_replicate(rep: int, fam: FamilySpec, study: LocalStudy):
    data = sample_family(fam, study.seed, 0, rep)
    return _delr_stat(data, study.basis, study.constraint)


def run_local_alternative_study(study: LocalStudy, workers: Optional[int] = 1) -> LocalStudyResult:
    """Simulated R_n under a local alternative plus the limiting noncentrality."""
    alt = study.alternative
    U = theoretical_information(study.f0, alt.beta_star, alt.rho, study.basis)
    delta2 = noncentrality(alt, U, study.constraint)
    fam = study.family_spec()
    out = _map(partial(_local_replicate, fam=fam, study=study), range(study.replicates), workers)
    ok = np.array([s for s in out if s is not None], dtype=float)
    failures = len(out) - ok.size
    _check_failures(failures, len(out), f"local-alternative study {study.scenario!r}")
    return LocalStudyResult(ok, delta2, study.constraint.q, failures)


@dataclass
class PowerRow:
    setting: int
    method: str
    rate: float
    se: float
    failures: int
    replicates: int


@dataclass
class PowerTable:
    scenario: str
    rows: list = field(default_factory=list)

    def rate(self, setting: int, method: str) -> PowerRow:
        for row in self.rows:
            if row.setting == setting and row.method == method:
                return row
        raise KeyError((setting, method))

    def to_csv(self, path_or_file):
        header = ["setting", "method", "rate", "se", "failures"]
        if hasattr(path_or_file, "write"):
            _write_rows(path_or_file, header, self.rows)
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_rows(fh, header, self.rows)


def _write_rows(fh, header, rows):
    writer = csv.writer(fh)
    writer.writerow(header)
    for r in rows:
        writer.writerow([r.setting, r.method, f"{r.rate:.6g}", f"{r.se:.6g}", r.failures])


def _subset_constraint(cfg: StudyConfig) -> ConstraintSpec:
    d, r = cfg.basis.d, cfg.subset_r
    A = cfg.constraint.A
    if np.any(A[:, r * d :]):
        raise ValueError("subset analysis needs a hypothesis on beta_1..beta_r only")
    return ConstraintSpec(A[:, : r * d], cfg.constraint.b)


def _power_replicate(key: tuple, cfg: StudyConfig):
    setting, rep = key
    data = sample_family(cfg.settings[setting], cfg.seed, setting, rep)
    pvals = {}
    for method in cfg.methods:
        try:
            if method == "DELR":
                res = _quiet(delr_test, data, cfg.basis, cfg.constraint, warn=False)
            elif method == "Wald":
                res = _quiet(wald_test, data, cfg.basis, cfg.constraint, warn=False)
            elif method == "ANOVA":
                res = anova_test(data)
            elif method == "KW":
                res = kruskal_wallis_test(data)
            else:
                res = permutation_test(data, cfg.basis, cfg.perm_reps, seed=int(np.random.SeedSequence([cfg.seed, setting, rep, 99]).generate_state(1)[0]),
                                       c=cfg.constraint)
            pvals[method] = res.p_value
        except (ConvergenceError, np.linalg.LinAlgError):
            pvals[method] = None
    if cfg.subset_r is not None:
        sub = data.subset(range(cfg.subset_r + 1))
        c_sub = _subset_constraint(cfg)
        for method, fn in (("DELR", delr_test), ("Wald", wald_test)):
            if method not in cfg.methods:
                continue
            try:
                pvals[f"{method}_subset"] = _quiet(fn, sub, cfg.basis, c_sub, warn=False).p_value
            except (ConvergenceError, np.linalg.LinAlgError):
                pvals[f"{method}_subset"] = None
    return pvals


def run_power_study(cfg: StudyConfig, workers: Optional[int] = 1, settings: Optional[Sequence[int]] = None) -> PowerTable:
    """Rejection rates per (setting, method) with Monte Carlo standard errors."""
    settings = range(len(cfg.settings)) if settings is None else settings
    table = PowerTable(cfg.scenario)
    for s in settings:
        out = _map(partial(_power_replicate, cfg=cfg), [(s, r) for r in range(cfg.replicates)], workers)
        for method in out[0]:
            pv = [o[method] for o in out]
            ok = np.array([p for p in pv if p is not None], dtype=float)
            failures = len(pv) - ok.size
            _check_failures(failures, len(pv), f"{cfg.scenario} setting {s} {method}")
            rate = float(np.mean(ok < cfg.level)) if ok.size else float("nan")
            se = math.sqrt(rate * (1 - rate) / ok.size) if ok.size else float("nan")
            table.rows.append(PowerRow(s, method, rate, se, failures, ok.size))
    return table


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def write_qq_csv(path, pairs: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theoretical", "empirical"])
        for t, e in pairs:
            writer.writerow([f"{t:.10g}", f"{e:.10g}"])
