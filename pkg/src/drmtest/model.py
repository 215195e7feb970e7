"""Domain types: multiple samples, basis functions, DRM parameters, constraints.

A density ratio model links m+1 distributions through

    dF_k(x) = exp(alpha_k + beta_k' q(x)) dF_0(x),   k = 0..m,

with (alpha_0, beta_0) = 0. Everything downstream works with the pooled
observations, the sample labels, and the basis matrix q(x) evaluated on
the pooled data.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

RANK_TOL = 1e-10


class DomainError(ValueError):
    """An observation lies outside the domain of a basis term."""


class ParameterError(ValueError):
    """Invalid distribution or model parameter."""


# ---------------------------------------------------------------------------
# Basis functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    """One basis term.

    kind is one of ``"x"``, ``"x2"``, ``"pow"``, ``"logx"``, ``"logx2"``.
    ``power`` is only meaningful for ``"pow"``.
    """

    kind: str
    power: float = 1.0

    def __post_init__(self):
        if self.kind not in ("x", "x2", "pow", "logx", "logx2"):
            raise ValueError(f"unknown basis term kind {self.kind!r}")
        if self.kind == "pow":
            if not (self.power > 0 and math.isfinite(self.power)):
                raise ValueError(f"power term needs a finite exponent > 0, got {self.power}")
            # x^1 and x^2 have dedicated kinds; keep terms canonical so that
            # distinctness checks are meaningful.
            if self.power == 1.0:
                object.__setattr__(self, "kind", "x")
            elif self.power == 2.0:
                object.__setattr__(self, "kind", "x2")
        if self.kind != "pow":
            object.__setattr__(self, "power", 1.0)

    @property
    def name(self) -> str:
        if self.kind == "pow":
            if self.power == 0.5:
                return "sqrtx"
            return f"x^{self.power:g}"
        return self.kind

    @property
    def needs_positive(self) -> bool:
        # Integer powers are defined everywhere; fractional powers and logs are not.
        return self.kind in ("logx", "logx2", "pow")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "x":
            return x
        if self.kind == "x2":
            return x * x
        if self.kind == "pow":
            return x**self.power
        lx = np.log(x)
        return lx if self.kind == "logx" else lx * lx


_TERM_ALIASES = {
    "x": Term("x"),
    "x2": Term("x2"),
    "x^2": Term("x2"),
    "logx": Term("logx"),
    "log": Term("logx"),
    "logx2": Term("logx2"),
    "log2x": Term("logx2"),
    "(logx)^2": Term("logx2"),
    "sqrtx": Term("pow", 0.5),
}


def parse_term(token: str) -> Term:
    """Parse a term name such as ``x``, ``x2``, ``logx``, ``log2x``, ``sqrtx`` or ``x^0.8``."""
    tok = token.strip().lower().replace(" ", "")
    if tok in _TERM_ALIASES:
        return _TERM_ALIASES[tok]
    m = re.fullmatch(r"x\^?([0-9]*\.?[0-9]+(?:e[-+]?\d+)?)", tok)
    if m:
        return Term("pow", float(m.group(1)))
    raise ValueError(f"unknown basis term {token!r}")


@dataclass(frozen=True)
class BasisSpec:
    """Ordered list of distinct basis terms; d = len(terms)."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("basis needs at least one term")
        if len(set(terms)) != len(terms):
            raise ValueError(f"basis terms must be distinct: {[t.name for t in terms]}")

    @classmethod
    def parse(cls, spec: str | Sequence[str]) -> "BasisSpec":
        """Build from ``"x,x2"`` or ``["logx", "x"]``."""
        tokens = spec.split(",") if isinstance(spec, str) else list(spec)
        return cls(tuple(parse_term(t) for t in tokens))

    @property
    def d(self) -> int:
        return len(self.terms)

    @property
    def needs_positive(self) -> bool:
        return any(t.needs_positive for t in self.terms)

    def __str__(self) -> str:
        return ",".join(t.name for t in self.terms)


class BasisFn:
    """Evaluator x -> q(x) in R^d built from a :class:`BasisSpec`.

    Calling with a scalar returns shape (d,); with an array of shape (n,)
    returns (n, d).
    """

    def __init__(self, spec: BasisSpec):
        self.spec = spec
        self.d = spec.d

    def __call__(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        for term in self.spec.terms:
            if term.needs_positive:
                bad = ~(arr > 0)
                if bad.any():
                    value = arr[bad][0]
                    raise DomainError(
                        f"basis term {term.name!r} requires x > 0, got x = {value!r}"
                    )
        out = np.column_stack([term(arr) for term in self.spec.terms])
        return out[0] if scalar else out

    def __repr__(self) -> str:
        return f"BasisFn({self.spec})"


def build_basis(spec: BasisSpec | str | Sequence[str]) -> BasisFn:
    if not isinstance(spec, BasisSpec):
        spec = BasisSpec.parse(spec)
    return BasisFn(spec)


def as_basis(basis) -> BasisFn:
    return basis if isinstance(basis, BasisFn) else build_basis(basis)


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MultiSample:
    """m+1 samples of scalar observations; index 0 is the baseline.

    Samples are kept exactly as given (no sorting, ties allowed).
    """

    samples: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrs = []
        for s in self.samples:
            a = np.array(s, dtype=float).ravel()
            a.setflags(write=False)
            arrs.append(a)
        object.__setattr__(self, "samples", tuple(arrs))

    @property
    def m(self) -> int:
        return len(self.samples) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.samples], dtype=int)

    @property
    def n(self) -> int:
        return int(sum(len(s) for s in self.samples))

    @property
    def proportions(self) -> np.ndarray:
        """lambda_k = n_k / n."""
        return self.sizes / self.n

    def exact_proportions(self) -> list[Fraction]:
        n = self.n
        return [Fraction(len(s), n) for s in self.samples]

    @property
    def pooled(self) -> np.ndarray:
        return np.concatenate(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.m + 1), self.sizes)

    def subset(self, indices: Iterable[int]) -> "MultiSample":
        return MultiSample(tuple(self.samples[i] for i in indices))

    def __len__(self) -> int:
        return len(self.samples)

    def __repr__(self) -> str:
        return f"MultiSample(sizes={self.sizes.tolist()})"


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_dataset(data: MultiSample | Sequence, spec: BasisSpec | str) -> ValidationReport:
    """Check a dataset against a basis without raising."""
    if not isinstance(spec, BasisSpec):
        spec = BasisSpec.parse(spec)
    samples = data.samples if isinstance(data, MultiSample) else tuple(np.asarray(s, float) for s in data)
    report = ValidationReport()
    if len(samples) < 2:
        report.violations.append(f"need m >= 1 (at least 2 samples), got {len(samples)} sample(s)")
    for k, s in enumerate(samples):
        s = np.asarray(s, dtype=float)
        if s.size == 0:
            report.violations.append(f"sample {k} is empty")
            continue
        if not np.all(np.isfinite(s)):
            report.violations.append(f"sample {k} contains non-finite values")
            continue
        for term in spec.terms:
            if term.needs_positive and np.any(s <= 0):
                report.violations.append(
                    f"domain: sample {k} has values <= 0 (min {s.min():g}) but term {term.name!r} needs x > 0"
                )
    return report


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Theta:
    """Stacked DRM parameters; alpha_0 = beta_0 = 0 are implicit."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).ravel()
        b = np.array(self.beta, dtype=float).ravel()
        if a.size == 0:
            raise ValueError("alpha must have length m >= 1")
        if b.size % a.size:
            raise ValueError(f"beta length {b.size} is not a multiple of m = {a.size}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def d(self) -> int:
        return self.beta.size // self.alpha.size

    @property
    def beta_blocks(self) -> np.ndarray:
        """beta as an (m, d) array, row k-1 is beta_k."""
        return self.beta.reshape(self.m, self.d)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    @classmethod
    def from_vector(cls, vec, m: int) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:m], vec[m:])

    @classmethod
    def zeros(cls, m: int, d: int) -> "Theta":
        return cls(np.zeros(m), np.zeros(m * d))

    def __repr__(self) -> str:
        return f"Theta(alpha={self.alpha.tolist()}, beta={self.beta_blocks.tolist()})"


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Linear hypothesis A beta = b with A of full row rank q."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        b = np.array(self.b, dtype=float).ravel()
        if b.size == 1 and A.shape[0] > 1 and np.all(b == b[0]):
            b = np.full(A.shape[0], b[0])
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has length {b.size}")
        if not 1 <= A.shape[0] <= A.shape[1]:
            raise ValueError(f"need 1 <= q <= m*d, got A of shape {A.shape}")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] <= RANK_TOL * max(1.0, sv[0]):
            raise ValueError(f"A must have full row rank; smallest singular value {sv[-1]:.3g}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def residual(self, beta) -> np.ndarray:
        return self.A @ np.asarray(beta, float) - self.b

    def is_full_equality(self) -> bool:
        """True when the hypothesis is beta = 0 (all distributions equal)."""
        # A is square and nonsingular here, so A beta = 0 forces beta = 0.
        return self.q == self.dim and not np.any(self.b != 0)

    @classmethod
    def all_equal(cls, m: int, d: int) -> "ConstraintSpec":
        return cls(np.eye(m * d), np.zeros(m * d))

    @classmethod
    def equal_pairs(cls, pairs: Sequence[tuple[int, int]], m: int, d: int) -> "ConstraintSpec":
        """beta_i = beta_j for each pair; index 0 means the baseline (beta_0 = 0)."""
        rows = []
        for i, j in pairs:
            block = np.zeros((d, m * d))
            if i:
                block[:, (i - 1) * d : i * d] += np.eye(d)
            if j:
                block[:, (j - 1) * d : j * d] -= np.eye(d)
            rows.append(block)
        A = np.vstack(rows)
        return cls(A, np.zeros(A.shape[0]))

    @classmethod
    def fixed(cls, k: int, value, m: int, d: int) -> "ConstraintSpec":
        """beta_k = value."""
        A = np.zeros((d, m * d))
        A[:, (k - 1) * d : k * d] = np.eye(d)
        return cls(A, np.broadcast_to(np.asarray(value, float), (d,)).copy())


# ---------------------------------------------------------------------------
# Closed-form parametric embeddings
# ---------------------------------------------------------------------------


def normal_drm_params(mu0: float, sigma0: float, muk: float, sigmak: float) -> tuple[float, np.ndarray]:
    """(alpha_k, beta_k) of N(muk, sigmak^2) relative to N(mu0, sigma0^2) under q(x) = (x, x^2)."""
    if not (sigma0 > 0 and sigmak > 0):
        raise ParameterError(f"standard deviations must be positive, got {sigma0}, {sigmak}")
    v0, vk = sigma0 * sigma0, sigmak * sigmak
    beta = np.array([muk / vk - mu0 / v0, 1 / (2 * v0) - 1 / (2 * vk)])
    alpha = math.log(sigma0 / sigmak) + mu0 * mu0 / (2 * v0) - muk * muk / (2 * vk)
    return alpha, beta


def gamma_drm_params(shape0: float, rate0: float, shapek: float, ratek: float) -> tuple[float, np.ndarray]:
    """(alpha_k, beta_k) of Gamma(shapek, ratek) relative to Gamma(shape0, rate0) under q(x) = (log x, x)."""
    if min(shape0, rate0, shapek, ratek) <= 0:
        raise ParameterError("gamma shape and rate must be positive")
    beta = np.array([shapek - shape0, rate0 - ratek])
    alpha = (
        shapek * math.log(ratek) - math.lgamma(shapek)
        - shape0 * math.log(rate0) + math.lgamma(shape0)
    )
    return alpha, beta
