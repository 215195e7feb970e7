"""Text grammar for linear hypotheses on beta.

    equal:all                 beta = 0 (all distributions equal), q = m*d
    equal:i,j[;k,l...]        beta_i = beta_j for each pair (0 is the baseline)
    zero:i[,j...]             beta_i = 0
    fix:i=v1,...,vd           beta_i = (v1, ..., vd)
    lincomb:<expr>=c          sum_k a_k beta_k = c, e.g. "2*b1-b2=0";
                              scalars broadcast over the d components,
                              c is a scalar or d comma-separated values

Several clauses may be joined with ``&``; their rows are stacked.
"""

from __future__ import annotations

import re

import numpy as np

from .model import ConstraintSpec


class HypothesisParseError(ValueError):
    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.position = position


def _index(tok: str, m: int, text: str, pos: int, allow_zero: bool = True) -> int:
    tok = tok.strip()
    if not tok.isdigit():
        raise HypothesisParseError(f"expected a sample index, got {tok!r}", text, pos)
    k = int(tok)
    if k > m or (k == 0 and not allow_zero):
        raise HypothesisParseError(f"sample index {k} out of range 1..{m}", text, pos)
    return k


_TERM = re.compile(r"\s*([+-]?)\s*(\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*b(\d+)\s*")


def _lincomb(body: str, m: int, d: int, text: str, offset: int):
    if body.count("=") != 1:
        raise HypothesisParseError("lincomb needs exactly one '='", text, offset)
    lhs, rhs = body.split("=")
    coefs = np.zeros(m)
    pos = 0
    first = True
    while pos < len(lhs):
        mt = _TERM.match(lhs, pos)
        if not mt or mt.end() == pos:
            raise HypothesisParseError("malformed linear term", text, offset + pos)
        sign, num, idx = mt.groups()
        if not first and not sign:
            raise HypothesisParseError("missing '+' or '-' between terms", text, offset + pos)
        k = _index(idx, m, text, offset + pos, allow_zero=False)
        val = float(num) if num not in ("", ".") else 1.0
        coefs[k - 1] += -val if sign == "-" else val
        pos = mt.end()
        first = False
    if first:
        raise HypothesisParseError("empty left-hand side", text, offset)
    try:
        c = np.array([float(v) for v in rhs.split(",")])
    except ValueError:
        raise HypothesisParseError("right-hand side must be numeric", text, offset + len(lhs) + 1) from None
    if c.size not in (1, d):
        raise HypothesisParseError(f"right-hand side needs 1 or {d} values", text, offset + len(lhs) + 1)
    A = np.kron(coefs[None, :], np.eye(d))
    return A, np.broadcast_to(c, (d,)).astype(float)


def _clause(clause: str, m: int, d: int, text: str, offset: int):
    kind, sep, body = clause.partition(":")
    kind = kind.strip().lower()
    if not sep:
        raise HypothesisParseError("expected '<kind>:<body>'", text, offset)
    boff = offset + len(kind) + 1
    if kind == "equal":
        if body.strip().lower() == "all":
            return np.eye(m * d), np.zeros(m * d)
        pairs = []
        for part in body.split(";"):
            items = part.split(",")
            if len(items) != 2:
                raise HypothesisParseError("equal needs pairs 'i,j'", text, boff)
            pairs.append((_index(items[0], m, text, boff), _index(items[1], m, text, boff)))
        c = ConstraintSpec.equal_pairs(pairs, m, d)
        return c.A, c.b
    if kind == "zero":
        rows = []
        for tok in body.split(","):
            k = _index(tok, m, text, boff, allow_zero=False)
            block = np.zeros((d, m * d))
            block[:, (k - 1) * d : k * d] = np.eye(d)
            rows.append(block)
        A = np.vstack(rows)
        return A, np.zeros(A.shape[0])
    if kind == "fix":
        idx, eq, vals = body.partition("=")
        if not eq:
            raise HypothesisParseError("fix needs 'i=v1,...,vd'", text, boff)
        k = _index(idx, m, text, boff, allow_zero=False)
        try:
            v = np.array([float(t) for t in vals.split(",")])
        except ValueError:
            raise HypothesisParseError("fix values must be numeric", text, boff + len(idx) + 1) from None
        if v.size not in (1, d):
            raise HypothesisParseError(f"fix needs {d} values", text, boff + len(idx) + 1)
        c = ConstraintSpec.fixed(k, v, m, d)
        return c.A, c.b
    if kind == "lincomb":
        return _lincomb(body, m, d, text, boff)
    raise HypothesisParseError(f"unknown hypothesis kind {kind!r}", text, offset)


def parse_hypothesis(text: str, m: int, d: int) -> ConstraintSpec:
    """Parse a hypothesis string into a :class:`ConstraintSpec` for m non-baseline samples."""
    rows, rhs = [], []
    offset = 0
    for clause in text.split("&"):
        try:
            A, b = _clause(clause, m, d, text, offset)
        except HypothesisParseError:
            raise
        except ValueError as exc:
            raise HypothesisParseError(str(exc), text, offset) from exc
        rows.append(A)
        rhs.append(b)
        offset += len(clause) + 1
    A = np.vstack(rows)
    try:
        return ConstraintSpec(A, np.concatenate(rhs))
    except ValueError as exc:
        raise HypothesisParseError(str(exc), text, 0) from exc


def _fmt(v: float) -> str:
    return repr(float(v))


def format_hypothesis(c: ConstraintSpec, m: int, d: int) -> str:
    """Inverse of :func:`parse_hypothesis` up to row order.

    Each d-row block is written as one ``lincomb`` clause. Blocks that are
    not scalar combinations of the beta_k raise ``ValueError``.
    """
    A, b = c.A, c.b
    if A.shape[0] % d:
        raise ValueError("constraint rows are not grouped in blocks of d")
    clauses = []
    for start in range(0, A.shape[0], d):
        block = A[start : start + d]
        coefs = []
        for k in range(m):
            sub = block[:, k * d : (k + 1) * d]
            a = sub[0, 0]
            if not np.allclose(sub, a * np.eye(d), rtol=0, atol=0):
                raise ValueError("constraint block is not a scalar combination of beta blocks")
            coefs.append(a)
        terms = "".join(f"{'+' if a >= 0 else '-'}{_fmt(abs(a))}*b{k + 1}" for k, a in enumerate(coefs) if a != 0)
        rhs = ",".join(_fmt(v) for v in b[start : start + d])
        clauses.append(f"lincomb:{terms}={rhs}")
    return "&".join(clauses)
