import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmtest.hypothesis import HypothesisParseError, format_hypothesis, parse_hypothesis
from drmtest.model import ConstraintSpec


def test_equal_all():
    c = parse_hypothesis("equal:all", 2, 2)
    np.testing.assert_array_equal(c.A, np.eye(4))
    np.testing.assert_array_equal(c.b, 0)
    assert c.q == 4


def test_lincomb_example():
    c = parse_hypothesis("lincomb:2*b1-b2=0", 2, 2)
    np.testing.assert_array_equal(c.A, np.hstack([2 * np.eye(2), -np.eye(2)]))
    np.testing.assert_array_equal(c.b, 0)


def test_equal_pairs_six_samples():
    c = parse_hypothesis("equal:1,2;3,4", 5, 2)
    assert c.q == 4
    beta = np.array([1, 2, 1, 2, 3, 4, 3, 4, 9, 9], dtype=float)
    np.testing.assert_allclose(c.residual(beta), 0.0)


def test_zero_fix_and_conjunction():
    c = parse_hypothesis("zero:1 & fix:2=6,-1.5", 2, 2)
    assert c.q == 4
    np.testing.assert_allclose(c.residual([0, 0, 6, -1.5]), 0.0)


def test_equal_with_baseline_index():
    c = parse_hypothesis("equal:0,2", 2, 1)
    np.testing.assert_array_equal(c.A, [[0.0, -1.0]])


@pytest.mark.parametrize(
    "text",
    ["equal:9,1", "zero:0", "nonsense:1", "lincomb:2*b1-b2", "fix:1=a,b", "equal:1,1", "lincomb:b1 b2=0", "equal"],
)
def test_parse_errors(text):
    with pytest.raises(HypothesisParseError) as info:
        parse_hypothesis(text, 2, 2)
    assert info.value.position >= 0


def test_format_roundtrip_examples():
    for text in ["equal:all", "lincomb:2*b1-b2=0", "equal:1,2;3,4", "fix:1=6,-1.5"]:
        m = 5 if "3,4" in text else 2
        c = parse_hypothesis(text, m, 2)
        back = parse_hypothesis(format_hypothesis(c, m, 2), m, 2)
        np.testing.assert_allclose(back.A, c.A)
        np.testing.assert_allclose(back.b, c.b)


@settings(max_examples=60, deadline=None)
@given(
    m=st.integers(1, 4),
    d=st.integers(1, 3),
    coefs=st.lists(st.lists(st.integers(-3, 3), min_size=4, max_size=4), min_size=1, max_size=3),
    rhs=st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3),
)
def test_format_roundtrip_property(m, d, coefs, rhs):
    blocks = [np.array(c[:m], float) for c in coefs]
    A = np.vstack([np.kron(b[None, :], np.eye(d)) for b in blocks])
    b = np.concatenate([np.full(d, rhs[i % 3]) for i in range(len(blocks))])
    try:
        c = ConstraintSpec(A, b)
    except ValueError:
        return  # rank deficient draw
    back = parse_hypothesis(format_hypothesis(c, m, d), m, d)
    np.testing.assert_array_equal(back.A, c.A)
    np.testing.assert_array_equal(back.b, c.b)
