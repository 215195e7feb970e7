import math
from fractions import Fraction

import numpy as np
import pytest

from drmtest.model import (
    BasisSpec,
    ConstraintSpec,
    DomainError,
    MultiSample,
    ParameterError,
    Theta,
    build_basis,
    gamma_drm_params,
    normal_drm_params,
    parse_term,
    validate_dataset,
)


def test_basis_x_x2_at_two():
    np.testing.assert_array_equal(build_basis(BasisSpec.parse("x,x2"))(2.0), [2.0, 4.0])


def test_basis_logx_x_at_one():
    np.testing.assert_array_equal(build_basis(BasisSpec.parse("logx,x"))(1.0), [0.0, 1.0])


def test_basis_domain_error_names_term():
    q = build_basis(BasisSpec.parse("logx,x"))
    with pytest.raises(DomainError, match="logx"):
        q(0.0)


def test_basis_vectorised_shape():
    q = build_basis(BasisSpec.parse("x, logx, sqrtx, x^1.5"))
    out = q(np.array([1.0, 4.0, 9.0]))
    assert out.shape == (3, 4)
    np.testing.assert_allclose(out[1], [4.0, math.log(4.0), 2.0, 8.0])


@pytest.mark.parametrize("bad", ["", "x,x", "cosx", "x^abc"])
def test_basis_parse_rejects(bad):
    with pytest.raises(ValueError):
        BasisSpec.parse(bad)


def test_parse_term_aliases():
    assert parse_term("log2x").name == parse_term("logx2").name
    assert BasisSpec.parse("x,x2").d == 2


def test_validate_ok():
    assert validate_dataset(MultiSample(([1, 2, 3], [4, 5, 6, 7])), "x,x2").ok


def test_validate_domain_violation():
    rep = validate_dataset(MultiSample(([1, 2, -1], [4, 5])), "logx,x")
    assert not rep.ok
    assert any("domain" in v for v in rep.violations)


def test_validate_single_sample():
    rep = validate_dataset(MultiSample(([1.0, 2.0],)), "x")
    assert any("m >= 1" in v for v in rep.violations)


def test_exact_proportions_sum_to_one():
    data = MultiSample(([1.0] * 3, [2.0] * 4, [3.0] * 5))
    assert sum(data.exact_proportions()) == Fraction(1)
    np.testing.assert_array_equal(data.sizes, [3, 4, 5])
    assert data.n == 12 and data.m == 2


def test_theta_roundtrip():
    t = Theta([0.1, 0.2], [1, 2, 3, 4])
    assert t.d == 2
    back = Theta.from_vector(t.to_vector(), 2)
    np.testing.assert_array_equal(back.beta_blocks, [[1, 2], [3, 4]])


def test_theta_bad_lengths():
    with pytest.raises(ValueError):
        Theta([0.1, 0.2], [1, 2, 3])


def test_constraint_rank_check():
    with pytest.raises(ValueError, match="full row rank"):
        ConstraintSpec(np.array([[1.0, 0.0], [2.0, 0.0]]), np.zeros(2))


def test_constraint_helpers():
    c = ConstraintSpec.equal_pairs([(1, 2)], 2, 2)
    np.testing.assert_array_equal(c.A, np.hstack([np.eye(2), -np.eye(2)]))
    assert ConstraintSpec.all_equal(2, 2).is_full_equality()
    f = ConstraintSpec.fixed(1, [6, -1.5], 2, 2)
    assert not f.is_full_equality()
    np.testing.assert_allclose(f.residual([6, -1.5, 9, 9]), 0.0)


@pytest.mark.parametrize(
    "args, alpha, beta",
    [
        ((0, 1, 0, 1), 0.0, (0.0, 0.0)),
        ((0, 1, 1, 1), -0.5, (1.0, 0.0)),
        ((0, 1, 0, 2), math.log(0.5), (0.0, 0.375)),
    ],
)
def test_normal_drm_params(args, alpha, beta):
    a, b = normal_drm_params(*args)
    assert a == pytest.approx(alpha, abs=1e-12)
    np.testing.assert_allclose(b, beta, atol=1e-12)


def test_normal_drm_params_reproduce_density_ratio():
    from scipy import stats

    a, b = normal_drm_params(0.3, 1.2, -0.7, 0.8)
    x = np.linspace(-3, 3, 7)
    log_ratio = stats.norm.logpdf(x, -0.7, 0.8) - stats.norm.logpdf(x, 0.3, 1.2)
    np.testing.assert_allclose(a + b[0] * x + b[1] * x * x, log_ratio, atol=1e-12)


def test_gamma_drm_params_reproduce_density_ratio():
    from scipy import stats

    a, b = gamma_drm_params(2.0, 1.0, 4.0, 3.0)
    x = np.linspace(0.2, 6, 7)
    log_ratio = stats.gamma.logpdf(x, 4.0, scale=1 / 3.0) - stats.gamma.logpdf(x, 2.0, scale=1.0)
    np.testing.assert_allclose(a + b[0] * np.log(x) + b[1] * x, log_ratio, atol=1e-12)


def test_drm_params_reject_bad_scale():
    with pytest.raises(ParameterError):
        normal_drm_params(0, -1, 0, 1)
