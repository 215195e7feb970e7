import warnings

import numpy as np
import pytest
from scipy import stats

from drmtest.dual import del_derivatives, fit_mele
from drmtest.infer import (
    InfoMatrix,
    SingularInformationError,
    SmallSampleWarning,
    UnsupportedHypothesisError,
    delr_test,
    empirical_information,
    permutation_test,
    wald_test,
)
from drmtest.model import ConstraintSpec, MultiSample, Theta
from drmtest.power import BaselineSpec, theoretical_information
from drmtest.scenarios import example1_design
from drmtest.sim import FamilySpec, sample_family, tilted

from conftest import gamma_samples, normal_samples


def test_info_matrix_is_scaled_hessian(rng):
    data = normal_samples(rng, [(0, 1), (1, 1.5), (-1, 0.7)], [30, 25, 20])
    theta = Theta(rng.normal(scale=0.2, size=2), rng.normal(scale=0.2, size=4))
    info = empirical_information(theta, data, "x,x2")
    _, h = del_derivatives(theta, data, "x,x2")
    np.testing.assert_allclose(info.U, -h / data.n, atol=1e-12)


def test_info_at_zero_two_halves():
    x = np.linspace(-1, 1, 10)
    data = MultiSample((x[:5], x[5:]))
    info = empirical_information(Theta.zeros(1, 1), data, "x")
    assert info.U_aa[0, 0] == pytest.approx(0.25, abs=1e-14)


def test_info_matrix_rejects_singular():
    U = np.zeros((3, 3))
    with pytest.raises(SingularInformationError):
        InfoMatrix(U, 1, 2)


def test_empirical_matches_theoretical_information():
    design = example1_design()
    f0, basis = design.f0, design.basis
    dists = [f0] + [tilted(f0, basis, b) for b in design.beta_star.reshape(2, 2)]
    sizes = tuple(int(40000 * r) for r in design.rho)
    data = sample_family(FamilySpec(tuple(dists), sizes), 7)
    fit = fit_mele(data, basis)
    U_n = empirical_information(fit.theta_hat, data, basis).U
    U = theoretical_information(f0, design.beta_star, design.rho, basis).U
    np.testing.assert_allclose(U_n, U, atol=0.05)


def test_delr_zero_when_constraint_holds_at_mele(rng):
    data = normal_samples(rng, [(0, 1), (0.5, 1.2)], [40, 40])
    full = fit_mele(data, "x,x2")
    c = ConstraintSpec.fixed(1, full.theta_hat.beta, 1, 2)
    res = delr_test(data, "x,x2", c)
    assert res.statistic == pytest.approx(0.0, abs=1e-8)
    assert res.p_value == pytest.approx(1.0, abs=1e-6)


def test_wald_zero_when_b_tuned(rng):
    data = gamma_samples(rng, [(2, 1), (3, 1.5)], [50, 50])
    full = fit_mele(data, "logx,x")
    A = np.array([[1.0, 2.0]])
    c = ConstraintSpec(A, A @ full.theta_hat.beta)
    res = wald_test(data, "logx,x", c)
    assert res.statistic == pytest.approx(0.0, abs=1e-10)
    assert res.p_value == pytest.approx(1.0)


def test_delr_rejects_shift_and_reports_fits(rng):
    data = normal_samples(rng, [(0, 1), (1, 1)], [80, 80])
    res = delr_test(data, "x,x2", ConstraintSpec.all_equal(1, 2))
    assert res.p_value < 1e-3 and res.df == 2
    assert len(res.fits) == 2 and res.fits[1].constrained
    assert res.theta_hat is res.fits[0].theta_hat


def test_wald_and_delr_agree_at_large_n(rng):
    data = normal_samples(rng, [(0, 1), (0.05, 1), (0, 1.03)], [3000, 3000, 3000])
    c = ConstraintSpec.all_equal(2, 2)
    r = delr_test(data, "x,x2", c).statistic
    w = wald_test(data, "x,x2", c).statistic
    assert abs(w - r) <= 0.1 * r


def test_small_sample_warning(rng):
    data = normal_samples(rng, [(0, 1), (0.2, 1)], [12, 12])
    with pytest.warns(SmallSampleWarning):
        delr_test(data, "x,x2", ConstraintSpec.all_equal(1, 2))


def test_delr_dimension_mismatch(rng):
    data = normal_samples(rng, [(0, 1), (0.2, 1)], [30, 30])
    with pytest.raises(ValueError):
        delr_test(data, "x,x2", ConstraintSpec.all_equal(2, 2), warn=False)


def test_delr_pvalues_uniform_under_null():
    design = example1_design()
    f0, basis = design.f0, design.basis
    dists = tuple([f0] + [tilted(f0, basis, b) for b in design.beta_star.reshape(2, 2)])
    spec = FamilySpec(dists, (400, 300, 300))
    pvals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        for rep in range(500):
            data = sample_family(spec, 11, rep)
            pvals.append(delr_test(data, basis, design.constraint).p_value)
    assert stats.kstest(pvals, "uniform").pvalue > 0.01


def test_permutation_extreme_separation(rng):
    data = normal_samples(rng, [(0, 1), (5, 1)], [30, 30])
    res = permutation_test(data, "x,x2", reps=199, seed=3)
    assert res.p_value == pytest.approx(1 / 200)


def test_permutation_deterministic(rng):
    data = normal_samples(rng, [(0, 1), (0.3, 1)], [20, 20])
    a = permutation_test(data, "x,x2", reps=99, seed=5)
    b = permutation_test(data, "x,x2", reps=99, seed=5)
    assert a.p_value == b.p_value


def test_permutation_pvalues_roughly_uniform():
    spec = FamilySpec((BaselineSpec("normal", (0, 1)),) * 2, (15, 15))
    pvals = [permutation_test(sample_family(spec, 21, rep), "x", reps=99, seed=rep).p_value for rep in range(60)]
    # discrete p-values on a 1/100 grid; coarse check of uniformity
    assert stats.kstest(pvals, "uniform").pvalue > 0.001
    assert 0.3 < np.mean(pvals) < 0.7


def test_permutation_rejects_partial_hypothesis(rng):
    data = normal_samples(rng, [(0, 1), (0.3, 1), (0, 1)], [20, 20, 20])
    with pytest.raises(UnsupportedHypothesisError):
        permutation_test(data, "x", c=ConstraintSpec.equal_pairs([(1, 2)], 2, 1))
