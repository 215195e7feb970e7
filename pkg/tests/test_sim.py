import json
import math
import warnings

import numpy as np
import pytest
from scipy import stats

from drmtest.model import MultiSample, gamma_drm_params, normal_drm_params
from drmtest.power import BaselineSpec
from drmtest.sim import (
    FamilySpec,
    LocalStudy,
    StudyAbortedError,
    StudyConfig,
    _check_failures,
    anova_test,
    draw,
    kruskal_wallis_test,
    load_study_config,
    run_local_alternative_study,
    run_null_study,
    run_power_study,
    sample_family,
    stream,
    tilted,
)


def test_gamma_moments():
    x = draw(BaselineSpec("gamma", (2, 1)), stream(1), 10**6)
    assert abs(x.mean() - 2) < 0.01
    assert abs(x.var() - 2) < 0.05


def test_same_seed_same_samples():
    spec = FamilySpec((BaselineSpec("normal", (0, 1)), BaselineSpec("weibull", (0.8, 1))), (50, 40))
    a, b = sample_family(spec, 9, 3), sample_family(spec, 9, 3)
    for s, t in zip(a.samples, b.samples):
        np.testing.assert_array_equal(s, t)
    c = sample_family(spec, 9, 4)
    assert not np.array_equal(a.samples[0], c.samples[0])


def test_pareto_tail():
    x = draw(BaselineSpec("pareto", (2,)), stream(2), 10**5)
    assert x.min() > 1
    assert abs(np.mean(x > 2) - 0.25) < 0.01


@pytest.mark.parametrize(
    "dist, scipy_dist",
    [
        (BaselineSpec("lognormal", (0.3, 0.7)), stats.lognorm(0.7, scale=math.exp(0.3))),
        (BaselineSpec("weibull", (0.8, 2.0)), stats.weibull_min(0.8, scale=2.0)),
        (BaselineSpec("normal", (1.0, 2.0)), stats.norm(1.0, 2.0)),
    ],
)
def test_generators_match_distribution(dist, scipy_dist):
    x = draw(dist, stream(3), 20000)
    assert stats.kstest(x, scipy_dist.cdf).pvalue > 0.001


def test_family_spec_validation():
    with pytest.raises(ValueError):
        FamilySpec((BaselineSpec("normal", (0, 1)),), (0,))
    with pytest.raises(ValueError):
        FamilySpec((BaselineSpec("normal", (0, 1)),), (5, 5))


def test_tilted_normal_and_gamma():
    _, b = normal_drm_params(0, 1, 1.5, 0.5)
    t = tilted(BaselineSpec("normal", (0, 1)), "x,x2", b)
    np.testing.assert_allclose(t.params, (1.5, 0.5), atol=1e-12)
    _, b = gamma_drm_params(2, 1, 4, 3)
    t = tilted(BaselineSpec("gamma", (2, 1)), "logx,x", b)
    np.testing.assert_allclose(t.params, (4, 3), atol=1e-12)
    t = tilted(BaselineSpec("gamma", (3, 2)), "x,logx", [-4, 5])
    np.testing.assert_allclose(t.params, (8, 6), atol=1e-12)
    t = tilted(BaselineSpec("pareto", (2,)), "logx", [0.5])
    assert t.params == (1.5,)
    t = tilted(BaselineSpec("weibull", (0.8, 1.0)), "x^0.8", [0.5])
    assert t.params[1] == pytest.approx(0.5 ** (-1 / 0.8))


def test_tilted_rejects_foreign_term():
    with pytest.raises(ValueError):
        tilted(BaselineSpec("normal", (0, 1)), "x,logx", [0.1, 0.1])


def test_anova_matches_scipy(rng):
    groups = [rng.normal(m, 1, n) for m, n in [(0, 10), (0.5, 12), (1, 8)]]
    res = anova_test(MultiSample(tuple(groups)))
    ref = stats.f_oneway(*groups)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_kw_matches_scipy_with_ties(rng):
    groups = [np.round(rng.normal(m, 1, n), 1) for m, n in [(0, 15), (0.5, 12), (1, 9)]]
    res = kruskal_wallis_test(MultiSample(tuple(groups)))
    ref = stats.kruskal(*groups)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_kw_hand_value():
    res = kruskal_wallis_test(MultiSample(([1, 2, 3], [4, 5, 6])))
    assert res.statistic == pytest.approx(27 / 7, abs=1e-12)  # 3.857
    assert res.p_value == pytest.approx(0.0495, abs=1e-4)


def test_constant_groups():
    data = MultiSample(([2.0] * 4, [2.0] * 5, [2.0] * 3))
    a = anova_test(data)
    k = kruskal_wallis_test(data)
    assert (a.statistic, a.p_value) == (0.0, 1.0)
    assert (k.statistic, k.p_value) == (0.0, 1.0)


def test_anova_needs_within_df():
    with pytest.raises(ValueError):
        anova_test(MultiSample(([1.0], [2.0])))


def test_large_shift_rejects(rng):
    data = MultiSample((rng.normal(0, 1, 200), rng.normal(2, 1, 200)))
    assert anova_test(data).p_value < 1e-10
    assert kruskal_wallis_test(data).p_value < 1e-10


def _small_config(**kw):
    g = BaselineSpec("gamma", (2, 1))
    args = dict(
        scenario="t",
        settings=[FamilySpec((g, g, g), (40, 40, 40)),
                  FamilySpec((g, BaselineSpec("gamma", (3, 1)), g), (40, 40, 40))],
        basis="logx,x",
        constraint="equal:all",
        replicates=40,
        seed=5,
        methods=("DELR", "KW"),
    )
    args.update(kw)
    return StudyConfig(**args)


def test_level_one_rejects_everything():
    res = run_null_study(_small_config(level=1.0, replicates=20))
    assert res.rejection_rate == 1.0


def test_null_study_outputs():
    res = run_null_study(_small_config())
    assert 0 <= res.rejection_rate <= 1
    qq = res.qq_pairs()
    assert qq.shape == (40, 2)
    assert np.all(np.diff(qq[:, 0]) > 0) and np.all(np.diff(qq[:, 1]) >= 0)


def test_power_study_reproducible_and_parallel_consistent():
    cfg = _small_config(replicates=16)
    a = run_power_study(cfg)
    b = run_power_study(cfg)
    c = run_power_study(cfg, workers=2)
    key = [(r.setting, r.method, r.rate, r.se) for r in a.rows]
    assert key == [(r.setting, r.method, r.rate, r.se) for r in b.rows]
    assert key == [(r.setting, r.method, r.rate, r.se) for r in c.rows]


def test_power_study_se_formula():
    table = run_power_study(_small_config(replicates=30))
    for row in table.rows:
        assert row.se == pytest.approx(math.sqrt(row.rate * (1 - row.rate) / row.replicates))
    assert table.rate(1, "DELR").rate >= table.rate(0, "DELR").rate


def test_se_shrinks_with_replicates():
    p, n = 0.3, 1000
    se1 = math.sqrt(p * (1 - p) / n)
    se2 = math.sqrt(p * (1 - p) / (2 * n))
    assert se1**2 / se2**2 == pytest.approx(2.0, rel=0.2)


def test_zero_drift_local_study():
    study = LocalStudy(BaselineSpec("normal", (0, 0.5)), "x,x2", (60, 60, 60), "equal:1,2",
                       [0.25, 1.875, 0.25, 1.875], [[0, 0], [0, 0]], replicates=60, seed=2)
    res = run_local_alternative_study(study)
    assert res.delta2 == 0.0
    assert res.ks_test().pvalue > 0.001
    assert res.qq_pairs().shape == (60, 2)


def test_failure_thresholds():
    with pytest.warns(RuntimeWarning):
        _check_failures(3, 1000, "x")
    with pytest.raises(StudyAbortedError):
        _check_failures(11, 1000, "x")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _check_failures(1, 1000, "x")


def test_load_config_roundtrip(tmp_path):
    raw = {
        "scenario": "demo",
        "families": [[{"family": "gamma", "params": [2, 1], "size": 30}] * 2],
        "basis": "logx,x",
        "hypothesis": "equal:all",
        "level": 0.1,
        "replicates": 10,
        "seed": 4,
        "methods": ["DELR", "ANOVA"],
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    cfg = load_study_config(path)
    assert cfg.level == 0.1 and cfg.replicates == 10 and cfg.constraint.q == 2
    assert cfg.methods == ("DELR", "ANOVA")
    del raw["basis"]
    with pytest.raises(ValueError, match="basis"):
        load_study_config(raw)


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        _small_config(methods=("DELR", "AD"))


def test_power_table_csv(tmp_path):
    table = run_power_study(_small_config(replicates=10), settings=[0])
    path = tmp_path / "t.csv"
    table.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "setting,method,rate,se,failures"
    assert len(lines) == 3
