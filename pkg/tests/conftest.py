import numpy as np
import pytest

from drmtest.model import MultiSample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def normal_samples(rng, params, sizes):
    return MultiSample(tuple(mu + sd * rng.standard_normal(n) for (mu, sd), n in zip(params, sizes)))


def gamma_samples(rng, params, sizes):
    return MultiSample(tuple(rng.gamma(a, 1.0 / b, n) for (a, b), n in zip(params, sizes)))


# Acceptance results collected by tests/test_acceptance.py, shown after the run.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
