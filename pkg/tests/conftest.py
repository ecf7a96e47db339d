import numpy as np
import pytest

import _acceptance_log
from stabaudit.data import Dataset, make_split


def make_logistic_dataset(n=400, d=4, seed=0, signal=1.5):
    """Small synthetic logistic task with an intercept column."""
    rng = np.random.default_rng(seed)
    X = np.hstack([np.ones((n, 1)), rng.standard_normal((n, d))])
    w = rng.standard_normal(d + 1) * signal
    p = 1.0 / (1.0 + np.exp(-X @ w))
    y = (rng.random(n) < p).astype(np.int64)
    return Dataset(
        X=X, y=y,
        feature_names=["intercept"] + [f"f{j}" for j in range(d)],
        provenance={"source": "inline"},
    )


@pytest.fixture
def toy_data():
    return make_logistic_dataset()


@pytest.fixture
def toy_split(toy_data):
    return make_split(toy_data.n, 0.25, seed=3)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _acceptance_log.LINES:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{criterion}: {status}  {detail}")
