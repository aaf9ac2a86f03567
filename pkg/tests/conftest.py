import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xaibench import datagen
from xaibench.models import ModelConfig, MLPParams, fit

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def toy():
    return datagen.gen_toy(seed=3, n=2000)


@pytest.fixture(scope="session")
def toy_process():
    return datagen.toy_process(seed=3)


@pytest.fixture(scope="session")
def toy_split(toy):
    return datagen.split_grouped(toy, 0.1, seed=0)


@pytest.fixture(scope="session")
def linear_model(toy_split):
    return fit(toy_split[0], ModelConfig("linear"))


@pytest.fixture(scope="session")
def gbdt_model(toy_split):
    return fit(toy_split[0], ModelConfig("gbdt"))


@pytest.fixture(scope="session")
def small_mlp(toy_split):
    """A briefly trained ensemble: enough structure for gradient checks."""
    return fit(toy_split[0], ModelConfig("mlp_ensemble", mlp=MLPParams(epochs=10)))


def linear_dataset(coef, intercept, n=200, seed=0, low=-1.0, high=1.0):
    rng = np.random.default_rng(seed)
    coef = np.asarray(coef, dtype=float)
    X = rng.uniform(low, high, size=(n, len(coef)))
    y = X @ coef + intercept
    return datagen.Dataset(X, y, np.broadcast_to(coef, X.shape), np.zeros(n, dtype=int))


# one line per acceptance criterion, repeated in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
