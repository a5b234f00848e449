import numpy as np
import pytest

from ampda.oracles import RecoveryInstance, build_problem


def random_instance(rng, m=6, n=9, mu=2, K=3, lam=1.5, bound=5.0):
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    b = rng.standard_normal(m)
    return RecoveryInstance(A=A, b=b, lam=lam, mu=mu, K=K,
                            lower=-bound * np.ones(n), upper=bound * np.ones(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance(rng):
    return random_instance(rng)


@pytest.fixture(params=["l1l2", "l1sk"])
def variant(request):
    return request.param


@pytest.fixture
def small_problem(small_instance, variant):
    return build_problem(small_instance, variant)


def feasible_point(rng, n, bound=5.0):
    x = rng.uniform(-bound, bound, n)
    x[rng.random(n) < 0.3] = 0.0
    if not np.any(x):
        x[0] = 1.0
    return x


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
