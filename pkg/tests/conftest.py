import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def random_spd(rng, d, cond=None):
    """Random SPD matrix; with ``cond`` the eigenvalues span exactly that condition number."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is None:
        eig = rng.uniform(0.2, 3.0, size=d)
    else:
        eig = np.logspace(0.0, np.log10(cond), d)
    m = (Q * eig) @ Q.T
    return 0.5 * (m + m.T)


def jacobian_fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects PASS/FAIL lines from the acceptance suite for the terminal summary."""
    lines = []
    request.config._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
