import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def random_risks(rng, m, H, ties=False, zeros=False):
    """``(m, H)`` non-negative risks; ``ties`` draws from a tiny integer alphabet."""
    if ties:
        r = rng.integers(0 if zeros else 1, 4, size=(m, H)).astype(np.float64)
    else:
        r = rng.gamma(1.5, 1.0, size=(m, H))
        if zeros:
            r[rng.random((m, H)) < 0.2] = 0.0
    return r


def heteroscedastic_risks(rng, m, H):
    """Per-series level times a per-series shape, like forecast variances."""
    level = rng.lognormal(0.0, 1.0, size=(m, 1))
    shape = np.cumsum(rng.gamma(2.0, 0.5, size=(m, H)), axis=1)
    return level * shape / H + rng.gamma(1.0, 0.1, size=(m, H))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
