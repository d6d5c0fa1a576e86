import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmab_mfp.core import stationary_instance

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_state_instance(n=4, budget=2, horizon=3, gamma=1.0):
    """One cluster, two states, unit active cost, reward 1 in state 1."""
    P = np.array([[[[0.8, 0.2], [0.5, 0.5]], [[0.3, 0.7], [0.1, 0.9]]]])
    R = np.array([[[0.0, 0.0], [1.0, 1.0]]])
    C = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    inst = stationary_instance(P, R, C, budget, [n], horizon, gamma)
    return inst, np.array([[n, 0]])


@pytest.fixture
def small():
    return two_state_instance()


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
