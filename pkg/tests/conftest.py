import numpy as np
import pytest

from co3lab.oracle import ConceptSystem, GaussianMixture, four_mode_system
from co3lab.schedule import build_linear_schedule, default_schedule, subsample_schedule


@pytest.fixture(scope="session")
def schedule():
    return default_schedule()


@pytest.fixture(scope="session")
def linear_schedule():
    return subsample_schedule(build_linear_schedule(1000, 1e-4, 0.02), 50)


@pytest.fixture(scope="session")
def toy():
    return four_mode_system()


def single_gaussian_system(mean, cov):
    g = GaussianMixture.gaussian(mean, np.asarray(cov, dtype=float))
    return ConceptSystem(g, (g,), GaussianMixture.gaussian([0.0, 0.0], 4.0 * np.eye(2)), ("pure",))


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def emit(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
