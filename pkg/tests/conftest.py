import numpy as np
import pytest

from fpi.grid import GridSpec, build_grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def g2():
    return build_grid(GridSpec(2, (8, 8), lame_lambda=2.0))


@pytest.fixture(scope="session")
def g3():
    return build_grid(GridSpec(3, (4, 4, 4), lame_lambda=1.5))


# acceptance-criterion summary lines, printed once at the end of the run
CRITERION_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    def record(result):
        line = result.line()
        print(line)
        CRITERION_LINES.append(line)
        return result
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
