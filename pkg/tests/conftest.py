import numpy as np
import pytest

from msst import _kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test once per kernel table."""
    if request.param == "numba" and not _kernels.HAS_NUMBA:
        pytest.skip("numba not installed")
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; all lines are echoed at session end."""

    def emit(line):
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
