import numpy as np
import pytest

from ladagan import numerics as nx


@pytest.fixture(autouse=True)
def debug_numerics():
    """Per-op finiteness checks are on for every test."""
    nx.set_debug(True)
    yield
    nx.set_debug(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def f64(a, requires_grad=False):
    return nx.Tensor(np.asarray(a, dtype=np.float64), requires_grad=requires_grad)


# acceptance lines, echoed in the terminal summary so they show without -s
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
