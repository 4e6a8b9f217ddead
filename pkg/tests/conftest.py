import numpy as np
import pytest

from scalebridge.diagnostics import micro_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_cfg():
    return micro_config()


ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail):
    """Log one acceptance line; the terminal summary repeats them all."""
    line = f"criterion {number:02d} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
