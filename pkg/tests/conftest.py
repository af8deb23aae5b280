from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def strip():
    from fractura.scenario import load_shipped
    return load_shipped("strip_tearing")


@pytest.fixture(scope="session")
def strip_trace_16(strip):
    from fractura.evolution import run_evolution
    return run_evolution(strip, 1 / 16, "exhaustive")


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
