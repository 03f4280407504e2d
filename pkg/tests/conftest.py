import numpy as np
import pytest

from sktk.model import MicroParams, micro_to_macro


@pytest.fixture
def reference_micro():
    return MicroParams(D=[0.5, 0.1], Dij=[[2.0, 1.0], [1.0, 2.0]], pi=[1 / 3, 2 / 3])


@pytest.fixture
def reference_params(reference_micro):
    return micro_to_macro(reference_micro)


def fourier_data(x):
    x = np.asarray(x, dtype=float)
    return np.stack([
        1.0 + 0.5 * np.cos(2 * np.pi * x),
        1.0 + 0.4 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL line per acceptance criterion (shown in the terminal summary)."""

    def record(number, passed, detail, elapsed, limit):
        within = elapsed < limit
        verdict = "PASS" if passed and within else "FAIL"
        line = f"criterion {number:>2}: {verdict}  {detail}  [{elapsed:.1f}s / limit {limit:g}s]"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed and within

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
