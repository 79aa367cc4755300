import numpy as np
import pytest

from acceptance_log import RESULTS


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        name, ok, detail = RESULTS[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] AC{number:<2} {name}: {detail}")
