import pytest

from tensorquant.charts import conformal_plane, flat, shipped, sphere

# Filled by tests/test_acceptance.py: criterion number -> (passed, detail).
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def sphere_metric():
    return sphere()


@pytest.fixture(scope="session")
def conformal_metric():
    return conformal_plane()


@pytest.fixture(scope="session")
def flat2_metric():
    return flat(2)


@pytest.fixture(scope="session")
def shipped_metrics():
    return shipped()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
