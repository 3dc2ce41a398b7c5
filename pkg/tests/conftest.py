import pytest

# filled by tests/test_acceptance.py: criterion number -> (passed, line)
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k][1])


@pytest.fixture(scope="session")
def acceptance_results():
    return ACCEPTANCE_RESULTS
