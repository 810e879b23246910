import pytest

ACCEPTANCE_RESULTS: dict[int, object] = {}


@pytest.fixture
def acceptance_results():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[num].line())
    passed = sum(r.passed for r in ACCEPTANCE_RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(ACCEPTANCE_RESULTS)} criteria passed")
