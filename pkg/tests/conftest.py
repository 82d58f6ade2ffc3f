import pytest

# filled by tests/test_acceptance.py, one (criterion, passed, detail) per check
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_report():
    def report(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS.append((criterion, passed, detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        assert passed, f"{criterion}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
