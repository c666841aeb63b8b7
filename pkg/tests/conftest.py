import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    return passed


@pytest.fixture
def criterion(capsys):
    """Record and immediately print one acceptance line."""
    def report(number, passed, detail):
        record(number, passed, detail)
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
