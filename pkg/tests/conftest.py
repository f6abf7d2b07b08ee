import pytest

# (criterion number, title, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {num:2d}. {title}: {detail}")


@pytest.fixture
def criterion():
    def record(num, title, passed, detail):
        ACCEPTANCE.append((num, title, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {num:2d}. {title}: {detail}")
        return bool(passed)

    return record
