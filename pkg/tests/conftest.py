import re

import pytest

# criterion label -> (passed, detail), filled in by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[label] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {label}: {detail}")
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(re.match(r"\d+", s).group()), s)):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {label}: {detail}")
