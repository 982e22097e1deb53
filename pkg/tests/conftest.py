from collections import defaultdict

import pytest

ACCEPTANCE = defaultdict(list)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        items = ACCEPTANCE[crit]
        bad = [label for label, ok, _ in items if not ok]
        status = "PASS" if not bad else "FAIL"
        line = f"criterion {crit}: {status} ({len(items) - len(bad)}/{len(items)} checks)"
        if bad:
            line += " failing: " + ", ".join(bad)
        terminalreporter.write_line(line)
