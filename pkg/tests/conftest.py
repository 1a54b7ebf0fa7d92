"""Collects the acceptance verdict lines and prints them after the run."""

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
