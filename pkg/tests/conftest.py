"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS = {}


def record(criterion, passed, detail=""):
    VERDICTS[criterion] = f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
    print(VERDICTS[criterion])
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])
