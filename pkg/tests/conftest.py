"""Shared pytest wiring: collect acceptance-criterion results and print one
pass/fail line per criterion at the end of the run."""

criterion_lines = []


def pytest_terminal_summary(terminalreporter):
    if criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in criterion_lines:
            terminalreporter.write_line(line)
