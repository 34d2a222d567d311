"""Shared pytest plumbing: surfaces the acceptance-criterion verdict
lines in the terminal summary, where output capture cannot swallow
them."""

VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
