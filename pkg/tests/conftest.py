import pytest

_acceptance_lines = []


@pytest.fixture
def acceptance_record():
    """Collect one verdict line per acceptance criterion.

    Lines are echoed immediately (visible with -s) and replayed in the
    terminal summary so they survive output capture.
    """
    def record(num, ok, detail):
        line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}"
        _acceptance_lines.append((num, line))
        print(line, flush=True)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
