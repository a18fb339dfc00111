import contextlib

import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion."""

    @contextlib.contextmanager
    def _run(number, title):
        try:
            yield
        except BaseException:
            _ACCEPTANCE.append((number, title, "FAIL"))
            raise
        _ACCEPTANCE.append((number, title, "PASS"))

    return _run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")
