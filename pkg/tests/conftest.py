import pytest

_ACCEPTANCE: dict[int, str] = {}
_STARTED: set[int] = set()


@pytest.fixture
def criterion():
    """Record one acceptance criterion's verdict; returns the verdict."""

    def record(number: int, title: str, ok: bool, details: str = "") -> bool:
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} {details}".rstrip()
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        _STARTED.add(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _STARTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_STARTED):
        terminalreporter.write_line(_ACCEPTANCE.get(n, f"criterion {n}: FAIL (raised before a verdict)"))
