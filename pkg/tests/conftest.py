import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


def _line(number: int, title: str, ok: bool, detail: str) -> str:
    return f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"


@pytest.fixture
def report():
    """Record the outcome of one acceptance criterion; returns ``ok``."""

    def _report(number: int, title: str, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = (title, bool(ok), detail)
        print(_line(number, title, ok, detail))
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_line(number, *_CRITERIA[number]))
