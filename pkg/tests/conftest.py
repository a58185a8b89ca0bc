import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Emit one pass/fail line per acceptance criterion, visible without ``-s``."""

    def emit(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
