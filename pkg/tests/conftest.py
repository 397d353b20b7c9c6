import pytest

_ACCEPTANCE: dict[int, str] = {}


class _Recorder:
    def __call__(self, number: int, title: str, passed: bool, detail: str) -> bool:
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE[number] = f"[{status}] criterion {number:>2}: {title} | {detail}"
        return passed


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the pass flag for asserting."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
