import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def criterion():
    """Context manager recording the outcome of one acceptance criterion."""

    @contextmanager
    def record(number: int, title: str):
        notes: dict = {}
        start = time.perf_counter()
        try:
            yield notes
        except BaseException:
            _ACCEPTANCE[number] = ("FAIL", title, _fmt(notes, start))
            raise
        _ACCEPTANCE[number] = ("PASS", title, _fmt(notes, start))

    return record


def _fmt(notes: dict, start: float) -> str:
    parts = [f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in notes.items()]
    parts.append(f"time={time.perf_counter() - start:.2f}s")
    return ", ".join(parts)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title} ({detail})")
