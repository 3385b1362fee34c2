from __future__ import annotations

from pathlib import Path

import pytest

from forumpaths.ingest import RawEvent

DATA = Path(__file__).resolve().parent.parent / "src" / "forumpaths" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"


def ev(post, author, ts, parent=None, forum="f"):
    return RawEvent(forum, post, author, ts, parent)


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
