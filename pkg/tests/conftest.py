from pathlib import Path

import pytest

MNIST_DIR = Path(__file__).parent / "data" / "mnist5k"

_criteria: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    return MNIST_DIR


@pytest.fixture
def criterion():
    """Record a named acceptance verdict; the summary is printed at session end."""

    def record(key: str, passed: bool, detail: str = "") -> None:
        _criteria[key] = (bool(passed), detail)
        print(f"{key}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k.split()[-1])):
        passed, detail = _criteria[key]
        terminalreporter.write_line(f"{key}: {'PASS' if passed else 'FAIL'}  {detail}")
