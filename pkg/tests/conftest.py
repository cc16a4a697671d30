import pytest

from qtrack.harness import paper_config

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def short_paper_config():
    return paper_config(horizon=2000, trials=8, master_seed=7)
