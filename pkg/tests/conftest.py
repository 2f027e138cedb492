import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from membrane_opt import DomainSpec, assemble, generate  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def cached_mesh(kind: str, **kwargs):
    return generate(DomainSpec(kind, **kwargs))


@functools.lru_cache(maxsize=None)
def cached_system(kind: str, f: float = 1.0, **kwargs):
    return assemble(cached_mesh(kind, **kwargs), f)


@pytest.fixture(scope="session")
def disk_small():
    return cached_system("disk", subdiv=12)


@pytest.fixture(scope="session")
def square_small():
    return cached_system("square", subdiv=8)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
