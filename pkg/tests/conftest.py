import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from covkit.envs import gen_random_mdp  # noqa: E402


@pytest.fixture(scope="session")
def mdp42():
    """The seed-42 random instance used throughout (S=3, A=2, H=3)."""
    return gen_random_mdp(42, 3, 2, 3)


@pytest.fixture(scope="session")
def mdp42_h2():
    return gen_random_mdp(42, 3, 2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
