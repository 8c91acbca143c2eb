from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
TINY_CONFIG = str(Path(__file__).parent.parent / "configs" / "tiny.toml")


@pytest.fixture
def fixture_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
