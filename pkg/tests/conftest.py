import math
from pathlib import Path

import numpy as np
import pytest

from mcbell import blockfile
from mcbell.correlations import chsh_optimal_single_copy, tensor_power

DATA = Path(__file__).parent / "data"

# filled by test_acceptance; printed at the end of the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")


def _order(label):
    head = label.split()[1].rstrip(":")
    num = "".join(ch for ch in head if ch.isdigit())
    return (int(num) if num else math.inf, label)


@pytest.fixture(scope="session")
def single():
    return chsh_optimal_single_copy()


@pytest.fixture(scope="session")
def two_copies(single):
    return tensor_power(single, 2)


@pytest.fixture(scope="session")
def csym_n2():
    return blockfile.load(DATA / "csym_n2.txt")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
