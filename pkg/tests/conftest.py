import math

import numpy as np
import pytest

from stochmatch.bounds import make_gadget
from stochmatch.core import FractionalMatching, Instance

ONE_MINUS_LN2 = 1.0 - math.log(2.0)


@pytest.fixture
def gadget():
    return make_gadget(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def single_edge(rate=1.0, weight=1.0):
    return Instance([("a", rate, {"j": weight})], ["j"])


def matching(**flows):
    """``matching(a__j=0.5)`` -> FractionalMatching({("a", "j"): 0.5})."""
    return FractionalMatching({tuple(k.split("__")): v for k, v in flows.items()})



# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
