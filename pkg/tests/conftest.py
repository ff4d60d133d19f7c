import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import dbar.cli
import dbar.estimator
import dbar.regeneration
from dbar.coupling import CoupledPair
from dbar.kernel import FiniteMarkov, HazardSequence, Iid, Renewal

# every coupled path produced anywhere in the session is screened for (1,0)
ORDER_TALLY = {"paths": 0, "symbols": 0, "violations": 0}
# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []

_original_perfect_sample = dbar.regeneration.perfect_sample


def _screened_perfect_sample(*args, **kwargs):
    path = _original_perfect_sample(*args, **kwargs)
    ORDER_TALLY["paths"] += 1
    ORDER_TALLY["symbols"] += int(path.x.size)
    ORDER_TALLY["violations"] += int(np.count_nonzero(path.x > path.y))
    return path


for _mod in (dbar.regeneration, dbar.estimator, dbar.cli):
    _mod.perfect_sample = _screened_perfect_sample


def pytest_sessionfinish(session, exitstatus):
    if ORDER_TALLY["violations"]:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    t = ORDER_TALLY
    status = "PASS" if t["violations"] == 0 else "FAIL"
    terminalreporter.write_line(
        f"[{status}] criterion 7 session-wide: {t['violations']} (1,0) pairs in "
        f"{t['paths']} paths / {t['symbols']} symbols")


MARKOV_X = FiniteMarkov.from_mapping(1, {"0": 0.2, "1": 0.4})
MARKOV_Y = FiniteMarkov.from_mapping(1, {"0": 0.5, "1": 0.7})
RENEWAL_X = Renewal(HazardSequence.geometric(0.4, 0.2, 0.5))
RENEWAL_Y = Renewal(HazardSequence.geometric(0.6, 0.2, 0.5))

FAMILIES = {
    "iid": (Iid(0.3), Iid(0.5)),
    "markov": (MARKOV_X, MARKOV_Y),
    "renewal": (RENEWAL_X, RENEWAL_Y),
}


@pytest.fixture(scope="session")
def markov_pair():
    return CoupledPair(MARKOV_X, MARKOV_Y)


@pytest.fixture(scope="session")
def renewal_pair():
    return CoupledPair(RENEWAL_X, RENEWAL_Y)


@pytest.fixture(scope="session")
def iid_pair():
    return CoupledPair(Iid(0.3), Iid(0.5))
