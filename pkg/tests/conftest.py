import math

import numpy as np
import pytest

from predseq.rng import stream

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict: ``criterion("AC01", ok, "detail")``."""

    def record(code, passed, detail):
        _CRITERIA[code] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for code in sorted(_CRITERIA):
        ok, detail = _CRITERIA[code]
        terminalreporter.write_line(f"{code} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return stream(20240601, 0)


def mean_se(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
