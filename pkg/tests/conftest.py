import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; call as criterion(number, passed, detail).

    ``passed=None`` records the criterion as skipped.
    """

    def record(number, passed, detail=""):
        _ACCEPTANCE.append((number, None if passed is None else bool(passed), detail))
        return passed

    return record


def _order(entry):
    label = str(entry[0])
    return int(re.match(r"\d+", label).group()), label


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=_order):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number}: {detail}")
