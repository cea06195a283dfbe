"""Acceptance criteria 1-11, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line; the lines are also
collected into the terminal summary.  Run directly (``python
tests/test_acceptance.py [numbers...]``) to get just the lines.
Criterion 11 integrates two trajectories to T=200 and takes several minutes.
"""
import sys

import pytest

from gdnls.acceptance import CHECKS, Context, run_check

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # running as a script from elsewhere
    ACCEPTANCE_LINES = []


@pytest.mark.parametrize("number", [pytest.param(n, marks=pytest.mark.slow) if n == 11 else n
                                    for n in sorted(CHECKS)])
def test_criterion(number, ctx):
    res = run_check(number, ctx)
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, res.as_dict()["details"]


if __name__ == "__main__":
    numbers = [int(a) for a in sys.argv[1:]] or sorted(CHECKS)
    shared = Context()
    failed = 0
    for n in numbers:
        r = run_check(n, shared)
        print(r.line(), flush=True)
        failed += not r.passed
    sys.exit(1 if failed else 0)
