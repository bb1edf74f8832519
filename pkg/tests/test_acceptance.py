"""The thirteen acceptance criteria at their stated tolerances and time budgets.

Each test prints a PASS/FAIL line (also gathered in the terminal summary) and
then asserts the verdict.
"""

import pytest

from bdlab.acceptance import CRITERIA, run_criterion
from bdlab.config import ExperimentConfig

CONFIG = ExperimentConfig()


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA],
                         ids=[f"{c[0]:02d}-{c[1]}" for c in CRITERIA])
def test_criterion(number, record_criterion):
    check = run_criterion(number, CONFIG)
    record_criterion(f"{check.line()} [{check.details['runtime']:.2f} s]")
    assert check.passed, check.details
