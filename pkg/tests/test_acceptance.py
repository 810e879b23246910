"""Runs every acceptance criterion at its stated tolerance and runtime budget.

The per-criterion PASS/FAIL lines are printed in the terminal summary.
"""

import json

import pytest

from qnslab import suites
from qnslab.params import to_jsonable


@pytest.mark.parametrize(
    "criterion",
    [num for num, _, _ in suites.ACCEPTANCE],
    ids=[f"c{num:02d}_{name}" for num, name, _ in suites.ACCEPTANCE],
)
def test_criterion(criterion, acceptance_results):
    result = suites.run_check(criterion)
    acceptance_results[criterion] = result
    detail = json.dumps(to_jsonable(result.metrics), sort_keys=True)
    assert result.passed, f"{result.line()}\n{detail}"


def test_registry_covers_all_criteria():
    assert [num for num, _, _ in suites.ACCEPTANCE] == list(range(1, 16))
    assert suites.SUITES["all"] == tuple(range(1, 16))
    covered = sorted(c for name in ("semigroup", "kernels", "qnorms", "tentspace", "solver", "embeddings") for c in suites.SUITES[name])
    assert covered == list(range(1, 16))


def test_unknown_suite_rejected():
    with pytest.raises(KeyError):
        suites.run_suite("no_such_suite")
