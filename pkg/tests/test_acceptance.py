"""Acceptance criteria at their stated tolerances, one pass/fail line each.

Criteria 1-9 run in this process; criterion 10 reruns them in a fresh
process and compares the JSON artifacts byte for byte.
"""

import pytest

from lfpp import acceptance

from conftest import ACCEPTANCE_RESULTS

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    res = acceptance.run_criterion(number, threads=1)
    ACCEPTANCE_RESULTS[number] = res
    print(res.line())
    assert res.passed, res.artifact.decode()


def test_criterion_10_determinism(tmp_path):
    numbers = sorted(ACCEPTANCE_RESULTS)
    if not numbers:
        pytest.skip("criteria 1-9 were not run in this session")
    reference = {n: ACCEPTANCE_RESULTS[n].artifact for n in numbers}
    res = acceptance.determinism_check(reference, numbers, threads=1, workdir=tmp_path)
    ACCEPTANCE_RESULTS[10] = res
    print(res.line())
    assert res.passed, res.details
