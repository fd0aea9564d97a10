"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import pytest

from parsmooth import verify

CRITERIA = [
    ("filter_oracle", verify.check_filter_oracle),
    ("smoother_oracle", verify.check_smoother_oracle),
    ("scalar_hand_case", verify.check_scalar_case),
    ("discrete_exactness", verify.check_discrete_exactness),
    ("scan_correctness", verify.check_scan),
    ("associativity", verify.check_associativity),
    ("marginal_likelihood", verify.check_marginal_likelihood),
    ("block_invariance", verify.check_block_invariance),
    ("flop_shape", verify.check_flop_shape),
    ("gaussian_identities", verify.check_gaussian_identities),
]


@pytest.mark.parametrize("check", [c for _, c in CRITERIA], ids=[n for n, _ in CRITERIA])
def test_criterion(check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
