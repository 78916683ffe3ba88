import numpy as np
import pytest

from services.verify_engine import (
    SuiteResult, feature_map, run_verify, suite_block_operator, suite_convex_duals, suite_dual_arbitration,
    suite_qp_oracle,
)


def test_feature_map_factorises_gram(rng):
    A = rng.standard_normal((6, 3))
    K = A @ A.T + 1.0
    Phi = feature_map(K)
    np.testing.assert_allclose(Phi @ Phi.T, K, atol=1e-10)


def test_qp_oracle_suite_on_100_instances(rng):
    result = suite_qp_oracle(rng, cases=100)
    assert result.passed
    assert result.cases == 100


def test_weighted_dual_suite_on_20_subproblems(rng):
    split, printed = suite_dual_arbitration(rng, cases=20)
    assert split.passed and split.cases == 20
    assert printed.passed


def test_small_suites_pass(rng):
    assert suite_block_operator(rng, cases=3).passed
    assert suite_convex_duals(rng, cases=3).passed
    split, printed = suite_dual_arbitration(rng, cases=3)
    assert split.passed
    assert printed.passed
    assert "informational" in printed.detail


def test_suite_result_line():
    assert SuiteResult("x", True, 3, 1e-9).line() == "PASS x: 3 case(s), worst=1.000e-09"
    assert SuiteResult("y", False, 1, 0.5, "(bad)").line().startswith("FAIL y:")


@pytest.mark.slow
def test_full_verify_passes():
    results = run_verify(42)
    assert [r.name for r in results] == [
        "qp_oracle", "block_operator", "weighted_dual_split", "weighted_dual_printed", "convex_duals",
    ]
    assert all(r.passed for r in results)
