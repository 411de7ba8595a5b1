import numpy as np
import pytest

from symoc import (
    ButcherPair,
    TableauError,
    check_step_size,
    implicit_midpoint,
    make_adjoint_pair,
    symplectic_euler,
)
from symoc.tableau import from_config


def random_consistent_pairs(count=10, seed=1234):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        s = int(rng.integers(1, 5))
        b = rng.random(s) + 0.1
        b /= b.sum()
        pairs.append(make_adjoint_pair(rng.standard_normal((s, s)), b))
    return pairs


class TestAdjointConstruction:
    def test_symplectic_euler_adjoint(self):
        pair = symplectic_euler()
        assert pair.s == 1
        assert pair.A[0, 0] == 0.0
        assert pair.A_tilde[0, 0] == 1.0
        assert pair.explicit

    def test_implicit_midpoint_self_adjoint(self):
        pair = implicit_midpoint()
        assert pair.A_tilde[0, 0] == pytest.approx(0.5, abs=0)
        assert not pair.explicit
        # b1 a~11 + b1 a11 = b1 b1
        assert pair.b[0] * pair.A_tilde[0, 0] + pair.b[0] * pair.A[0, 0] == pytest.approx(
            pair.b[0] ** 2, abs=1e-15
        )

    def test_lobatto_style_two_stage(self):
        # entries computed directly from a~_ij = b_j - b_j a_ji / b_i
        A = np.array([[0.0, 0.0], [0.5, 0.5]])
        b = np.array([0.5, 0.5])
        pair = make_adjoint_pair(A, b)
        expected = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                expected[i, j] = b[j] - b[j] * A[j, i] / b[i]
        assert np.allclose(pair.A_tilde, expected, atol=0)
        assert np.allclose(pair.A_tilde, [[0.5, 0.0], [0.5, 0.0]], atol=0)
        # brute-force residual over all index pairs
        for i in range(2):
            for j in range(2):
                r = b[i] * pair.A_tilde[i, j] + b[j] * A[j, i] - b[i] * b[j]
                assert abs(r) <= 1e-14

    def test_zero_weight_rejected(self):
        with pytest.raises(TableauError, match="non-positive weight"):
            make_adjoint_pair([[0.0, 0.0], [0.5, 0.0]], [1.0, 0.0])

    def test_inconsistent_weights_rejected(self):
        with pytest.raises(TableauError, match="inconsistent weights"):
            make_adjoint_pair([[0.0]], [0.9])

    def test_symplecticity_residual_random(self):
        for pair in random_consistent_pairs():
            assert pair.symplecticity_residual() <= 1e-14

    def test_adjoint_is_involution(self):
        for pair in random_consistent_pairs():
            back = make_adjoint_pair(pair.A_tilde, pair.b)
            assert np.max(np.abs(back.A_tilde - pair.A)) <= 1e-14


class TestStepSizeCheck:
    def test_explicit_always_ok(self):
        check = check_step_size(symplectic_euler(), lipschitz_k=1e6, tau=1e6)
        assert check.ok

    def test_midpoint_boundary(self):
        assert check_step_size(implicit_midpoint(), 2.0, 1.0).ok

    def test_midpoint_violation(self):
        check = check_step_size(implicit_midpoint(), 2.0, 1.5)
        assert not check.ok
        assert check.tau_max == pytest.approx(1.0)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            check_step_size(implicit_midpoint(), -1.0, 0.1)


class TestConfig:
    def test_named(self):
        pair = from_config({"name": "implicit-midpoint"})
        assert pair.A[0, 0] == 0.5

    def test_explicit_coefficients(self):
        pair = from_config({"s": 1, "A": [[0.0]], "b": [1.0]})
        assert pair.A_tilde[0, 0] == 1.0

    def test_unknown_name(self):
        with pytest.raises(TableauError, match="unknown tableau"):
            from_config({"name": "rk4"})

    def test_wrong_stage_count(self):
        with pytest.raises(TableauError, match="claims"):
            from_config({"s": 2, "A": [[0.0]], "b": [1.0]})
