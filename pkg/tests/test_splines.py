import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import basis_row, clamped_knots
from srrvc.splines import build_design, eval_basis, make_basis, with_intercept


class TestMakeBasis:
    def test_cubic_one_internal_knot(self):
        b = make_basis(4, 5)
        assert b.num_internal_knots == 1
        assert b.num_basis == 5
        np.testing.assert_array_equal(b.knots, [0, 0, 0, 0, 0.5, 1, 1, 1, 1])

    def test_constant_basis(self):
        b = make_basis(1, 1)
        assert b.num_internal_knots == 0
        np.testing.assert_array_equal(eval_basis(b, np.linspace(0, 1, 7)), np.ones((7, 1)))

    @pytest.mark.parametrize("m, K", [(4, 3), (0, 1), (2, 1)])
    def test_rejects_bad_sizes(self, m, K):
        with pytest.raises(ValueError):
            make_basis(m, K)

    def test_knots_are_read_only(self):
        b = make_basis(3, 7)
        with pytest.raises(ValueError):
            b.knots[0] = 1.0

    def test_internal_knots_equally_spaced(self):
        b = make_basis(3, 9)
        inner = b.knots[3:-3]
        np.testing.assert_allclose(np.diff(inner), 1 / 7)
        assert np.all(np.diff(inner) > 0)


class TestEvalBasis:
    def test_boundaries(self):
        b = make_basis(4, 5)
        np.testing.assert_array_equal(eval_basis(b, 0.0), [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(eval_basis(b, 1.0), [0, 0, 0, 0, 1])

    def test_quarter_point_against_recursion(self):
        # frozen from the recursive oracle: (1-2t)^3 etc. on the first span
        expected = [0.125, 0.59375, 0.25, 0.03125, 0.0]
        np.testing.assert_allclose(basis_row(4, 5, 0.25), expected, atol=1e-15)
        np.testing.assert_allclose(eval_basis(make_basis(4, 5), 0.25), expected, atol=1e-15)

    @pytest.mark.parametrize("t", [-1e-9, 1.0 + 1e-9, np.nan])
    def test_no_extrapolation(self, t):
        with pytest.raises(ValueError):
            eval_basis(make_basis(), t)

    def test_shapes(self):
        b = make_basis(3, 6)
        assert eval_basis(b, 0.3).shape == (6,)
        assert eval_basis(b, np.zeros((4, 2))).shape == (4, 2, 6)

    def test_partition_of_unity_dense_grid(self):
        t = np.linspace(0, 1, 10_000)
        for m, K in [(1, 1), (1, 4), (2, 3), (3, 8), (4, 5), (4, 12), (5, 9)]:
            B = eval_basis(make_basis(m, K), t)
            assert np.max(np.abs(B.sum(axis=1) - 1)) <= 1e-12
            assert B.min() >= 0
            assert np.max((B > 0).sum(axis=1)) <= m

    @pytest.mark.parametrize("m, K", [(2, 2), (2, 6), (3, 5), (4, 5), (4, 10), (6, 8)])
    def test_linear_reproduction(self, m, K):
        b = make_basis(m, K)
        t = np.linspace(0, 1, 2001)
        np.testing.assert_allclose(eval_basis(b, t) @ b.greville(), t, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(m=st.integers(1, 6), extra=st.integers(0, 6), t=st.floats(0, 1))
    def test_matches_recursion(self, m, extra, t):
        K = m + extra
        np.testing.assert_allclose(eval_basis(make_basis(m, K), t), basis_row(m, K, t), atol=1e-13)


def test_oracle_knots_agree():
    for m, K in [(1, 3), (4, 5), (3, 9)]:
        np.testing.assert_allclose(make_basis(m, K).knots, clamped_knots(m, K))


class TestBuildDesign:
    def test_zero_covariate_gives_zero_block(self):
        rng = np.random.default_rng(0)
        T = rng.uniform(size=8)
        X = with_intercept(np.column_stack([rng.normal(size=8), np.zeros(8)]))
        Z = build_design(make_basis(), T, X)
        assert not np.any(Z.blocks[2])

    def test_intercept_only_rows_sum_to_one(self):
        T = np.linspace(0, 1, 9)
        Z = build_design(make_basis(), T, np.ones((9, 1)))
        assert Z.p == 0
        np.testing.assert_allclose(Z.blocks[0].sum(axis=1), 1.0, atol=1e-14)

    def test_three_points_against_recursion(self):
        T = np.array([0.0, 0.5, 1.0])
        X = with_intercept(np.array([1.0, 2.0, 3.0]))
        Z = build_design(make_basis(4, 5), T, X)
        expected = np.array([x * basis_row(4, 5, t) for x, t in zip(X[:, 1], T)])
        np.testing.assert_allclose(Z.blocks[1], expected, atol=1e-15)
        np.testing.assert_allclose(Z.blocks[1][1], [0, 0.5, 1.0, 0.5, 0], atol=1e-15)

    def test_brute_force_outer_construction(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n, p = rng.integers(1, 11), rng.integers(0, 4)
            m = int(rng.integers(1, 5))
            K = m + int(rng.integers(0, 4))
            T = rng.uniform(size=n)
            X = with_intercept(rng.normal(size=(n, p))) if p else np.ones((n, 1))
            Z = build_design(make_basis(m, K), T, X)
            for j in range(p + 1):
                for i in range(n):
                    row = basis_row(m, K, T[i])
                    for k in range(K):
                        assert Z.blocks[j][i, k] == pytest.approx(row[k] * X[i, j], abs=1e-13)

    def test_flat_matrix_layout(self):
        rng = np.random.default_rng(2)
        Z = build_design(make_basis(), rng.uniform(size=6), with_intercept(rng.normal(size=(6, 2))))
        M = Z.matrix()
        assert M.shape == (6, 15)
        np.testing.assert_array_equal(M[:, 5:10], Z.blocks[1])

    def test_errors(self):
        b = make_basis()
        with pytest.raises(ValueError, match="rows"):
            build_design(b, np.zeros(3), np.ones((4, 1)))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            build_design(b, np.array([0.2, 1.5]), np.ones((2, 1)))
        with pytest.raises(ValueError, match="intercept"):
            build_design(b, np.zeros(2), np.zeros((2, 1)))
