import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cosparse.linalg import (LeastSquaresResult, SubspaceProjector,
                             complement_projector, constrained_least_squares,
                             largest_singular_value, penalized_least_squares)


def _projection_matrix(proj, d):
    return np.column_stack([proj(e) for e in np.eye(d)])


class TestSubspaceProjector:
    def test_rejects_non_orthonormal_basis(self):
        with pytest.raises(ValueError):
            SubspaceProjector(np.array([[1.0, 0.0], [1.0, 0.0]]).T * 2.0)

    def test_apply_is_orthogonal_projection(self):
        rng = np.random.default_rng(3)
        basis, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        proj = SubspaceProjector(basis)
        z = rng.standard_normal(6)
        expected = basis @ (basis.T @ z)
        np.testing.assert_allclose(proj.apply(z), expected, atol=1e-12)
        np.testing.assert_allclose(proj(z), expected, atol=1e-12)

    def test_complement_mode(self):
        rng = np.random.default_rng(4)
        basis, _ = np.linalg.qr(rng.standard_normal((5, 3)))
        proj = SubspaceProjector(basis, complement=True)
        z = rng.standard_normal(5)
        np.testing.assert_allclose(proj.apply(z), z - basis @ (basis.T @ z),
                                   atol=1e-12)


class TestComplementProjector:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 6), st.integers(0, 2 ** 31 - 1))
    def test_matches_svd_oracle(self, d, q, seed):
        q = min(q, d)
        rng = np.random.default_rng(seed)
        rows = rng.standard_normal((q, d))
        proj = complement_projector(rows)
        got = _projection_matrix(proj.apply, d)
        basis = oracles.null_space_basis(rows, d)
        np.testing.assert_allclose(got, basis @ basis.T, atol=1e-10)

    def test_empty_rows_is_identity(self):
        proj = complement_projector(np.zeros((0, 4)))
        z = np.arange(4.0)
        np.testing.assert_allclose(proj.apply(z), z, atol=1e-14)

    def test_full_rank_rows_is_zero_map(self):
        proj = complement_projector(np.eye(3))
        assert proj.apply(np.ones(3)) == pytest.approx(np.zeros(3))


class TestLargestSingularValue:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
    def test_matches_numpy(self, m, d, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((m, d))
        assert largest_singular_value(A) == pytest.approx(
            np.linalg.norm(A, 2), rel=1e-8, abs=1e-10)

    def test_zero_matrix(self):
        assert largest_singular_value(np.zeros((3, 4))) == 0.0


class TestConstrainedLeastSquares:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 7), st.integers(0, 2 ** 31 - 1))
    def test_matches_nullspace_oracle(self, d, seed):
        rng = np.random.default_rng(seed)
        m = d - 1
        M = rng.standard_normal((m, d))
        rows = rng.standard_normal((d // 2, d))
        y = rng.standard_normal(m)
        res = constrained_least_squares(M, y, omega_rows=rows, tol=1e-12)
        expected = oracles.constrained_lstsq(M, rows, y)
        np.testing.assert_allclose(res.x, expected, atol=1e-7)

    def test_solution_satisfies_constraint(self):
        rng = np.random.default_rng(11)
        M = rng.standard_normal((4, 6))
        rows = rng.standard_normal((2, 6))
        res = constrained_least_squares(M, rng.standard_normal(4),
                                        omega_rows=rows, tol=1e-12)
        assert np.linalg.norm(rows @ res.x) < 1e-9

    def test_accepts_projector_argument(self):
        rng = np.random.default_rng(12)
        M = rng.standard_normal((4, 5))
        rows = rng.standard_normal((2, 5))
        y = rng.standard_normal(4)
        via_rows = constrained_least_squares(M, y, omega_rows=rows, tol=1e-12)
        via_proj = constrained_least_squares(
            M, y, projector=complement_projector(rows), tol=1e-12)
        np.testing.assert_allclose(via_rows.x, via_proj.x, atol=1e-9)

    def test_result_fields(self):
        M = np.eye(3)
        res = constrained_least_squares(M, np.ones(3),
                                        omega_rows=np.zeros((0, 3)))
        assert isinstance(res, LeastSquaresResult)
        assert res.converged
        assert not res.stagnated
        assert res.iterations >= 0


class TestPenalizedLeastSquares:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 7), st.sampled_from([0.5, 10.0, 1e3]),
           st.integers(0, 2 ** 31 - 1))
    def test_matches_dense_normal_equations(self, d, lam, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((d - 1, d))
        C = rng.standard_normal((d // 2 + 1, d))
        y = rng.standard_normal(d - 1)
        res = penalized_least_squares(M, y, lambda v: C @ v,
                                      lambda u: C.T @ u, lam, tol=1e-12,
                                      max_iter=10_000)
        expected = oracles.penalized_lstsq(M, C, lam, y)
        np.testing.assert_allclose(res.x, expected, atol=1e-6)

    def test_warm_start_agrees(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((4, 6))
        C = rng.standard_normal((3, 6))
        y = rng.standard_normal(4)
        cold = penalized_least_squares(M, y, lambda v: C @ v,
                                       lambda u: C.T @ u, 2.0, tol=1e-12)
        warm = penalized_least_squares(M, y, lambda v: C @ v,
                                       lambda u: C.T @ u, 2.0, tol=1e-12,
                                       x0=rng.standard_normal(6))
        np.testing.assert_allclose(cold.x, warm.x, atol=1e-8)

    def test_stagnation_flag_on_tiny_budget(self):
        rng = np.random.default_rng(6)
        M = rng.standard_normal((8, 8))
        C = rng.standard_normal((4, 8))
        res = penalized_least_squares(M, rng.standard_normal(8),
                                      lambda v: C @ v, lambda u: C.T @ u,
                                      1e3, tol=1e-14, max_iter=1)
        assert res.stagnated
        assert not res.converged
