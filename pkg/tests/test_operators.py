import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cosparse.operators import (AnalysisOperator, DENSE_KINDS,
                                STRUCTURED_KINDS, corank, cosparsity,
                                cosupport_of, default_zero_tol,
                                load_operator_csv, make_1d_dif, make_2d_dif,
                                make_dense, make_fused_lasso, make_identity,
                                make_random_tight_frame, make_unitary,
                                save_operator_csv,
                                smallest_coefficients_cosupport)


def _sample_operators(d=6):
    rng = np.random.default_rng(0)
    return [
        make_identity(d),
        make_1d_dif(d),
        make_fused_lasso(d),
        make_2d_dif(2, 3),
        make_dense(rng.standard_normal((d + 2, d))),
        make_random_tight_frame(d + 3, d, seed=7),
    ]


class TestFactories:
    def test_shapes_and_kinds(self):
        assert make_identity(5).shape == (5, 5)
        assert make_1d_dif(5).shape == (4, 5)
        assert make_fused_lasso(5).shape == (9, 5)
        assert make_2d_dif(3, 4).shape == (17, 12)
        assert make_identity(5).kind in STRUCTURED_KINDS
        assert make_dense(np.eye(3)).kind in DENSE_KINDS

    def test_dif_matrix_matches_oracle(self):
        np.testing.assert_array_equal(make_1d_dif(7).as_matrix(),
                                      oracles.dif1d_matrix(7))

    def test_fused_matrix_matches_oracle(self):
        np.testing.assert_array_equal(make_fused_lasso(6).as_matrix(),
                                      oracles.fused_matrix(6))

    def test_2d_dif_rows_are_adjacent_differences(self):
        omega = make_2d_dif(3, 3)
        mat = omega.as_matrix()
        assert mat.shape == (12, 9)
        for row in mat:
            assert sorted(row[row != 0]) == [-1.0, 1.0]

    def test_tight_frame_columns_orthonormal(self):
        omega = make_random_tight_frame(9, 6, seed=3)
        gram = omega.as_matrix().T @ omega.as_matrix()
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-10)

    def test_tight_frame_deterministic(self):
        a = make_random_tight_frame(8, 5, seed=42).as_matrix()
        b = make_random_tight_frame(8, 5, seed=42).as_matrix()
        np.testing.assert_array_equal(a, b)

    def test_unitary_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            make_unitary(np.ones((3, 3)))

    def test_unitary_accepts_rotation(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 4)))
        assert make_unitary(q).kind == "unitary"


class TestApplyAdjoint:
    @pytest.mark.parametrize("omega", _sample_operators(),
                             ids=lambda o: o.kind)
    def test_apply_matches_matrix(self, omega):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(omega.d)
        np.testing.assert_allclose(omega.apply(v), omega.as_matrix() @ v,
                                   atol=1e-12)

    @pytest.mark.parametrize("omega", _sample_operators(),
                             ids=lambda o: o.kind)
    def test_adjoint_matches_matrix(self, omega):
        rng = np.random.default_rng(6)
        u = rng.standard_normal(omega.p)
        np.testing.assert_allclose(omega.adjoint(u), omega.as_matrix().T @ u,
                                   atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_adjoint_inner_product_identity(self, seed):
        rng = np.random.default_rng(seed)
        for omega in _sample_operators():
            v = rng.standard_normal(omega.d)
            u = rng.standard_normal(omega.p)
            assert omega.apply(v) @ u == pytest.approx(v @ omega.adjoint(u),
                                                       rel=1e-10, abs=1e-10)

    def test_row_submatrix(self):
        omega = make_fused_lasso(5)
        rows = [0, 3, 7]
        np.testing.assert_array_equal(omega.row_submatrix(rows),
                                      omega.as_matrix()[rows, :])


class TestCosupport:
    def test_cosupport_of_exact_zeros(self):
        omega = make_identity(6)
        v = np.array([0.0, 3.0, 0.0, -1.0, 0.0, 2.0])
        np.testing.assert_array_equal(cosupport_of(omega, v), [0, 2, 4])

    def test_default_tol_scales_with_signal(self):
        assert default_zero_tol(np.array([2.0, -5.0, 0.0])) == \
            pytest.approx(5e-9)
        omega = make_identity(3)
        v = np.array([1.0, 1e-12, 2.0])
        np.testing.assert_array_equal(cosupport_of(omega, v), [1])

    def test_smallest_coefficients_basic(self):
        omega = make_identity(6)
        z = np.array([1.0, -1.0, 2.0, -2.0, 3.0, 0.5])
        np.testing.assert_array_equal(
            smallest_coefficients_cosupport(omega, z, 1), [5])
        np.testing.assert_array_equal(
            smallest_coefficients_cosupport(omega, z, 2), [0, 5])

    def test_smallest_coefficients_keeps_every_exact_zero(self):
        omega = make_identity(6)
        z = np.array([0.0, 3.0, 0.0, -1.0, 0.0, 2.0])
        np.testing.assert_array_equal(
            smallest_coefficients_cosupport(omega, z, 2), [0, 2, 4])

    def test_cosparsity_counts_zeros(self):
        omega = make_identity(6)
        assert cosparsity(omega, np.array([0.0, 3, 0, -1, 0, 2])) == 3

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    def test_corank_matches_matrix_rank(self, d, seed):
        rng = np.random.default_rng(seed)
        omega = make_1d_dif(d + 1)
        size = rng.integers(0, omega.p + 1)
        rows = np.sort(rng.permutation(omega.p)[:size])
        expected = (np.linalg.matrix_rank(omega.as_matrix()[rows, :])
                    if size else 0)
        assert corank(omega, rows) == expected


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        omega = make_random_tight_frame(7, 4, seed=9)
        path = tmp_path / "op.csv"
        save_operator_csv(omega, str(path))
        loaded = load_operator_csv(str(path))
        assert loaded.shape == omega.shape
        np.testing.assert_array_equal(loaded.as_matrix(), omega.as_matrix())

    def test_comments_tolerated(self, tmp_path):
        path = tmp_path / "op.csv"
        path.write_text("# a comment\n2,2\n1,0\n0,1\n")
        loaded = load_operator_csv(str(path))
        np.testing.assert_array_equal(loaded.as_matrix(), np.eye(2))

    def test_shape_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("3,2\n1,0\n0,1\n")
        with pytest.raises(ValueError):
            load_operator_csv(str(path))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            AnalysisOperator("wavelet", 3, 2)
