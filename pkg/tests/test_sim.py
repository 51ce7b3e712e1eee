"""Vector kernels: normalization, cosine similarity, batch similarity matrices."""

import math

import numpy as np
import pytest

from ntxbound import (
    DimensionMismatchError,
    EmbeddingBatch,
    InvalidTemperatureError,
    ZeroVectorError,
    cosine_sim,
    l2_normalize,
    similarity_matrix,
)


def cosine_oracle(a, b):
    """Scalar-loop cosine similarity, no shared code with the implementation."""
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-12)

    def test_already_unit(self):
        np.testing.assert_allclose(l2_normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0], atol=0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVectorError):
            l2_normalize([0.0, 0.0])

    def test_unit_norm_and_direction(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            v = rng.standard_normal(rng.integers(1, 20)) * 10.0 ** rng.uniform(-6, 6)
            if np.max(np.abs(v)) == 0:
                continue
            u = l2_normalize(v)
            assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
            # direction preserved: u is a positive multiple of v
            assert float(np.dot(u, v)) > 0
            np.testing.assert_allclose(u * np.linalg.norm(v), v, rtol=1e-10)

    def test_huge_entries_do_not_overflow(self):
        u = l2_normalize([1e300, 1e300])
        np.testing.assert_allclose(u, [math.sqrt(0.5)] * 2, rtol=1e-12)


class TestCosineSim:
    def test_identical_directions(self):
        assert cosine_sim([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_opposite(self):
        assert cosine_sim([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(-1.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_sim([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine_sim([0.0, 0.0], [1.0, 0.0])

    def test_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            m = int(rng.integers(1, 16))
            a, b = rng.standard_normal(m), rng.standard_normal(m)
            assert cosine_sim(a, b) == pytest.approx(cosine_oracle(a, b), abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            m = int(rng.integers(1, 10))
            a, b = rng.standard_normal(m), rng.standard_normal(m)
            alpha, beta = 10.0 ** rng.uniform(-8, 8), 10.0 ** rng.uniform(-8, 8)
            assert cosine_sim(alpha * a, beta * b) == pytest.approx(cosine_sim(a, b), abs=1e-10)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            assert cosine_sim(a, b) == cosine_sim(b, a)

    def test_always_in_unit_interval(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            assert -1.0 <= cosine_sim(a, b) <= 1.0


class TestEmbeddingBatch:
    def test_basic_properties(self):
        b = EmbeddingBatch(np.ones((6, 3)))
        assert (b.n_rows, b.n_pairs, b.dim) == (6, 3, 3)

    def test_odd_row_count_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(np.ones((3, 2)))

    def test_zero_row_rejected(self):
        rows = np.ones((4, 2))
        rows[2] = 0.0
        with pytest.raises(ZeroVectorError):
            EmbeddingBatch(rows)

    def test_non_finite_rejected(self):
        rows = np.ones((2, 2))
        rows[0, 0] = np.nan
        with pytest.raises(ValueError):
            EmbeddingBatch(rows)

    def test_rows_are_frozen_copies(self):
        src = np.ones((2, 2))
        b = EmbeddingBatch(src)
        src[0, 0] = 5.0
        assert b.rows[0, 0] == 1.0
        with pytest.raises(ValueError):
            b.rows[0, 0] = 2.0


class TestSimilarityMatrix:
    def test_identical_rows(self):
        sm = similarity_matrix(EmbeddingBatch([[1.0, 2.0], [1.0, 2.0]]), tau=1.0)
        np.testing.assert_allclose(sm.sims, np.ones((2, 2)), atol=1e-12)

    def test_orthogonal_rows_scaled(self):
        sm = similarity_matrix(EmbeddingBatch([[1.0, 0.0], [0.0, 1.0]]), tau=0.5)
        np.testing.assert_array_equal(sm.sims, np.eye(2))
        np.testing.assert_array_equal(sm.scaled, 2.0 * np.eye(2))

    def test_matches_entrywise_oracle(self):
        rng = np.random.default_rng(123)
        rows = rng.standard_normal((4, 3))
        sm = similarity_matrix(EmbeddingBatch(rows), tau=0.7)
        for i in range(4):
            for k in range(4):
                assert sm.sims[i, k] == pytest.approx(cosine_oracle(rows[i], rows[k]), abs=1e-12)

    def test_invalid_temperature(self):
        b = EmbeddingBatch(np.ones((2, 2)))
        for tau in (0.0, -1.0, math.nan):
            with pytest.raises(InvalidTemperatureError):
                similarity_matrix(b, tau)

    def test_invariants_on_random_batches(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n_pairs = int(rng.integers(1, 9))
            m = int(rng.integers(1, 12))
            tau = float(rng.uniform(0.05, 2.0))
            sm = similarity_matrix(EmbeddingBatch(rng.standard_normal((2 * n_pairs, m))), tau)
            assert np.array_equal(sm.sims, sm.sims.T)  # exact symmetry
            np.testing.assert_allclose(np.diag(sm.sims), 1.0, atol=1e-12)
            assert np.all(sm.sims >= -1.0) and np.all(sm.sims <= 1.0)
            np.testing.assert_allclose(sm.scaled * tau, sm.sims, atol=1e-12)
