import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import simplex_projection_bruteforce, simplex_projection_qp
from rancl import binarize as bz
from rancl.graph import EntityDims, ScoreMatrix

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 10).flatmap(lambda n: arrays(np.float64, n, elements=finite))


def _random_scores(seed, n=11):
    a = np.random.default_rng(seed).normal(size=(n, n))
    s = (a + a.T) / 2
    np.fill_diagonal(s, s.max() + 0.5)
    return s


class TestSparsemaxRow:
    def test_uniform(self):
        np.testing.assert_allclose(bz.sparsemax_row([0, 0, 0, 0]), [0.25] * 4)

    def test_dominant(self):
        np.testing.assert_array_equal(bz.sparsemax_row([2.0, 0.0]), [1.0, 0.0])
        assert bz.sparsemax_threshold([2.0, 0.0]) == pytest.approx(1.0)

    def test_hand_worked(self):
        z = [0.5, 0.2, -0.1]
        np.testing.assert_allclose(bz.sparsemax_row(z), [0.6 + 1 / 30, 1 / 3, 1 / 30], atol=1e-12)
        assert bz.sparsemax_threshold(z) == pytest.approx(-0.4 / 3)
        np.testing.assert_allclose(bz.sparsemax_row(z), simplex_projection_bruteforce(z), atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            bz.sparsemax_row([])
        with pytest.raises(ValueError):
            bz.sparsemax_row([1.0, np.nan])

    def test_projected_gradient_cross_check(self, rng):
        for _ in range(3):
            z = rng.normal(size=5)
            np.testing.assert_allclose(bz.sparsemax_row(z), simplex_projection_qp(z), atol=1e-6)

    @settings(max_examples=300)
    @given(vectors)
    def test_matches_support_enumeration(self, z):
        np.testing.assert_allclose(bz.sparsemax_row(z), simplex_projection_bruteforce(z), atol=1e-8)

    @settings(max_examples=300)
    @given(vectors, st.floats(-1e3, 1e3))
    def test_shift_invariance(self, z, c):
        np.testing.assert_allclose(bz.sparsemax_row(z + c), bz.sparsemax_row(z), atol=1e-9)

    @settings(max_examples=300)
    @given(vectors)
    def test_simplex_membership(self, z):
        p = bz.sparsemax_row(z)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-9

    @settings(max_examples=300)
    @given(vectors, st.integers(0, 9), st.floats(0, 10))
    def test_support_monotone(self, z, i, delta):
        assume(i < z.size)
        before = bz.sparsemax_row(z)
        bumped = z.copy()
        bumped[i] += delta
        after = bz.sparsemax_row(bumped)
        if before[i] > 0:
            assert after[i] > 0


class TestSparseProbabilities:
    def test_rows_are_distributions(self):
        for mask in (False, True):
            p = bz.sparse_probabilities(_random_scores(0), mask_diagonal=mask)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(p >= 0)

    def test_masked_diagonal_is_zero(self):
        p = bz.sparse_probabilities(_random_scores(1), mask_diagonal=True)
        np.testing.assert_array_equal(np.diag(p), 0.0)

    def test_masked_equals_projection_of_off_diagonal(self):
        s = _random_scores(2, 5)
        p = bz.sparse_probabilities(s, mask_diagonal=True)
        for i in range(5):
            off = np.delete(s[i], i)
            np.testing.assert_allclose(np.delete(p[i], i), simplex_projection_bruteforce(off), atol=1e-12)


class TestBinarize:
    @pytest.mark.parametrize("method", [bz.Sparsemax(), bz.Sparsemax(mask_diagonal=True)])
    def test_dominant_pairs(self, method):
        # pairs (0,3), (1,4), (2,5) dominate their rows; self-scores are the row maxima
        s = np.full((6, 6), -0.5)
        for i, j in [(0, 3), (1, 4), (2, 5)]:
            s[i, j] = s[j, i] = 0.9
        np.fill_diagonal(s, 1.0)
        a = bz.binarize(s, method).matrix
        expected = np.zeros((6, 6), dtype=int)
        for i, j in [(0, 3), (1, 4), (2, 5)]:
            expected[i, j] = expected[j, i] = 1
        np.testing.assert_array_equal(a, expected)

    def test_threshold_above_max_is_empty(self):
        s = _random_scores(3)
        assert not bz.binarize(s, bz.StaticThreshold(s.max() + 1)).matrix.any()

    def test_threshold_is_strict(self):
        s = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert not bz.binarize(s, bz.StaticThreshold(0.5)).matrix.any()

    def test_topk_row_argmax_then_or(self):
        s = np.array([[9.0, 5.0, 1.0], [5.0, 9.0, 2.0], [1.0, 2.0, 9.0]])
        directed = bz.directed_edges(s, bz.TopK(1))
        assert {tuple(e) for e in np.argwhere(directed)} == {(0, 1), (1, 0), (2, 1)}
        a = bz.binarize(s, bz.TopK(1)).matrix
        assert {tuple(e) for e in np.argwhere(np.triu(a))} == {(0, 1), (1, 2)}

    def test_topk_too_large(self):
        with pytest.raises(ValueError):
            bz.binarize(np.zeros((3, 3)), bz.TopK(3))

    def test_quantile_keeps_top_fraction(self):
        # 6 distinct unordered pairs; keeping a third leaves the two best
        s = np.zeros((4, 4))
        for v, (i, j) in enumerate([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]):
            s[i, j] = s[j, i] = v
        a = bz.binarize(s, bz.Quantile(1 / 3)).matrix
        assert {tuple(e) for e in np.argwhere(np.triu(a))} == {(1, 3), (2, 3)}

    def test_accepts_score_matrix(self):
        s = ScoreMatrix(_random_scores(4), EntityDims(1, 7, 4))
        assert bz.binarize(s, bz.Sparsemax()).matrix.shape == (11, 11)

    @settings(max_examples=100)
    @given(st.integers(0, 2**31), st.sampled_from([
        bz.Sparsemax(), bz.Sparsemax(True), bz.StaticThreshold(0.0), bz.TopK(2), bz.Quantile(0.3),
    ]))
    def test_output_symmetric_zero_diagonal(self, seed, method):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=(8, 8))  # not even symmetric
        a = bz.binarize(s, method).matrix
        assert not np.any(np.diag(a))
        np.testing.assert_array_equal(a, a.T)

    @settings(max_examples=100)
    @given(st.integers(0, 2**31), st.floats(-100, 100))
    def test_sparsemax_invariant_to_row_shifts(self, seed, c):
        rng = np.random.default_rng(seed)
        s = _random_scores(seed % 1000, 7)
        shifts = rng.uniform(-abs(c) - 1, abs(c) + 1, size=(7, 1))
        for method in (bz.Sparsemax(), bz.Sparsemax(True)):
            np.testing.assert_array_equal(
                bz.directed_edges(s + shifts, method), bz.directed_edges(s, method))


class TestSymmetrize:
    def test_fixpoint(self):
        a = np.array([[0, 1], [1, 0]])
        np.testing.assert_array_equal(bz.symmetrize(a), a)

    def test_single_directed_edge(self):
        a = np.zeros((6, 6), dtype=int)
        a[2, 5] = 1
        out = bz.symmetrize(a)
        assert out[2, 5] == out[5, 2] == 1 and out.sum() == 2

    def test_empty(self):
        assert not bz.symmetrize(np.zeros((3, 3))).any()


class TestParse:
    @pytest.mark.parametrize("text,expected", [
        ("sparsemax", bz.Sparsemax()),
        ("sparsemax:masked", bz.Sparsemax(True)),
        ("threshold:0.25", bz.StaticThreshold(0.25)),
        ("topk:3", bz.TopK(3)),
        ("quantile:0.2", bz.Quantile(0.2)),
    ])
    def test_valid(self, text, expected):
        assert bz.parse_binarizer(text) == expected
        assert bz.parse_binarizer(str(expected)) == expected

    @pytest.mark.parametrize("text", ["bogus", "topk:0", "topk:x", "quantile:1.5", "threshold:", "sparsemax:half"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            bz.parse_binarizer(text)
