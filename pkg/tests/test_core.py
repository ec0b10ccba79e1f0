import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_array_equal

from bipartite_ustat import core
from bipartite_ustat.errors import CombinatorialOverflow, FormatError, SizeError, ValidationError


class TestBipartiteMatrix:
    def test_binary_flag(self):
        assert core.BipartiteMatrix([[0, 1], [1, 0]]).is_binary
        assert not core.BipartiteMatrix([[0, 2], [1, 0]]).is_binary

    def test_values_are_read_only_copy(self):
        src = np.ones((2, 3))
        Y = core.BipartiteMatrix(src)
        src[0, 0] = 5
        assert Y.values[0, 0] == 1
        with pytest.raises(ValueError):
            Y.values[0, 0] = 3

    def test_dimensions(self):
        Y = core.BipartiteMatrix(np.zeros((3, 5)))
        assert (Y.m, Y.n, Y.N) == (3, 5, 8)

    @pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros(4), [[1.0, np.nan]], [[np.inf]]])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValidationError):
            core.BipartiteMatrix(bad)

    def test_label_length_checked(self):
        with pytest.raises(ValidationError):
            core.BipartiteMatrix(np.zeros((2, 2)), row_labels=("a",))


class TestBinomial:
    def test_small_values(self):
        assert core.binom_exact(5, 2) == 10
        assert core.binom_exact(4, 0) == 1
        assert core.binom_exact(3, 5) == 0

    def test_large_exact(self):
        assert core.binom_exact(4096, 3) == 4096 * 4095 * 4094 // 6

    def test_overflow_guard(self):
        with pytest.raises(CombinatorialOverflow):
            core.binom_exact(400, 200)

    def test_negative(self):
        with pytest.raises(ValidationError):
            core.binom_exact(-1, 0)


class TestSubsets:
    @given(st.integers(1, 9), st.integers(1, 4))
    def test_matches_itertools(self, dim, k):
        expected = list(itertools.combinations(range(dim), k))
        assert list(core.enumerate_subsets(dim, k)) == expected
        arr = core.subset_array(dim, k)
        assert [tuple(r) for r in arr] == expected

    @given(st.integers(2, 10), st.integers(1, 4), st.data())
    def test_rank_slices_concatenate(self, dim, k, data):
        total = math.comb(dim, k)
        cut = data.draw(st.integers(0, total))
        full = list(core.enumerate_subsets(dim, k))
        parts = list(core.enumerate_subsets(dim, k, 0, cut)) + list(core.enumerate_subsets(dim, k, cut))
        assert parts == full
        assert [tuple(r) for r in core.subset_array(dim, k, cut)] == full[cut:]

    def test_k_larger_than_dim(self):
        assert list(core.enumerate_subsets(2, 3)) == []
        assert core.subset_array(2, 3).shape == (0, 3)


class TestExtract:
    def test_extracts_block(self):
        Y = np.arange(12.0).reshape(3, 4)
        assert_array_equal(core.extract_submatrix(Y, [0, 2], [1, 3]), [[1, 3], [9, 11]])

    def test_out_of_bounds(self):
        with pytest.raises(SizeError):
            core.extract_submatrix(np.zeros((2, 2)), [2], [0])


class TestIO:
    def test_round_trip_with_labels(self, tmp_path, rng):
        Y = core.BipartiteMatrix(rng.random((3, 4)), row_labels=["a", "b", "c"], col_labels=["w", "x", "y", "z"])
        path = tmp_path / "m.csv"
        core.save_matrix(Y, path)
        back = core.load_matrix(path)
        assert_array_equal(back.values, Y.values)
        assert back.row_labels == Y.row_labels
        assert back.col_labels == Y.col_labels

    def test_tsv_plain(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("1\t0\n0\t1\n")
        assert_array_equal(core.load_matrix(path).values, np.eye(2))

    def test_ragged_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(FormatError, match="line 2"):
            core.load_matrix(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,x\n")
        with pytest.raises(FormatError, match="line 2, column 2"):
            core.load_matrix(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            core.load_matrix(tmp_path / "nope.csv")
