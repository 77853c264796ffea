"""Tests for kronoma.patterns."""
import itertools
from fractions import Fraction

import numpy as np
import pytest

from kronoma.errors import (
    DimensionOverflowError,
    InfeasibleDimsError,
    KronomaError,
    ValidationError,
)
from kronoma.patterns import (
    BinaryMatrix,
    KroneckerPattern,
    expand,
    expand_factors,
    factorized_search_space,
    kronecker,
    search_space_size,
    validate_factor,
)

# ---------------------------------------------------------------------------
# BinaryMatrix
# ---------------------------------------------------------------------------

def test_from_rows_round_trip():
    rows = [[1, 0, 1], [1, 1, 0]]
    m = BinaryMatrix.from_rows(rows)
    assert (m.rows, m.cols) == (2, 3)
    assert m.to_rows() == rows
    assert m.column(0) == (1, 1)
    assert m.row_weights() == (2, 2)


def test_column_bitmask_first_row_is_lsb():
    m = BinaryMatrix.from_rows([[1, 0], [0, 1], [1, 1]])
    assert m.column_bitmask(0) == 0b101
    assert m.column_bitmask(1) == 0b110


@pytest.mark.parametrize("rows", [
    [],
    [[]],
    [[1, 0], [1]],
    [[1, 2]],
])
def test_from_rows_rejects_malformed(rows):
    with pytest.raises(ValidationError):
        BinaryMatrix.from_rows(rows)


def test_validation_error_is_value_error():
    with pytest.raises(ValueError):
        BinaryMatrix.from_rows([[3]])


def test_identity():
    assert BinaryMatrix.identity(3).to_rows() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


# ---------------------------------------------------------------------------
# KroneckerPattern
# ---------------------------------------------------------------------------

def test_p3p4_dimensions(p3p4):
    assert (p3p4.M, p3p4.K) == (12, 12)
    assert p3p4.beta == 1
    assert (p3p4.L, p3p4.L_r, p3p4.L_s) == (2, 0, 2)
    assert p3p4.M_s == 12
    assert p3p4.M_r == p3p4.K_r == 1


def test_ones_f2f2_dimensions(ones_f2f2):
    assert (ones_f2f2.M, ones_f2f2.K) == (4, 18)
    assert ones_f2f2.beta == Fraction(9, 2)
    assert (ones_f2f2.M_r, ones_f2f2.K_r, ones_f2f2.M_s) == (4, 18, 1)


def test_pattern_needs_a_factor():
    with pytest.raises(ValidationError, match="at least one factor"):
        KroneckerPattern()


def test_rect_factor_must_be_wide(p3):
    with pytest.raises(ValidationError, match="more columns than rows"):
        KroneckerPattern((p3,))


# ---------------------------------------------------------------------------
# Kronecker expansion
# ---------------------------------------------------------------------------

def test_expand_matches_numpy_kron(p3p4, p3, p4):
    g = expand(p3p4)
    assert np.array_equal(g.to_array(), np.kron(p3.to_array(), p4.to_array()))


def test_expand_factors_is_left_fold():
    a = BinaryMatrix.from_rows([[1, 1]])
    b = BinaryMatrix.from_rows([[1, 0, 1], [1, 1, 0]])
    c = BinaryMatrix.from_rows([[0, 1], [1, 1]])
    expected = np.kron(np.kron(a.to_array(), b.to_array()), c.to_array())
    assert np.array_equal(expand_factors([a, b, c]).to_array(), expected)


def test_expand_factors_empty():
    with pytest.raises(ValidationError):
        expand_factors([])


def test_kronecker_size_cap():
    a = BinaryMatrix.from_rows([[1, 1, 1, 1]])
    with pytest.raises(DimensionOverflowError):
        kronecker(a, a, size_cap=8)


def test_overflow_is_kronoma_error():
    assert issubclass(DimensionOverflowError, KronomaError)
    assert DimensionOverflowError.exit_code == 3


def _all_binary(rows, cols):
    return [
        BinaryMatrix(rows, cols, entries)
        for entries in itertools.product((0, 1), repeat=rows * cols)
    ]


@pytest.mark.parametrize("shape_a,shape_b", [((2, 2), (2, 3)), ((2, 3), (2, 2))])
def test_expanded_validity_iff_every_factor_valid(shape_a, shape_b):
    seen = set()
    for a in _all_binary(*shape_a):
        for b in _all_binary(*shape_b):
            both = validate_factor(a).valid and validate_factor(b).valid
            assert validate_factor(expand_factors([a, b])).valid == both
            seen.add(both)
    assert seen == {True, False}


def test_ones_row_factor_spoils_expansion(ones_f2f2):
    ones, f2, _ = ones_f2f2.factors
    assert not validate_factor(ones).valid
    assert validate_factor(f2).valid
    assert validate_factor(expand(ones_f2f2)).duplicate_columns


def test_zero_column_propagates():
    bad = BinaryMatrix.from_rows([[1, 0, 1], [1, 0, 0]])
    good = BinaryMatrix.from_rows([[1, 1]])
    report = validate_factor(expand_factors([good, bad]))
    assert not report.valid
    assert report.zero_columns == (2, 5)


def test_duplicate_column_propagates():
    dup = BinaryMatrix.from_rows([[1, 1, 0], [0, 0, 1]])
    good = BinaryMatrix.from_rows([[1, 0], [1, 1]])
    report = validate_factor(expand_factors([dup, good]))
    assert not report.valid
    assert report.duplicate_columns


# ---------------------------------------------------------------------------
# validate_factor
# ---------------------------------------------------------------------------

def test_validate_factor_reports_positions():
    m = BinaryMatrix.from_rows([[1, 0, 1, 1], [0, 0, 1, 1]])
    report = validate_factor(m)
    assert not report.valid
    assert report.zero_columns == (2,)
    assert report.duplicate_columns == ((3, 4),)
    assert "zero columns 2" in report.describe()
    assert "duplicate columns {3,4}" in report.describe()


def test_validate_factor_ok(p3):
    assert validate_factor(p3).describe() == "valid"


# ---------------------------------------------------------------------------
# search-space counting
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m,k,expected", [
    (2, 3, 1),
    (3, 3, 35),
    (2, 2, 3),
    (6, 9, 23667689815),
])
def test_search_space_size(m, k, expected):
    assert search_space_size(m, k) == expected


def test_search_space_infeasible():
    with pytest.raises(InfeasibleDimsError):
        search_space_size(2, 4)


def test_search_space_rejects_nonpositive():
    with pytest.raises(ValidationError):
        search_space_size(0, 1)


def test_factorized_search_space():
    assert factorized_search_space([(2, 3), (3, 3)]) == 35
