"""Tests for kronoma.sqdetect."""
import itertools
from fractions import Fraction

import numpy as np
import pytest

from kronoma.errors import DimensionMismatchError, IndexOutOfRangeError
from kronoma.patterns import expand
from kronoma.sqdetect import (
    combine,
    detect_square,
    gain_tree,
    mixed_radix_digits,
    noise_correlation,
    overall_gain,
    path_noise_factors,
    path_scales,
)


@pytest.fixture()
def all_bpsk_inputs():
    return np.array(list(itertools.product((1, -1), repeat=12)), dtype=float)


# ---------------------------------------------------------------------------
# noiseless recovery
# ---------------------------------------------------------------------------

def test_exhaustive_noiseless_recovery(p3p4, all_bpsk_inputs):
    g = expand(p3p4).to_array(float)
    y = all_bpsk_inputs @ g.T
    system = detect_square(y, p3p4.square_designs)
    recovered = system.values / np.array(system.scales)
    assert np.array_equal(recovered, all_bpsk_inputs)


def test_integer_observations_stay_exact(p3p4):
    x = np.array([1, -1, 1, 1, -1, -1, 1, -1, 1, 1, 1, -1])
    y = expand(p3p4).to_array() @ x
    system = detect_square(y, p3p4.square_designs)
    assert system.values.dtype == np.int64
    assert np.array_equal(system.values, np.array(system.scales) * x)


def test_add_counts(p3p4):
    system = detect_square(np.zeros(12), p3p4.square_designs)
    assert system.adds == 60
    assert system.adds_per_recursion == (36, 24)
    assert system.nonzero_adds == 42


def test_wrong_length_rejected(p3p4):
    with pytest.raises(DimensionMismatchError):
        detect_square(np.zeros(11), p3p4.square_designs)


def test_combine_without_designs_copies():
    y = np.arange(4.0)
    out = combine(y, ())
    assert np.array_equal(out, y)
    assert out is not y


# ---------------------------------------------------------------------------
# gains and indexing
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("i", range(1, 13))
def test_overall_gain(p3p4, i):
    expected = Fraction(4, 3) if i in (4, 8, 12) else Fraction(16, 9)
    assert overall_gain(i, p3p4.square_designs) == expected


def test_gain_tree_matches_singleton_gains(p3p4):
    system = detect_square(np.zeros(12), p3p4.square_designs)
    assert system.gains == gain_tree(p3p4.square_designs)


def test_path_products(p3p4):
    assert path_scales(p3p4.square_designs)[:4] == (4, 4, 4, 2)
    assert path_noise_factors(p3p4.square_designs)[:4] == (9, 9, 9, 3)


@pytest.mark.parametrize("i,digits", [
    (1, (1, 1)),
    (4, (1, 4)),
    (5, (2, 1)),
    (12, (3, 4)),
])
def test_mixed_radix_digits(i, digits):
    assert mixed_radix_digits(i, (3, 4)) == digits


@pytest.mark.parametrize("i", [0, 13])
def test_mixed_radix_out_of_range(i):
    with pytest.raises(IndexOutOfRangeError):
        mixed_radix_digits(i, (3, 4))


# ---------------------------------------------------------------------------
# noise statistics
# ---------------------------------------------------------------------------

def test_singleton_noise_variance_matches_gain(p3p4):
    rng = np.random.default_rng(7)
    n = rng.standard_normal((200_000, 12))
    system = detect_square(n, p3p4.square_designs)
    normalized = system.values / np.array(system.scales)
    expected = np.array([1 / float(g) for g in system.gains])
    assert np.allclose(normalized.var(axis=0), expected, rtol=0.02)


def test_noise_correlation_prediction(p3p4):
    rng = np.random.default_rng(11)
    n = rng.standard_normal((200_000, 12))
    out = combine(n, p3p4.square_designs)
    measured = np.corrcoef(out, rowvar=False)
    assert np.allclose(measured, noise_correlation(p3p4.square_designs), atol=0.02)


def test_groups_with_disjoint_support_are_uncorrelated(p3p4):
    corr = noise_correlation(p3p4.square_designs)
    # the fourth row of the 4x4 combiner shares no support with the others
    for i in (4, 8, 12):
        for j in range(1, 13):
            if j % 4 != 0:
                assert corr[i - 1, j - 1] == 0


def test_group_inputs_are_independent(d4):
    # the rows feeding one combining group come from disjoint REs
    rng = np.random.default_rng(3)
    n = rng.standard_normal((100_000, 12)).reshape(-1, 3, 4)
    first = combine(n[:, 0, :], (d4,))
    second = combine(n[:, 1, :], (d4,))
    cross = np.corrcoef(first[:, 0], second[:, 0])[0, 1]
    assert abs(cross) < 0.02
