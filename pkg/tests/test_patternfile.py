"""Tests for kronoma.patternfile."""
from fractions import Fraction

import pytest

from kronoma.errors import PatternFileError, ValidationError
from kronoma.patternfile import (
    dump_pattern,
    fixture_names,
    fixture_path,
    load_pattern,
    load_raw_factors,
    load_sic_policy,
    pattern_from_json,
    pattern_to_json,
)

from conftest import P3_ROWS, P4_ROWS


def test_load_p3p4(tmp_p3p4):
    pattern = load_pattern(tmp_p3p4)
    assert (pattern.M, pattern.K) == (12, 12)
    assert pattern.square_designs[0].gains == (Fraction(4, 3),) * 3


def test_fixtures_are_shipped():
    assert {"p3p4", "ones_f2f2", "pdma4x8", "ones_p3", "p3p4_sic"} <= set(fixture_names())
    assert fixture_path("p3p4").is_file()


@pytest.mark.parametrize("name,dims", [
    ("@p3p4", (12, 12)),
    ("@ones_f2f2", (4, 18)),
    ("@pdma4x8", (4, 8)),
    ("@ones_p3", (3, 6)),
])
def test_load_fixture(name, dims):
    pattern = load_pattern(name)
    assert (pattern.M, pattern.K) == dims


def test_unknown_fixture():
    with pytest.raises(PatternFileError, match="no shipped fixture"):
        load_pattern("@nope")


def test_round_trip(tmp_path, p3p4):
    path = tmp_path / "out.json"
    dump_pattern(p3p4, path)
    again = load_pattern(path)
    assert pattern_to_json(again) == {"rect": [], "square": [P3_ROWS, P4_ROWS]}


def test_square_without_combining_rejected():
    with pytest.raises(PatternFileError, match="no combining matrix"):
        pattern_from_json({"square": [[[1, 1, 0], [1, 1, 0], [0, 0, 1]]]})


def test_pinned_alpha():
    alpha = [[1, 1, -1], [1, -1, 1], [-1, 1, 1]]
    pattern = pattern_from_json({"square": [{"p": P3_ROWS, "alpha": alpha}]})
    assert pattern.square_designs[0].weights == (2, 2, 2)


def test_pinned_alpha_must_diagonalize():
    with pytest.raises(PatternFileError):
        pattern_from_json({"square": [{"p": P3_ROWS, "alpha": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}]})


@pytest.mark.parametrize("obj", [
    [],
    {"rect": [[[1, 2]]]},
    {"square": [[[1, 0]]]},
    {"rect": [], "square": []},
    {"layers": []},
])
def test_bad_patterns(obj):
    with pytest.raises(PatternFileError):
        pattern_from_json(obj)


def test_invalid_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(PatternFileError, match="not valid JSON"):
        load_pattern(str(p))


def test_pattern_file_error_is_validation():
    assert issubclass(PatternFileError, ValidationError)


def test_raw_factors_skip_combining_check(write_json):
    path = write_json("raw.json", {"rect": [[[1, 0, 1], [1, 0, 0]]], "square": [[[1, 1], [1, 1]]]})
    factors = load_raw_factors(path)
    assert [(f.rows, f.cols) for f in factors] == [(2, 3), (2, 2)]


def test_load_policy_fixture():
    policy = load_sic_policy("@p3p4_sic")
    assert policy.steps[0].detect == (1, 2)
