"""Tests for kronoma.gendetect."""
import itertools
from fractions import Fraction

import numpy as np
import pytest

from kronoma.errors import InvalidPolicyError, NoiselessInfeasibleError
from kronoma.gendetect import (
    SicPolicy,
    SubsystemSolver,
    detect_general,
    detect_general_batch,
    detect_with_sic,
    detect_with_sic_batch,
    parse_sic_policy,
    phase_one,
    phase_one_batch,
    sic_gain_table,
    super_group_users,
    validate_sic_policy,
)
from kronoma.patterns import BinaryMatrix, KroneckerPattern, expand
from kronoma.rectdetect import bpsk, qpsk

from conftest import P3P4_POLICY


@pytest.fixture()
def ones_p3(d3):
    return KroneckerPattern((BinaryMatrix.from_rows([[1, 1]]),), (d3,))


@pytest.fixture()
def policy():
    return parse_sic_policy(P3P4_POLICY)


# ---------------------------------------------------------------------------
# phase one
# ---------------------------------------------------------------------------

def test_phase_one_square_only(p3p4):
    x = np.array([1, -1, 1, 1, -1, -1, 1, -1, 1, 1, 1, -1], dtype=float)
    outs = phase_one(expand(p3p4).to_array(float) @ x, p3p4)
    assert len(outs) == 12
    assert [o.tau for o in outs] == list(range(1, 13))
    assert [float(o.observations[0]) for o in outs] == pytest.approx(list(x))
    assert outs[3].gain == Fraction(4, 3)
    assert outs[0].gain == Fraction(16, 9)


def test_phase_one_general(ones_p3):
    x = np.array([1, -1, 1, 1, 1, -1], dtype=float)
    outs = phase_one(expand(ones_p3).to_array(float) @ x, ones_p3)
    assert len(outs) == 3
    assert outs[0].users == (1, 4)
    # super-group s carries x_s + x_{s+3}
    assert [float(o.observations[0]) for o in outs] == pytest.approx([2.0, 0.0, 0.0])


def test_phase_one_batch_matches_single_vector(ones_p3):
    xs = np.random.default_rng(3).choice((1.0, -1.0), size=(5, 6))
    ys = xs @ expand(ones_p3).to_array(float).T
    batch = phase_one_batch(ys, ones_p3)
    assert batch.shape == (5, 3, 1)
    for n in range(5):
        singles = [o.observations for o in phase_one(ys[n], ones_p3)]
        assert np.allclose(batch[n], singles)


def test_subsystem_solver_nearest_for_square_only(p3p4):
    solver = SubsystemSolver(p3p4, bpsk())
    res = solver(np.array([[0.9], [-1.2]]), 0.5)
    assert res.indices.tolist() == [[0], [1]]
    assert not res.unreliable.any()


def test_super_group_users(ones_f2f2, ones_p3):
    assert super_group_users(ones_p3, 2) == (2, 5)
    assert super_group_users(ones_f2f2, 1) == tuple(range(1, 19))


# ---------------------------------------------------------------------------
# general detection
# ---------------------------------------------------------------------------

def test_detect_general_noiseless(ones_p3):
    x = np.ones(6)
    report = detect_general(expand(ones_p3).to_array(float) @ x, ones_p3, bpsk(), 0.0)
    assert np.array_equal(report.symbols, x)
    assert not report.ambiguous
    assert report.gains == (Fraction(4, 3),) * 6
    # phase I: 3 rows x (3 - 1); phase II: 3 brute-force MUDs over 2^2 candidates
    assert (report.adds, report.muls) == (6 + 3 * 8, 3 * 4)
    assert report.latency == 2.0 + 4.0


def test_detect_general_flags_ambiguity(ones_p3):
    x = np.array([1, 1, 1, -1, 1, 1], dtype=float)
    report = detect_general(expand(ones_p3).to_array(float) @ x, ones_p3, bpsk(), 0.0)
    assert report.ambiguous


def test_detect_general_exhaustive_never_misanswers(ones_p3):
    xs = np.array(list(itertools.product((1.0, -1.0), repeat=6)))
    res = detect_general_batch(xs @ expand(ones_p3).to_array(float).T, ones_p3, bpsk(), 0.0)
    truth = (xs < 0).astype(int)
    reliable = ~res.unreliable
    assert np.array_equal(res.indices[reliable], truth[reliable])


def test_detect_general_square_only_qpsk(p3p4):
    base = qpsk()
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 4, size=12)
    y = expand(p3p4).to_array(float) @ base.array()[idx]
    report = detect_general(y, p3p4, base, 0.0)
    assert np.allclose(report.symbols, base.array()[idx])


def test_detect_general_infeasible_names_super_group(ones_p3):
    with pytest.raises(NoiselessInfeasibleError, match="square super-group 1"):
        detect_general(np.array([5.0, 5.0, 5.0]), ones_p3, bpsk(), 0.0)


# ---------------------------------------------------------------------------
# SIC policies
# ---------------------------------------------------------------------------

def test_parse_policy_accepts_steps_object():
    policy = parse_sic_policy({"steps": P3P4_POLICY})
    assert policy.steps[0].detect == (1, 2)
    assert policy.steps[0].reform[0].sources == (2, 3)
    assert policy.to_json() == P3P4_POLICY


@pytest.mark.parametrize("obj", [
    "detect everything",
    [1, 2],
    [{"reform": [{"from": [1]}]}],
])
def test_parse_policy_rejects_malformed(obj):
    with pytest.raises(InvalidPolicyError):
        parse_sic_policy(obj)


def test_validate_shipped_policy(p3p4, policy):
    assert validate_sic_policy(policy, p3p4) == {3: (2, 2)}


@pytest.mark.parametrize("steps,message", [
    ([{"reform": [{"target": 3, "from": [2, 3], "subtract": [1, 2]}]}], "before it is detected"),
    ([{"detect": [1], "reform": [{"target": 3, "from": [2, 3], "subtract": [1]}]}], "neither subtracted"),
    ([{"detect": [4]}], "does not exist"),
    ([{"detect": [1, 1]}], "twice"),
    ([{"detect": [1], "reform": [{"target": 1, "from": [1], "subtract": []}]}], "already settled"),
])
def test_validate_rejects(p3p4, steps, message):
    with pytest.raises(InvalidPolicyError, match=message):
        validate_sic_policy(parse_sic_policy(steps), p3p4)


def test_policy_needs_square_factor(ones_f2f2, policy):
    with pytest.raises(InvalidPolicyError, match="square factor"):
        validate_sic_policy(policy, ones_f2f2)


def test_sic_gain_table(p3p4, policy):
    table = sic_gain_table(p3p4, policy)
    third = Fraction(4, 3)
    assert table[:8] == (third * third,) * 3 + (third,) + (third * third,) * 3 + (third,)
    assert table[8:] == (Fraction(8, 3),) * 3 + (Fraction(2),)
    assert table[8] == Fraction(8, 3)


def test_empty_policy_keeps_gains(p3p4):
    from kronoma.sqdetect import gain_tree

    assert sic_gain_table(p3p4, SicPolicy()) == gain_tree(p3p4.square_designs)


# ---------------------------------------------------------------------------
# SIC detection
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("genie", [False, True])
def test_sic_noiseless_recovery(p3p4, policy, genie):
    rng = np.random.default_rng(4)
    xs = rng.choice((1.0, -1.0), size=(200, 12))
    y = xs @ expand(p3p4).to_array(float).T
    res = detect_with_sic_batch(y, p3p4, bpsk(), 0.0, policy, genie=xs if genie else None)
    assert np.array_equal(res.indices, (xs < 0).astype(int))
    assert not res.unreliable.any()


def test_sic_with_rectangular_factor(ones_p3):
    policy = parse_sic_policy([{"detect": [1, 2], "reform": [{"target": 3, "from": [2, 3], "subtract": [1, 2]}]}])
    x = np.ones(6)
    res = detect_with_sic(expand(ones_p3).to_array(float) @ x, ones_p3, bpsk(), 0.0, policy)
    assert np.array_equal(res.symbols, x)
    assert res.gains == (Fraction(4, 3), Fraction(4, 3), Fraction(2))


def test_empty_policy_matches_plain_detection(p3p4):
    rng = np.random.default_rng(8)
    y = rng.standard_normal((50, 12))
    plain = detect_general_batch(y, p3p4, bpsk(), 1.0)
    sic = detect_with_sic_batch(y, p3p4, bpsk(), 1.0, SicPolicy())
    assert np.array_equal(plain.indices, sic.indices)
