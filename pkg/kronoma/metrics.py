"""Sum rates, worst-case latency, op counts and MAP search-space sizes."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from kronoma.designer import SquareFactorDesign
from kronoma.errors import ValidationError
from kronoma.patterns import BinaryMatrix, KroneckerPattern, expand_factors
from kronoma.rectdetect import Constellation, SumsetConstellation, bpsk
from kronoma.sqdetect import gain_tree


@dataclass(frozen=True, slots=True)
class RateQuery:
    pattern: KroneckerPattern | BinaryMatrix
    rho: float
    gains: tuple[Fraction, ...] | None = None

    def __post_init__(self) -> None:
        if self.rho < 0:
            raise ValidationError(f"rho must be nonnegative, got {self.rho}")


def _log2det_shifted(gram: np.ndarray, scale: float) -> float:
    """log2 det(I + scale * gram); gram is PSD so the sign is always +1."""
    _, logdet = np.linalg.slogdet(np.eye(gram.shape[0]) + scale * gram)
    return float(logdet) / math.log(2)


def _rect_gram(pattern: KroneckerPattern) -> np.ndarray:
    if pattern.L_r == 0:
        return np.ones((1, 1))
    f = expand_factors(pattern.rect_factors).to_array(float)
    return f @ f.T


def _grouped_rate(gram: np.ndarray, gains: Sequence[Fraction], rho: float, m_total: int) -> float:
    counts = Counter(gains)
    terms = [n * _log2det_shifted(gram, rho * float(g)) for g, n in sorted(counts.items())]
    return math.fsum(terms) / (2 * m_total)


def pdma_capacity(a: BinaryMatrix, rho: float) -> float:
    arr = a.to_array(float)
    return _log2det_shifted(arr @ arr.T, rho) / (2 * a.rows)


def oma_rate(rho: float) -> float:
    return 0.5 * math.log2(1 + rho)


def sum_rate_general(q: RateQuery) -> float:
    if isinstance(q.pattern, BinaryMatrix):
        return pdma_capacity(q.pattern, q.rho)
    p = q.pattern
    gains = q.gains if q.gains is not None else gain_tree(p.square_designs)
    if len(gains) != p.M_s:
        raise ValidationError(f"gain table has {len(gains)} entries, pattern has {p.M_s} square paths")
    return _grouped_rate(_rect_gram(p), gains, q.rho, p.M)


def sum_rate_with_sic(q: RateQuery) -> float:
    if q.gains is None:
        raise ValidationError("sum_rate_with_sic needs a revised gain table")
    return sum_rate_general(q)


def _compositions(parts: int, total: int):
    """Exponent tuples (r_1..r_parts) summing to total."""
    for combo in itertools.combinations_with_replacement(range(parts), total):
        counts = [0] * parts
        for c in combo:
            counts[c] += 1
        yield tuple(counts)


def sum_rate_identical(f: BinaryMatrix | None, design: SquareFactorDesign, L_s: int, rho: float) -> float:
    """Sum rate of f x design^(x L_s), summing over gain exponent tuples."""
    gram = np.ones((1, 1)) if f is None else f.to_array(float) @ f.to_array(float).T
    m_r = 1 if f is None else f.rows
    terms = []
    for exps in _compositions(design.m, L_s):
        multinomial = math.factorial(L_s)
        for r in exps:
            multinomial //= math.factorial(r)
        gain = math.prod((g**r for g, r in zip(design.gains, exps)), start=Fraction(1))
        terms.append(multinomial * _log2det_shifted(gram, rho * float(gain)))
    return math.fsum(terms) / (2 * m_r * design.m**L_s)


def snr_shift_db(
    rate_a: Callable[[float], float],
    rate_b: Callable[[float], float],
    target: float,
    lo_db: float = -60.0,
    hi_db: float = 60.0,
) -> float:
    """SNR in dB that curve b needs minus what curve a needs to reach ``target``."""

    def solve(rate: Callable[[float], float]) -> float:
        return brentq(lambda db: rate(10 ** (db / 10)) - target, lo_db, hi_db, xtol=1e-12)

    return solve(rate_b) - solve(rate_a)


def brute_force_evaluations(noisy: bool, f: BinaryMatrix, space_size: int) -> float:
    return float(space_size**f.cols)


def brute_force_ops(noisy: bool, f: BinaryMatrix, space_size: int) -> tuple[int, int]:
    # per candidate: form F z, subtract from y, sum the squares
    adds = sum(max(w - 1, 0) for w in f.row_weights()) + f.rows + (f.rows - 1)
    muls = f.rows
    n = space_size**f.cols
    return adds * n, muls * n


@dataclass(frozen=True, slots=True)
class CostModel:
    t_add: float = 1.0
    mud_time: Callable[[bool, BinaryMatrix, int], float] = brute_force_evaluations
    mud_ops: Callable[[bool, BinaryMatrix, int], tuple[int, int]] = brute_force_ops

    def __post_init__(self) -> None:
        if self.t_add < 0:
            raise ValidationError("t_add must be nonnegative")


@dataclass(frozen=True, slots=True)
class OpCounts:
    adds: int
    muls: int


@dataclass(frozen=True, slots=True)
class SearchSpace:
    recursive_count: int
    direct_count: int


def _prefix_cols(factors: Sequence[BinaryMatrix], upto: int) -> int:
    return math.prod(f.cols for f in factors[:upto])


def _prefix_rows(factors: Sequence[BinaryMatrix], upto: int) -> int:
    return math.prod(f.rows for f in factors[:upto])


def _space(base: Constellation, order: int) -> int:
    return SumsetConstellation.of(base, order).size


def _rect_terms(factors: Sequence[BinaryMatrix], base: Constellation):
    """(count, noisy, factor, space size) per recursion of the rectangular chain."""
    L = len(factors)
    if L == 0:
        return []
    if L == 1:
        return [(1, True, factors[0], base.size)]
    terms = [(_prefix_rows(factors, L - 1), True, factors[L - 1], _space(base, _prefix_cols(factors, L - 1)))]
    for lp in range(2, L):
        lpp = L - lp + 1
        kappa = math.prod(f.cols for f in factors[lpp:])
        terms.append((
            kappa * _prefix_rows(factors, L - lp), False, factors[lpp - 1],
            _space(base, _prefix_cols(factors, L - lp)),
        ))
    terms.append((math.prod(f.cols for f in factors[1:]), False, factors[0], base.size))
    return terms


def latency_worst_case(pattern: KroneckerPattern, cost: CostModel = CostModel(), base: Constellation | None = None) -> float:
    base = base or bpsk()
    combining = cost.t_add * sum(d.m - 1 for d in pattern.square_designs)
    mud = [cost.mud_time(noisy, f, size) for _, noisy, f, size in _rect_terms(pattern.rect_factors, base)]
    return combining + math.fsum(mud)


def op_counts(pattern: KroneckerPattern, cost: CostModel = CostModel(), base: Constellation | None = None) -> OpCounts:
    base = base or bpsk()
    adds = pattern.M * sum(d.m - 1 for d in pattern.square_designs)
    muls = 0
    for count, noisy, f, size in _rect_terms(pattern.rect_factors, base):
        a, m = cost.mud_ops(noisy, f, size)
        adds += pattern.M_s * count * a
        muls += pattern.M_s * count * m
    return OpCounts(adds, muls)


def map_search_space(pattern: KroneckerPattern, base: Constellation) -> SearchSpace:
    if pattern.L_s:
        raise ValidationError("map_search_space needs a rectangular-only pattern")
    recursive = sum(count * size**f.cols for count, _, f, size in _rect_terms(pattern.rect_factors, base))
    return SearchSpace(recursive, base.size**pattern.K)


@dataclass(frozen=True, slots=True)
class Table1Params:
    t_in: int = 1
    t_out: int = 1
    d_f: int | None = None
    d_g: int | None = None
    constellation_size: int = 2


@dataclass(frozen=True, slots=True)
class Table1Row:
    scheme: str
    adds: float
    muls: float


def _big(value: int | Fraction, scale: float = 1.0) -> float:
    try:
        return float(value) * scale
    except OverflowError:
        return math.inf


def table1_estimates(pattern: KroneckerPattern, params: Table1Params = Table1Params()) -> tuple[Table1Row, ...]:
    """Order-of-magnitude detector comparison counts with unit constants.

    Rows are only comparable within a detector family; absolute values carry no meaning.
    """
    M, K, Ms = pattern.M, pattern.K, pattern.M_s
    rect_weights = [1]
    for f in pattern.rect_factors:
        rect_weights = [a * b for a in rect_weights for b in f.row_weights()]
    sq_weight = math.prod(max(d.p.row_weights()) for d in pattern.square_designs)
    d_f = params.d_f if params.d_f is not None else max(rect_weights)
    d_g = params.d_g if params.d_g is not None else max(rect_weights) * sq_weight
    c = params.constellation_size
    log_c = math.log2(c) if c > 1 else 0.0
    sic = K * K * M**3
    sic_ours = Fraction(sic, Ms**4)
    bp_g = d_g * M * K * c**d_g
    bp_f = Fraction(d_f * M * K * c**d_f, Ms)
    return (
        Table1Row("SIC over G", _big(sic), _big(sic)),
        Table1Row("ours + SIC over F", M + _big(sic_ours), _big(sic_ours)),
        Table1Row("BP over G", _big(bp_g, params.t_in * log_c), _big(bp_g)),
        Table1Row("ours + BP over F", M + _big(bp_f, params.t_in * log_c), _big(bp_f)),
        Table1Row("BP-IDD over G", _big(bp_g, params.t_in * params.t_out * log_c), _big(bp_g)),
        Table1Row("ours + BP-IDD over F", M + _big(bp_f, params.t_in * params.t_out * log_c), _big(bp_f)),
    )
