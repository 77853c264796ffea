"""Recursive detection over Kronecker products of rectangular factors.

Recursion 1 splits the received vector into groups of m_L rows and solves each
group for k_L auxiliary symbols with a brute-force MUD.  Auxiliary symbol j of
group i is a sum of base symbols; how many is fixed by the weight of row i of
F_1 x ... x F_{L-1}.  Collecting auxiliary j across groups gives super-group j,
which has the same structure one factor shorter.  Later recursions are
noiseless: their inputs are constellation points already.
"""
from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from kronoma.errors import (
    DimensionMismatchError,
    IndexOutOfRangeError,
    NoiselessInfeasibleError,
    SearchSpaceCapExceededError,
    ValidationError,
)
from kronoma.patterns import BinaryMatrix

MUD_SEARCH_CAP = 10**7
NOISELESS_RTOL = 1e-9
TABLE_LIMIT = 2**18  # candidate tables up to this size are kept in memory
WORK_LIMIT = 2**22  # max distance-matrix entries evaluated at once
FALLBACKS = ("nearest",)


@dataclass(frozen=True, slots=True)
class Constellation:
    name: str
    points: tuple[complex, ...]
    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValidationError("constellation needs at least one point")
        if len(set(self.points)) != len(self.points):
            raise ValidationError("constellation points must be distinct")
        if len(self.labels) != len(self.points):
            raise ValidationError("every constellation point needs a bit label")

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return len(self.labels[0])

    @property
    def is_complex(self) -> bool:
        return any(complex(p).imag != 0 for p in self.points)

    def array(self) -> np.ndarray:
        if self.is_complex:
            return np.array(self.points, dtype=complex)
        return np.array([complex(p).real for p in self.points], dtype=float)

    def nearest_index(self, values) -> np.ndarray:
        pts = self.array()
        values = np.asarray(values)
        dist = np.abs(values[..., None] - pts) ** 2
        return np.argmin(dist, axis=-1)

    def bit_error_table(self) -> np.ndarray:
        labels = np.array(self.labels)
        return np.count_nonzero(labels[:, None, :] != labels[None, :, :], axis=-1)


def bpsk(power: float = 1.0) -> Constellation:
    a = math.sqrt(power)
    return Constellation("bpsk", (a, -a), ((0,), (1,)))


def qpsk(power: float = 1.0) -> Constellation:
    a = math.sqrt(power / 2)
    # label bit 0 drives the in-phase sign, bit 1 the quadrature sign
    points = tuple(complex(a * (1 - 2 * b0), a * (1 - 2 * b1)) for b0, b1 in itertools.product((0, 1), repeat=2))
    return Constellation("qpsk", points, tuple(itertools.product((0, 1), repeat=2)))


MODULATIONS = {"bpsk": bpsk, "qpsk": qpsk}


def _point_key(value: complex) -> tuple[float, float]:
    value = complex(value)
    return (round(value.real, 9) + 0.0, round(value.imag, 9) + 0.0)


@dataclass(frozen=True, slots=True)
class SumsetConstellation:
    """Every value reachable as the sum of ``order`` base points."""

    base: Constellation
    order: int
    points: tuple[complex, ...] = field(init=False)
    _preimage: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValidationError(f"sumset order must be nonnegative, got {self.order}")
        preimage: dict[tuple[float, float], list[tuple[int, ...]]] = {}
        values: dict[tuple[float, float], complex] = {}
        base_points = [complex(p) for p in self.base.points]
        for combo in itertools.combinations_with_replacement(range(self.base.size), self.order):
            total = sum((base_points[i] for i in combo), complex(0))
            key = _point_key(total)
            preimage.setdefault(key, []).append(combo)
            values.setdefault(key, total)
        if self.order == 1:
            points = tuple(base_points)
        else:
            points = tuple(values[key] for key in sorted(values))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "_preimage", preimage)

    @classmethod
    def of(cls, base: Constellation, order: int) -> SumsetConstellation:
        return _sumset(base, order)

    @property
    def size(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        if self.base.is_complex:
            return np.array(self.points, dtype=complex)
        return np.array([p.real for p in self.points], dtype=float)

    def preimage(self, point: complex) -> list[tuple[int, ...]]:
        """Base-index multisets summing to ``point``."""
        return list(self._preimage.get(_point_key(point), []))


@lru_cache(maxsize=256)
def _sumset(base: Constellation, order: int) -> SumsetConstellation:
    return SumsetConstellation(base, order)


def _space_array(space: Constellation | SumsetConstellation) -> np.ndarray:
    return space.array()


@dataclass(frozen=True, slots=True)
class MudProblem:
    f: BinaryMatrix
    observations: tuple[complex, ...]
    symbol_space: Constellation | SumsetConstellation
    noise_variance: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(np.ravel(self.observations).tolist()))
        if len(self.observations) != self.f.rows:
            raise DimensionMismatchError(
                f"{len(self.observations)} observations for a factor with {self.f.rows} rows"
            )
        if self.noise_variance < 0:
            raise ValidationError("noise variance must be nonnegative")


@dataclass(frozen=True, slots=True)
class MudResult:
    symbols: np.ndarray
    indices: tuple[int, ...]
    score: float
    ambiguous: bool


@dataclass(slots=True)
class MudBatch:
    indices: np.ndarray
    score: np.ndarray
    ambiguous: np.ndarray
    infeasible: np.ndarray


class BruteForceMud:
    """Exhaustive minimum-residual search over ``points ** k`` candidates.

    Candidates are visited in lexicographic order of their index tuples and a
    later candidate only replaces the incumbent when strictly better.
    """

    def __init__(self, matrix: np.ndarray, points: np.ndarray, cap: int = MUD_SEARCH_CAP):
        self.matrix = np.asarray(matrix)
        self.points = np.asarray(points)
        self.m, self.k = self.matrix.shape
        self.total = self.points.size**self.k
        if self.total > cap:
            raise SearchSpaceCapExceededError(
                f"MUD search space {self.points.size}^{self.k} = {self.total} exceeds cap {cap}"
            )
        self.chunk = min(self.total, 4096)
        self._table = list(self._build_chunks()) if self.total <= TABLE_LIMIT else None

    def _build_chunks(self):
        shape = (self.points.size,) * self.k
        for start in range(0, self.total, self.chunk):
            flat = np.arange(start, min(start + self.chunk, self.total))
            idx = np.stack(np.unravel_index(flat, shape), axis=1) if self.k else flat[:, None]
            cand = self.points[idx] @ self.matrix.T
            yield start, cand, np.sum(np.abs(cand) ** 2, axis=1)

    def _chunks(self):
        return self._table if self._table is not None else self._build_chunks()

    def candidate(self, flat: np.ndarray) -> np.ndarray:
        shape = (self.points.size,) * self.k
        return np.stack(np.unravel_index(flat, shape), axis=-1)

    def solve(self, obs: np.ndarray, noiseless: bool) -> MudBatch:
        obs = np.atleast_2d(np.asarray(obs))
        if obs.shape[1] != self.m:
            raise DimensionMismatchError(f"expected {self.m} observations per system, got {obs.shape[1]}")
        n = obs.shape[0]
        best = np.zeros(n, dtype=np.int64)
        best_val = np.full(n, np.inf)
        matches = np.zeros(n, dtype=np.int64)
        obs_norm = np.sum(np.abs(obs) ** 2, axis=1)
        tol = NOISELESS_RTOL * (1.0 + obs_norm)
        rows = max(1, WORK_LIMIT // self.chunk)
        for lo in range(0, n, rows):
            hi = min(n, lo + rows)
            y, yn = obs[lo:hi], obs_norm[lo:hi]
            for start, cand, cand_norm in self._chunks():
                dist = yn[:, None] - 2 * np.real(y @ np.conj(cand).T) + cand_norm[None, :]
                arg = np.argmin(dist, axis=1)
                val = dist[np.arange(hi - lo), arg]
                better = val < best_val[lo:hi]
                best[lo:hi] = np.where(better, start + arg, best[lo:hi])
                best_val[lo:hi] = np.where(better, val, best_val[lo:hi])
                if noiseless:
                    matches[lo:hi] += np.count_nonzero(dist <= tol[lo:hi, None], axis=1)
        if noiseless:
            ambiguous, infeasible = matches > 1, matches == 0
        else:
            ambiguous = infeasible = np.zeros(n, dtype=bool)
        return MudBatch(self.candidate(best), np.maximum(best_val, 0.0), ambiguous, infeasible)


def mud_map(p: MudProblem, cap: int = MUD_SEARCH_CAP) -> MudResult:
    points = _space_array(p.symbol_space)
    mud = BruteForceMud(p.f.to_array(float), points, cap)
    noiseless = p.noise_variance == 0
    batch = mud.solve(np.array([p.observations]), noiseless)
    if batch.infeasible[0]:
        raise NoiselessInfeasibleError("no zero-residual assignment for noiseless system")
    idx = tuple(int(i) for i in batch.indices[0])
    return MudResult(points[list(idx)], idx, float(batch.score[0]), bool(batch.ambiguous[0]))


def _column_dims(factors: Sequence[BinaryMatrix | int]) -> tuple[int, ...]:
    return tuple(f if isinstance(f, int) else f.cols for f in factors)


def index_map(l_prime: int, path: Sequence[int], factors: Sequence[BinaryMatrix | int]) -> tuple[int, int, int]:
    """(psi, tau, kappa) addressing the super-group reached by ``path = (j_L, j_{L-1}, ...)``.

    The super-group at recursion ``l_prime`` holds users ``tau + n * kappa``
    (1-based) and is the ``psi``-th super-group of that recursion.
    """
    ks = _column_dims(factors)
    L = len(ks)
    if not 1 <= l_prime <= L:
        raise IndexOutOfRangeError(f"recursion {l_prime} outside 1..{L}")
    if len(path) != l_prime - 1:
        raise IndexOutOfRangeError(f"recursion {l_prime} needs a path of length {l_prime - 1}, got {len(path)}")

    def k(i: int) -> int:
        return ks[i - 1]

    def j(i: int) -> int:
        return path[L - i]

    for t, value in enumerate(path):
        if not 1 <= value <= ks[L - 1 - t]:
            raise IndexOutOfRangeError(f"path entry j_{L - t}={value} outside 1..{ks[L - 1 - t]}")
    if l_prime == 1:
        return 1, 1, 1
    psi = j(L - l_prime + 2) + sum(
        (j(L - i + 1) - 1) * math.prod(k(q) for q in range(L - l_prime + 2, L - i + 1))
        for i in range(1, l_prime - 1)
    )
    tau = j(L) + sum(
        (j(L - i) - 1) * math.prod(k(q) for q in range(L - i + 1, L + 1)) for i in range(1, l_prime - 1)
    )
    kappa = math.prod(k(q) for q in range(L - l_prime + 2, L + 1))
    return psi, tau, kappa


@dataclass(frozen=True, slots=True)
class TraceStep:
    level: int
    path: tuple[int, ...]
    psi: int
    tau: int
    kappa: int
    group: int
    observations: tuple[complex, ...]
    solution: tuple[complex, ...]
    ambiguous: bool


@dataclass(slots=True)
class ChainResult:
    indices: np.ndarray
    ambiguous: np.ndarray
    infeasible: np.ndarray

    @property
    def unreliable(self) -> np.ndarray:
        return self.ambiguous | self.infeasible


@dataclass(frozen=True, slots=True)
class RectDetection:
    symbols: np.ndarray
    ambiguous: bool
    trace: tuple[TraceStep, ...] = ()


def _row_weight_products(factors: Sequence[BinaryMatrix]) -> tuple[int, ...]:
    table = [1]
    for f in factors:
        table = [a * b for a in table for b in f.row_weights()]
    return tuple(table)


class RectangularChain:
    """Batch engine for the rectangular recursion over one factor list."""

    def __init__(
        self,
        factors: Sequence[BinaryMatrix],
        base: Constellation,
        cap: int = MUD_SEARCH_CAP,
        fallback: str | None = None,
    ):
        if not factors:
            raise ValidationError("rectangular detection needs at least one factor")
        if fallback is not None and fallback not in FALLBACKS:
            raise ValidationError(f"unknown fallback {fallback!r}, expected one of {FALLBACKS}")
        self.factors = tuple(factors)
        self.base = base
        self.cap = cap
        self.fallback = fallback
        self.M = math.prod(f.rows for f in self.factors)
        self.K = math.prod(f.cols for f in self.factors)
        self._muds: dict[tuple[int, int], BruteForceMud] = {}
        self._orders = [_row_weight_products(self.factors[:l]) for l in range(len(self.factors))]

    def mud(self, factor: int, order: int) -> BruteForceMud:
        """MUD for 1-based ``factor`` over the sumset of the given order (cached)."""
        key = (factor, order)
        if key not in self._muds:
            space = SumsetConstellation.of(self.base, order)
            matrix = self.factors[factor - 1].to_array(float)
            self._muds[key] = BruteForceMud(matrix, space.array(), self.cap)
        return self._muds[key]

    def run(self, obs: np.ndarray, noise_variance: float, strict: bool = False, trace: list | None = None) -> ChainResult:
        obs = np.atleast_2d(np.asarray(obs))
        if obs.shape[1] != self.M:
            raise DimensionMismatchError(f"expected {self.M} observations, got {obs.shape[1]}")
        n = obs.shape[0]
        L = len(self.factors)
        out = np.zeros((n, self.K), dtype=np.int64)
        amb_out = np.zeros((n, self.K), dtype=bool)
        inf_out = np.zeros((n, self.K), dtype=bool)
        items = [((), obs, np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))]
        for level in range(1, L + 1):
            factor = L - level + 1
            f = self.factors[factor - 1]
            noiseless = level > 1 or noise_variance == 0
            orders = self._orders[factor - 1]
            next_items = []
            for path, cur, amb, inf in items:
                psi, tau, kappa = index_map(level, path, self.factors)
                groups = cur.shape[1] // f.rows
                upstream = amb
                aux = None
                for g in range(groups):
                    mud = self.mud(factor, orders[g])
                    res = mud.solve(cur[:, g * f.rows:(g + 1) * f.rows], noiseless)
                    # rows made infeasible by an earlier ambiguous choice are flagged, not raised
                    if self.fallback is None and strict and (res.infeasible & ~upstream).any():
                        raise NoiselessInfeasibleError(
                            "no zero-residual assignment for noiseless system", level=level, path=path
                        )
                    amb = amb | res.ambiguous
                    if self.fallback is None:
                        inf = inf | res.infeasible
                    values = mud.points[res.indices]
                    if trace is not None:
                        trace.append(TraceStep(
                            level=level, path=path, psi=psi, tau=tau, kappa=kappa, group=g + 1,
                            observations=tuple(cur[0, g * f.rows:(g + 1) * f.rows].tolist()),
                            solution=tuple(values[0].tolist()), ambiguous=bool(res.ambiguous[0]),
                        ))
                    if factor == 1:
                        users = tau - 1 + kappa * np.arange(f.cols)
                        out[:, users] = res.indices
                    else:
                        if aux is None:
                            aux = np.zeros((n, groups, f.cols), dtype=values.dtype)
                        aux[:, g, :] = values
                if factor == 1:
                    users = tau - 1 + kappa * np.arange(f.cols)
                    amb_out[:, users] = amb[:, None]
                    inf_out[:, users] = inf[:, None]
                else:
                    for jj in range(f.cols):
                        next_items.append((path + (jj + 1,), aux[:, :, jj], amb, inf))
            items = next_items
        return ChainResult(out, amb_out, inf_out)


def detect_rect(
    y,
    factors: Sequence[BinaryMatrix],
    base: Constellation,
    noise_variance: float,
    fallback: str | None = None,
    cap: int = MUD_SEARCH_CAP,
) -> RectDetection:
    chain = RectangularChain(factors, base, cap=cap, fallback=fallback)
    steps: list[TraceStep] = []
    res = chain.run(np.asarray(y)[None, :], noise_variance, strict=True, trace=steps)
    symbols = base.array()[res.indices[0]]
    return RectDetection(symbols=symbols, ambiguous=bool(res.ambiguous[0].any()), trace=tuple(steps))
