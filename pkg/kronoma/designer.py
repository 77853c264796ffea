"""Combining matrices and SNR gains for square factors, and design selection.

Each row of a combining matrix is searched independently over {-1, 0, +1}^m:
row i must annihilate every column of P except column i (C2) and leave a
nonzero weight on column i (C3).  A row and its negation describe the same
combination, so only survivors with a positive weight are kept.
"""
from __future__ import annotations

import itertools
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from kronoma.errors import EnumerationCapExceededError, NoValidDesignError, ValidationError
from kronoma.patterns import BinaryMatrix, KroneckerPattern

ENUMERATION_CAP = 10**6
CHUNK = 1024
CRITERIA = ("minmax", "product", "sumrate:<rho_db>")


@dataclass(frozen=True, slots=True)
class SquareFactorDesign:
    p: BinaryMatrix
    alpha: tuple[tuple[int, ...], ...]
    weights: tuple[int, ...]
    gains: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if not self.p.is_square:
            raise ValidationError(f"square factor must be square, got {self.p.rows}x{self.p.cols}")
        alpha = self.alpha_array()
        if alpha.shape != (self.m, self.m) or np.any(np.abs(alpha) > 1):
            raise ValidationError("combining matrix must be m x m with entries in {-1, 0, 1}")
        product = alpha @ self.p.to_array()
        if not np.array_equal(product, np.diag(self.weights)) or 0 in self.weights:
            raise ValidationError("combining matrix times P is not diagonal with nonzero weights")

    @property
    def m(self) -> int:
        return self.p.rows

    def alpha_array(self) -> np.ndarray:
        return np.array(self.alpha, dtype=np.int64).reshape(len(self.alpha), -1)

    @property
    def noise_factors(self) -> tuple[int, ...]:
        """Nonzero count of each alpha row: the noise variance multiplier of that output."""
        return tuple(sum(1 for a in row if a) for row in self.alpha)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "p": self.p.to_rows(),
            "alpha": [list(r) for r in self.alpha],
            "weights": list(self.weights),
            "gains": [str(g) for g in self.gains],
        }


@lru_cache(maxsize=None)
def _coefficient_rows(m: int) -> np.ndarray:
    # lexicographic in -1 < 0 < +1, scanning j ascending
    return np.array(list(itertools.product((-1, 0, 1), repeat=m)), dtype=np.int64).reshape(-1, m)


def _row_scores(ps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Survivor scores and weights for a stack of candidates.

    Returns ``(scores, weights)`` of shape (n, m, 3**m): ``scores`` is the gain of
    every coefficient vector for every row, or -1 where C2/C3 with w > 0 fail.
    """
    m = ps.shape[-1]
    coeffs = _coefficient_rows(m)
    nnz = np.count_nonzero(coeffs, axis=1)
    combined = np.einsum("cj,njk->nkc", coeffs, ps)  # (n, column, coeff)
    scores = np.full(combined.shape, -1.0)
    for i in range(m):
        others = np.delete(combined, i, axis=1)
        ok = np.all(others == 0, axis=1) & (combined[:, i, :] > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = combined[:, i, :].astype(float) ** 2 / np.maximum(nnz, 1)
        scores[:, i, :] = np.where(ok, gain, -1.0)
    return scores, combined


def _assemble(p: BinaryMatrix, scores: np.ndarray, combined: np.ndarray) -> SquareFactorDesign | None:
    m = p.rows
    coeffs = _coefficient_rows(m)
    alpha, weights, gains = [], [], []
    for i in range(m):
        best = int(np.argmax(scores[i]))  # first maximum == lexicographic tie-break
        if scores[i, best] < 0:
            return None
        row = tuple(int(v) for v in coeffs[best])
        w = int(combined[i, best])
        alpha.append(row)
        weights.append(w)
        gains.append(Fraction(w * w, sum(1 for a in row if a)))
    return SquareFactorDesign(p=p, alpha=tuple(alpha), weights=tuple(weights), gains=tuple(gains))


def find_combining(p: BinaryMatrix) -> SquareFactorDesign | None:
    if not p.is_square:
        raise ValidationError(f"square factor must be square, got {p.rows}x{p.cols}")
    scores, combined = _row_scores(p.to_array()[None, :, :])
    return _assemble(p, scores[0], combined[0])


def verify_lemma1(p: BinaryMatrix) -> int:
    """Count full combining matrices (per-row survivor counts multiplied)."""
    if not p.is_square:
        raise ValidationError(f"square factor must be square, got {p.rows}x{p.cols}")
    scores, _ = _row_scores(p.to_array()[None, :, :])
    return math.prod(int(c) for c in np.count_nonzero(scores[0] >= 0, axis=1))


def rational_rank(matrix) -> int:
    rows = [[Fraction(int(v)) for v in r] for r in np.asarray(matrix).tolist()]
    rank, ncols = 0, len(rows[0]) if rows else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                factor = rows[r][col] / rows[rank][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def _matrix_from_masks(masks: tuple[int, ...], m: int) -> np.ndarray:
    return np.array([[(mask >> i) & 1 for mask in masks] for i in range(m)], dtype=np.int64)


def candidate_matrices(m: int):
    """All m x m candidates with distinct nonzero columns, columns in ascending bitmask order."""
    for masks in itertools.combinations(range(1, 2**m), m):
        yield _matrix_from_masks(masks, m)


def _designs_for_chunk(chunk: list[np.ndarray]) -> list[SquareFactorDesign]:
    stack = np.stack(chunk)
    scores, combined = _row_scores(stack)
    found = []
    for n, arr in enumerate(chunk):
        design = _assemble(BinaryMatrix.from_array(arr), scores[n], combined[n])
        if design is not None:
            found.append(design)
    return found


def enumerate_square_designs(
    m: int,
    cap: int = ENUMERATION_CAP,
    workers: int | None = None,
    verbose: bool = False,
) -> list[SquareFactorDesign]:
    def log(msg: str) -> None:
        if verbose:
            print(msg, file=sys.stderr)

    if m < 1:
        raise ValidationError(f"m must be positive, got {m}")
    total = math.comb(2**m - 1, m)
    if total > cap:
        raise EnumerationCapExceededError(
            f"m={m} has {total} candidates, over the enumeration cap of {cap}; supply the factor explicitly"
        )
    log(f"Enumerating {total} candidates for m={m}")
    chunks: list[list[np.ndarray]] = []
    for arr in candidate_matrices(m):
        if not chunks or len(chunks[-1]) == CHUNK:
            chunks.append([])
        chunks[-1].append(arr)
    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        results = list(pool.map(_designs_for_chunk, chunks))
    designs = [d for part in results for d in part]
    log(f"{len(designs)} candidates admit a combining matrix")
    return designs


def _criterion_key(criterion: str):
    # ties on the primary score go to the secondary one, then to enumeration order
    if criterion == "minmax":
        return lambda d: (min(d.gains), math.prod(d.gains))
    if criterion == "product":
        return lambda d: (math.prod(d.gains), min(d.gains))
    if criterion.startswith("sumrate:"):
        from kronoma.metrics import RateQuery, sum_rate_general

        try:
            rho = 10 ** (float(criterion.split(":", 1)[1]) / 10)
        except ValueError:
            raise ValidationError(f"bad sumrate criterion {criterion!r}, expected sumrate:<rho_db>") from None
        return lambda d: sum_rate_general(RateQuery(KroneckerPattern((), (d,)), rho))
    raise ValidationError(f"unknown criterion {criterion!r}, expected one of {', '.join(CRITERIA)}")


def select_optimal_square(m: int, criterion: str = "minmax", **kwargs) -> SquareFactorDesign:
    key = _criterion_key(criterion)
    designs = enumerate_square_designs(m, **kwargs)
    if not designs:
        raise NoValidDesignError(f"no {m}x{m} binary factor admits a combining matrix")
    return max(designs, key=key)
