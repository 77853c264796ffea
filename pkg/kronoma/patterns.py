"""Binary pattern matrices, Kronecker algebra, validity checks and design-space counting."""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import TYPE_CHECKING

import numpy as np

from kronoma.errors import DimensionOverflowError, InfeasibleDimsError, ValidationError

if TYPE_CHECKING:
    from kronoma.designer import SquareFactorDesign

SIZE_CAP = 2**24  # max M*K of any expanded matrix


@dataclass(frozen=True, slots=True)
class BinaryMatrix:
    rows: int
    cols: int
    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(f"matrix dims must be positive, got {self.rows}x{self.cols}")
        if len(self.entries) != self.rows * self.cols:
            raise ValidationError(
                f"expected {self.rows * self.cols} entries for {self.rows}x{self.cols}, "
                f"got {len(self.entries)}"
            )
        if any(v not in (0, 1) for v in self.entries):
            raise ValidationError("pattern entries must be 0 or 1")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> BinaryMatrix:
        if not rows or not rows[0]:
            raise ValidationError("pattern matrix must have at least one row and column")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValidationError("pattern matrix rows have unequal lengths")
        return cls(len(rows), width, tuple(int(v) for r in rows for v in r))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> BinaryMatrix:
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValidationError(f"pattern matrix must be 2-D, got shape {arr.shape}")
        return cls(int(arr.shape[0]), int(arr.shape[1]), tuple(int(v) for v in arr.ravel()))

    @classmethod
    def identity(cls, m: int) -> BinaryMatrix:
        return cls.from_array(np.eye(m, dtype=np.int64))

    def to_array(self, dtype=np.int64) -> np.ndarray:
        return np.array(self.entries, dtype=dtype).reshape(self.rows, self.cols)

    def to_rows(self) -> list[list[int]]:
        return [list(self.entries[i * self.cols:(i + 1) * self.cols]) for i in range(self.rows)]

    def column(self, j: int) -> tuple[int, ...]:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def column_bitmask(self, j: int) -> int:
        """Column j as an integer, first row in the least significant bit."""
        return sum(bit << i for i, bit in enumerate(self.column(j)))

    def row_weights(self) -> tuple[int, ...]:
        return tuple(sum(self.entries[i * self.cols:(i + 1) * self.cols]) for i in range(self.rows))

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols


@dataclass(frozen=True, slots=True)
class FactorReport:
    valid: bool
    zero_columns: tuple[int, ...] = ()
    duplicate_columns: tuple[tuple[int, ...], ...] = ()

    def describe(self) -> str:
        if self.valid:
            return "valid"
        parts = []
        if self.zero_columns:
            parts.append("zero columns " + ",".join(map(str, self.zero_columns)))
        for group in self.duplicate_columns:
            parts.append("duplicate columns {" + ",".join(map(str, group)) + "}")
        return "invalid: " + "; ".join(parts)


@dataclass(frozen=True, slots=True)
class KroneckerPattern:
    """Rectangular factors followed by square designs, folded left to right."""

    rect_factors: tuple[BinaryMatrix, ...] = ()
    square_designs: tuple[SquareFactorDesign, ...] = ()
    _dims: tuple[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rect_factors", tuple(self.rect_factors))
        object.__setattr__(self, "square_designs", tuple(self.square_designs))
        if not self.rect_factors and not self.square_designs:
            raise ValidationError("pattern needs at least one factor")
        for idx, f in enumerate(self.rect_factors, start=1):
            if f.cols <= f.rows:
                raise ValidationError(
                    f"rectangular factor {idx} must have more columns than rows, got {f.rows}x{f.cols}"
                )
        m = math.prod(f.rows for f in self.factors)
        k = math.prod(f.cols for f in self.factors)
        object.__setattr__(self, "_dims", (m, k))

    @property
    def factors(self) -> tuple[BinaryMatrix, ...]:
        return self.rect_factors + tuple(d.p for d in self.square_designs)

    @property
    def M(self) -> int:
        return self._dims[0]

    @property
    def K(self) -> int:
        return self._dims[1]

    @property
    def beta(self) -> Fraction:
        return Fraction(self.K, self.M)

    @property
    def L(self) -> int:
        return len(self.rect_factors) + len(self.square_designs)

    @property
    def L_r(self) -> int:
        return len(self.rect_factors)

    @property
    def L_s(self) -> int:
        return len(self.square_designs)

    @property
    def M_r(self) -> int:
        return math.prod(f.rows for f in self.rect_factors)

    @property
    def K_r(self) -> int:
        return math.prod(f.cols for f in self.rect_factors)

    @property
    def M_s(self) -> int:
        return math.prod(d.m for d in self.square_designs)


def kronecker(a: BinaryMatrix, b: BinaryMatrix, size_cap: int = SIZE_CAP) -> BinaryMatrix:
    rows, cols = a.rows * b.rows, a.cols * b.cols
    if rows * cols > size_cap:
        raise DimensionOverflowError(
            f"Kronecker product would be {rows}x{cols}, over the size cap of {size_cap} entries"
        )
    return BinaryMatrix.from_array(np.kron(a.to_array(np.uint8), b.to_array(np.uint8)))


def expand_factors(factors: Iterable[BinaryMatrix], size_cap: int = SIZE_CAP) -> BinaryMatrix:
    factors = list(factors)
    if not factors:
        raise ValidationError("nothing to expand")
    return reduce(lambda acc, f: kronecker(acc, f, size_cap), factors[1:], factors[0])


def expand(p: KroneckerPattern, size_cap: int = SIZE_CAP) -> BinaryMatrix:
    return expand_factors(p.factors, size_cap)


def validate_factor(m: BinaryMatrix) -> FactorReport:
    zero = []
    seen: dict[tuple[int, ...], list[int]] = {}
    for j in range(m.cols):
        col = m.column(j)
        if not any(col):
            zero.append(j + 1)
        seen.setdefault(col, []).append(j + 1)
    dups = tuple(tuple(idx) for col, idx in seen.items() if len(idx) > 1 and any(col))
    return FactorReport(valid=not zero and not dups, zero_columns=tuple(zero), duplicate_columns=dups)


def search_space_size(m: int, k: int) -> int:
    """Number of m x k binary matrices with distinct nonzero columns, ignoring column order."""
    if m < 1 or k < 1:
        raise ValidationError(f"dims must be positive, got m={m}, k={k}")
    available = 2**m - 1
    if k > available:
        raise InfeasibleDimsError(f"no {m}x{k} matrix has distinct nonzero columns (max k is {available})")
    return math.comb(available, k)


def factorized_search_space(dims: Iterable[tuple[int, int]]) -> int:
    return math.prod(search_space_size(m, k) for m, k in dims)
