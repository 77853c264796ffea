"""Recursive detection over Kronecker products of square factor designs.

Grouping and super-grouping are pure index arithmetic: the trailing axis of
length M is viewed as an (m_1, ..., m_L) array and recursion l' combines along
the axis of factor L - l' + 1.  Output index i is the row-major mixed-radix
number of the per-factor row digits (s_1 most significant).
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from kronoma.designer import SquareFactorDesign
from kronoma.errors import DimensionMismatchError, IndexOutOfRangeError


@dataclass(frozen=True, slots=True)
class SingletonSystem:
    """Observations y_i = W_i x_i + n_i with var(n_i) = noise_factors[i] * sigma^2."""

    values: np.ndarray
    scales: tuple[int, ...]
    noise_factors: tuple[int, ...]
    adds_per_recursion: tuple[int, ...]
    nonzero_adds_per_recursion: tuple[int, ...]

    @property
    def gains(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(w * w, n) for w, n in zip(self.scales, self.noise_factors))

    @property
    def adds(self) -> int:
        return sum(self.adds_per_recursion)

    @property
    def nonzero_adds(self) -> int:
        return sum(self.nonzero_adds_per_recursion)


def _radices(designs: Sequence[SquareFactorDesign]) -> tuple[int, ...]:
    return tuple(d.m for d in designs)


def combine(values: np.ndarray, designs: Sequence[SquareFactorDesign]) -> np.ndarray:
    """Apply every combining matrix to the trailing axis, rightmost factor first."""
    values = np.asarray(values)
    if not designs:
        return values.copy()
    radices = _radices(designs)
    total = math.prod(radices)
    if values.shape[-1] != total:
        raise DimensionMismatchError(
            f"observation length {values.shape[-1]} does not match product of factor sizes {total}"
        )
    lead = values.ndim - 1
    t = values.reshape(values.shape[:-1] + radices)
    if not np.issubdtype(t.dtype, np.inexact):
        t = t.astype(np.int64)
    for l in reversed(range(len(designs))):
        alpha = designs[l].alpha_array()
        t = np.moveaxis(np.moveaxis(t, lead + l, -1) @ alpha.T, -1, lead + l)
    return t.reshape(values.shape)


def _path_products(per_factor: Sequence[Sequence[int]]) -> tuple[int, ...]:
    table = [1]
    for values in per_factor:
        table = [a * b for a in table for b in values]
    return tuple(table)


def path_scales(designs: Sequence[SquareFactorDesign]) -> tuple[int, ...]:
    return _path_products([d.weights for d in designs])


def path_noise_factors(designs: Sequence[SquareFactorDesign]) -> tuple[int, ...]:
    return _path_products([d.noise_factors for d in designs])


def detect_square(y, designs: Sequence[SquareFactorDesign]) -> SingletonSystem:
    designs = tuple(designs)
    values = combine(np.asarray(y), designs)
    total = values.shape[-1]
    dense, sparse = [], []
    for l in reversed(range(len(designs))):
        d = designs[l]
        dense.append(total * (d.m - 1))
        sparse.append(total // d.m * sum(max(n - 1, 0) for n in d.noise_factors))
    return SingletonSystem(
        values=values,
        scales=path_scales(designs),
        noise_factors=path_noise_factors(designs),
        adds_per_recursion=tuple(dense),
        nonzero_adds_per_recursion=tuple(sparse),
    )


def mixed_radix_digits(i: int, radices: Sequence[int]) -> tuple[int, ...]:
    """1-based digits (s_1, ..., s_L) of 1-based index i."""
    total = math.prod(radices)
    if not 1 <= i <= total:
        raise IndexOutOfRangeError(f"index {i} outside 1..{total}")
    rest, digits = i - 1, []
    for m in reversed(radices):
        rest, s = divmod(rest, m)
        digits.append(s + 1)
    return tuple(reversed(digits))


def overall_gain(i: int, designs: Sequence[SquareFactorDesign]) -> Fraction:
    digits = mixed_radix_digits(i, _radices(designs))
    return math.prod((d.gains[s - 1] for d, s in zip(designs, digits)), start=Fraction(1))


def gain_tree(designs: Sequence[SquareFactorDesign]) -> tuple[Fraction, ...]:
    table = [Fraction(1)]
    for d in designs:
        table = [g * h for g in table for h in d.gains]
    return tuple(table)


def noise_correlation(designs: Sequence[SquareFactorDesign]) -> np.ndarray:
    """Predicted correlation matrix of singleton noise under white input noise."""
    cov = np.ones((1, 1))
    for d in designs:
        a = d.alpha_array().astype(float)
        cov = np.kron(cov, a @ a.T)
    scale = np.sqrt(np.diag(cov))
    return cov / np.outer(scale, scale)
