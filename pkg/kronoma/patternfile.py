"""JSON pattern files, SIC policy files and the shipped fixtures.

A pattern file reads ``{"rect": [F_1, ...], "square": [P_1, ...]}`` with every
matrix a list of 0/1 rows.  A square entry may also be an object
``{"p": [...], "alpha": [...]}`` to pin a combining matrix.  Any path given as
``@name`` resolves to ``kronoma/fixtures/name.json``.
"""
from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from kronoma.designer import SquareFactorDesign, find_combining
from kronoma.errors import KronomaError, PatternFileError
from kronoma.gendetect import SicPolicy, parse_sic_policy
from kronoma.patterns import BinaryMatrix, KroneckerPattern

FIXTURE_PREFIX = "@"


def fixture_names() -> list[str]:
    folder = resources.files("kronoma") / "fixtures"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    path = Path(str(resources.files("kronoma") / "fixtures" / f"{name}.json"))
    if not path.is_file():
        raise PatternFileError(f"no shipped fixture named {name!r} (have: {', '.join(fixture_names())})")
    return path


def resolve(path: str | Path) -> Path:
    text = str(path)
    if text.startswith(FIXTURE_PREFIX):
        return fixture_path(text[len(FIXTURE_PREFIX):])
    return Path(text)


def _read_json(path: str | Path):
    target = resolve(path)
    try:
        with open(target, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise PatternFileError(f"not valid JSON ({e})") from None


def _matrix(rows, where: str) -> BinaryMatrix:
    try:
        return BinaryMatrix.from_rows(rows)
    except (TypeError, ValueError) as e:
        raise PatternFileError(f"{where}: {e}") from None


def square_design(entry, where: str = "square factor") -> SquareFactorDesign:
    if isinstance(entry, dict):
        p = _matrix(entry.get("p"), where)
        if not p.is_square:
            raise PatternFileError(f"{where} must be square, got {p.rows}x{p.cols}")
        if "alpha" not in entry:
            return square_design(p.to_rows(), where)
        alpha = tuple(tuple(int(a) for a in row) for row in entry["alpha"])
        design = find_combining(p)
        if design is not None and design.alpha == alpha:
            return design
        # pinned non-canonical alpha: recompute weights and gains from it
        try:
            a = np.array(alpha, dtype=np.int64)
            weights = tuple(int(w) for w in np.diag(a @ p.to_array()))
            gains = tuple(Fraction(w * w, int(np.count_nonzero(row))) for w, row in zip(weights, a))
            return SquareFactorDesign(p, alpha, weights, gains)
        except (ValueError, ZeroDivisionError) as e:
            raise PatternFileError(f"{where}: {e}") from None
    p = _matrix(entry, where)
    if not p.is_square:
        raise PatternFileError(f"{where} must be square, got {p.rows}x{p.cols}")
    design = find_combining(p)
    if design is None:
        raise PatternFileError(f"{where} has no combining matrix (not a valid square factor)")
    return design


def pattern_from_json(obj) -> KroneckerPattern:
    if not isinstance(obj, dict) or not set(obj) <= {"rect", "square"}:
        raise PatternFileError('pattern must be an object with "rect" and/or "square" lists')
    rect = tuple(_matrix(rows, f"rect factor {n}") for n, rows in enumerate(obj.get("rect", []), start=1))
    square = tuple(square_design(e, f"square factor {n}") for n, e in enumerate(obj.get("square", []), start=1))
    try:
        return KroneckerPattern(rect, square)
    except PatternFileError:
        raise
    except KronomaError as e:
        raise PatternFileError(str(e)) from None


def pattern_to_json(pattern: KroneckerPattern) -> dict:
    return {
        "rect": [f.to_rows() for f in pattern.rect_factors],
        "square": [d.p.to_rows() for d in pattern.square_designs],
    }


def load_pattern(path: str | Path) -> KroneckerPattern:
    try:
        return pattern_from_json(_read_json(path))
    except PatternFileError as e:
        raise PatternFileError(f"{path}: {e}") from None


def dump_pattern(pattern: KroneckerPattern, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pattern_to_json(pattern), fh)
        fh.write("\n")


def load_sic_policy(path: str | Path) -> SicPolicy:
    return parse_sic_policy(_read_json(path))


def load_raw_factors(path: str | Path) -> list[BinaryMatrix]:
    """Every matrix in a pattern file, in order, without checking combinability."""
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise PatternFileError(f"{path}: pattern must be a JSON object")
    out = []
    for key in ("rect", "square"):
        for n, entry in enumerate(obj.get(key, []), start=1):
            rows = entry.get("p") if isinstance(entry, dict) else entry
            out.append(_matrix(rows, f"{key} factor {n}"))
    return out
