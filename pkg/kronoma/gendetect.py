"""Two-phase detection for a general pattern F x P_1 x ... x P_Ls, with optional SIC.

Phase I applies the square combining matrices.  Square super-group s then
carries y_s = W_s F x_s + n with x_s the users s, s + M_s, s + 2 M_s, ...
Phase II divides by W_s and runs the rectangular chain on each super-group.

SIC acts on the leftmost square factor, the last square recursion: after some
rows are decided, designated equations are rebuilt from raw rows by
subtracting the decided contributions.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from kronoma.errors import InvalidPolicyError, NoiselessInfeasibleError
from kronoma.metrics import latency_worst_case, op_counts
from kronoma.patterns import KroneckerPattern, expand_factors
from kronoma.rectdetect import MUD_SEARCH_CAP, ChainResult, Constellation, RectangularChain
from kronoma.sqdetect import combine, gain_tree, mixed_radix_digits, path_scales

SIC_MODES = ("imperfect", "genie")


@dataclass(frozen=True, slots=True)
class PhaseOneOutput:
    psi: int
    tau: int
    observations: np.ndarray
    gain: Fraction
    users: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class DetectionReport:
    symbols: np.ndarray
    gains: tuple[Fraction, ...]
    ambiguous: bool
    adds: int = 0
    muls: int = 0
    latency: float = 0.0  # worst case, in t_add units


@dataclass(frozen=True, slots=True)
class Reform:
    target: int
    sources: tuple[int, ...]
    subtract: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class SicStep:
    detect: tuple[int, ...] = ()
    reform: tuple[Reform, ...] = ()


@dataclass(frozen=True, slots=True)
class SicPolicy:
    steps: tuple[SicStep, ...] = ()

    @property
    def is_empty(self) -> bool:
        return all(not s.detect and not s.reform for s in self.steps)

    def to_json(self) -> list:
        return [
            {
                "detect": list(s.detect),
                "reform": [
                    {"target": r.target, "from": list(r.sources), "subtract": list(r.subtract)}
                    for r in s.reform
                ],
            }
            for s in self.steps
        ]


@dataclass(frozen=True, slots=True)
class SicDetection:
    symbols: np.ndarray
    gains: tuple[Fraction, ...]
    ambiguous: bool


@dataclass(slots=True)
class _Equation:
    numerator: np.ndarray
    weight: int
    depends: tuple[int, ...] = ()


@dataclass(slots=True)
class _RowDecision:
    indices: np.ndarray
    unreliable: np.ndarray
    ambiguous: np.ndarray


def parse_sic_policy(obj) -> SicPolicy:
    if isinstance(obj, dict):
        obj = obj.get("steps", [])
    if not isinstance(obj, list):
        raise InvalidPolicyError("SIC policy must be a list of steps")
    steps = []
    for n, raw in enumerate(obj, start=1):
        if not isinstance(raw, dict):
            raise InvalidPolicyError(f"SIC step {n} must be an object")
        try:
            reforms = tuple(
                Reform(int(r["target"]), tuple(int(v) for v in r["from"]), tuple(int(v) for v in r.get("subtract", ())))
                for r in raw.get("reform", ())
            )
            steps.append(SicStep(tuple(int(v) for v in raw.get("detect", ())), reforms))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidPolicyError(f"SIC step {n} is malformed: {e}") from None
    return SicPolicy(tuple(steps))


def validate_sic_policy(policy: SicPolicy, pattern: KroneckerPattern) -> dict[int, tuple[int, int]]:
    """Check a policy against the leftmost square factor.

    Returns ``{target: (weight, sources)}`` with 1-based rows, where ``weight``
    is the coefficient the rebuilt equation puts on the target row.
    """
    if pattern.L_s == 0:
        raise InvalidPolicyError("SIC needs at least one square factor")
    p = pattern.square_designs[0].p.to_array()
    m = p.shape[0]
    detected: set[int] = set()
    reformed: dict[int, tuple[int, int]] = {}

    def check(row: int, what: str) -> None:
        if not 1 <= row <= m:
            raise InvalidPolicyError(f"{what} row {row} does not exist (factor has {m} rows)")

    for n, step in enumerate(policy.steps, start=1):
        for row in step.detect:
            check(row, f"step {n} detect")
            if row in detected:
                raise InvalidPolicyError(f"step {n} detects row {row} twice")
            detected.add(row)
        for r in step.reform:
            check(r.target, f"step {n} reform target")
            for row in r.sources:
                check(row, f"step {n} reform source")
            for row in r.subtract:
                check(row, f"step {n} reform subtract")
                if row not in detected:
                    raise InvalidPolicyError(f"step {n} subtracts row {row} before it is detected")
            if not r.sources:
                raise InvalidPolicyError(f"step {n} reform of row {r.target} has no source rows")
            if r.target in detected or r.target in reformed:
                raise InvalidPolicyError(f"step {n} reforms row {r.target}, which is already settled")
            summed = p[[row - 1 for row in r.sources]].sum(axis=0)
            if summed[r.target - 1] == 0:
                raise InvalidPolicyError(f"step {n}: source rows do not contain row {r.target}")
            leftover = {b + 1 for b in np.flatnonzero(summed)} - {r.target} - set(r.subtract)
            if leftover:
                raise InvalidPolicyError(
                    f"step {n}: rows {sorted(leftover)} are neither subtracted nor the target"
                )
            reformed[r.target] = (int(summed[r.target - 1]), len(r.sources))
    return reformed


def sic_gain_table(pattern: KroneckerPattern, policy: SicPolicy) -> tuple[Fraction, ...]:
    """Per square super-group gains after the policy's rebuilt equations."""
    if policy.is_empty:
        return gain_tree(pattern.square_designs)
    reformed = validate_sic_policy(policy, pattern)
    first, rest = pattern.square_designs[0], pattern.square_designs[1:]
    rest_gains = gain_tree(rest)
    table = []
    for a in range(first.m):
        if a + 1 in reformed:
            weight, sources = reformed[a + 1]
            g = Fraction(weight * weight, sources)
        else:
            g = first.gains[a]
        table.extend(g * h for h in rest_gains)
    return tuple(table)


def _rect_matrix(pattern: KroneckerPattern) -> np.ndarray:
    if pattern.L_r == 0:
        return np.ones((1, 1))
    return expand_factors(pattern.rect_factors).to_array(float)


def super_group_users(pattern: KroneckerPattern, s: int) -> tuple[int, ...]:
    """1-based users carried by 1-based square super-group ``s``."""
    return tuple(s + c * pattern.M_s for c in range(pattern.K_r))


def phase_one_batch(y: np.ndarray, pattern: KroneckerPattern) -> np.ndarray:
    """(n, M) observations -> (n, M_s, M_r) normalized super-group observations."""
    t = y.reshape(y.shape[0], pattern.M_r, pattern.M_s)
    combined = combine(t, pattern.square_designs)
    scales = np.array(path_scales(pattern.square_designs), dtype=float)
    return np.swapaxes(combined / scales, 1, 2)


def phase_one(y, pattern: KroneckerPattern) -> tuple[PhaseOneOutput, ...]:
    y = np.asarray(y)
    obs = phase_one_batch(y[None, :], pattern)[0]
    gains = gain_tree(pattern.square_designs)
    radices = tuple(d.m for d in pattern.square_designs)
    out = []
    for s in range(pattern.M_s):
        digits = mixed_radix_digits(s + 1, radices)
        psi, stride = 1, 1
        for d, m in zip(digits, radices):
            psi += (d - 1) * stride
            stride *= m
        out.append(PhaseOneOutput(psi, s + 1, obs[s], gains[s], super_group_users(pattern, s + 1)))
    return tuple(out)


class SubsystemSolver:
    """Phase II on a stack of (n, M_r) normalized observations."""

    def __init__(
        self, pattern: KroneckerPattern, base: Constellation, fallback: str | None = None, cap: int = MUD_SEARCH_CAP
    ):
        self.base = base
        self.chain = RectangularChain(pattern.rect_factors, base, cap, fallback) if pattern.L_r else None

    def __call__(self, obs: np.ndarray, noise_variance: float, strict: bool = False) -> ChainResult:
        if self.chain is not None:
            return self.chain.run(obs, noise_variance, strict=strict)
        idx = self.base.nearest_index(obs)
        flags = np.zeros(idx.shape, dtype=bool)
        return ChainResult(idx, flags, flags.copy())


def _to_user_order(arr: np.ndarray, pattern: KroneckerPattern) -> np.ndarray:
    # (n, M_s, K_r) -> (n, K) with user c * M_s + s
    return np.swapaxes(arr, 1, 2).reshape(arr.shape[0], pattern.K)


def detect_general_batch(
    y: np.ndarray,
    pattern: KroneckerPattern,
    base: Constellation,
    noise_variance: float,
    fallback: str | None = None,
    cap: int = MUD_SEARCH_CAP,
    solver: SubsystemSolver | None = None,
) -> ChainResult:
    y = np.atleast_2d(np.asarray(y))
    n = y.shape[0]
    solver = solver or SubsystemSolver(pattern, base, fallback, cap)
    if pattern.L_s == 0:
        return solver(y, noise_variance)
    obs = phase_one_batch(y, pattern)
    res = solver(obs.reshape(n * pattern.M_s, pattern.M_r), noise_variance)
    shape = (n, pattern.M_s, pattern.K_r)
    return ChainResult(
        _to_user_order(res.indices.reshape(shape), pattern),
        _to_user_order(res.ambiguous.reshape(shape), pattern),
        _to_user_order(res.infeasible.reshape(shape), pattern),
    )


def _user_gains(pattern: KroneckerPattern, per_group: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return tuple(per_group[u % pattern.M_s] for u in range(pattern.K))


def detect_general(
    y,
    pattern: KroneckerPattern,
    base: Constellation,
    noise_variance: float,
    fallback: str | None = None,
    cap: int = MUD_SEARCH_CAP,
) -> DetectionReport:
    y = np.asarray(y)
    solver = SubsystemSolver(pattern, base, fallback, cap)
    if pattern.L_s and pattern.L_r:
        obs = phase_one_batch(y[None, :], pattern)[0]
        for s in range(pattern.M_s):
            try:
                solver(obs[s][None, :], noise_variance, strict=True)
            except NoiselessInfeasibleError as e:
                err = NoiselessInfeasibleError(f"{e} in square super-group {s + 1}")
                err.level, err.path = e.level, e.path
                raise err from None
    elif pattern.L_r:
        solver(y[None, :], noise_variance, strict=True)
    ops = op_counts(pattern, base=base)
    res = detect_general_batch(y[None, :], pattern, base, noise_variance, solver=solver)
    return DetectionReport(
        symbols=base.array()[res.indices[0]],
        gains=_user_gains(pattern, gain_tree(pattern.square_designs)),
        ambiguous=bool(res.ambiguous[0].any()),
        adds=ops.adds,
        muls=ops.muls,
        latency=latency_worst_case(pattern, base=base),
    )


def detect_with_sic_batch(
    y: np.ndarray,
    pattern: KroneckerPattern,
    base: Constellation,
    noise_variance: float,
    policy: SicPolicy,
    genie: np.ndarray | None = None,
    fallback: str | None = None,
    cap: int = MUD_SEARCH_CAP,
    solver: SubsystemSolver | None = None,
) -> ChainResult:
    """SIC detection on a batch; ``genie`` holds true symbol values to cancel with."""
    y = np.atleast_2d(np.asarray(y))
    solver = solver or SubsystemSolver(pattern, base, fallback, cap)
    if policy.is_empty:
        return detect_general_batch(y, pattern, base, noise_variance, solver=solver)
    validate_sic_policy(policy, pattern)
    n = y.shape[0]
    first, rest = pattern.square_designs[0], pattern.square_designs[1:]
    m1, m_rest = first.m, pattern.M_s // first.m
    raw = combine(y.reshape(n, pattern.M_r, m1, m_rest), rest)  # (n, M_r, m1, M_rest)
    w_rest = np.array(path_scales(rest), dtype=float)
    f = _rect_matrix(pattern)
    p1 = first.p.to_array()
    alpha1 = first.alpha_array()
    points = base.array()

    equations = {
        a: _Equation(np.tensordot(alpha1[a], raw, axes=([0], [2])), first.weights[a])
        for a in range(m1)
    }
    decided: dict[int, _RowDecision] = {}

    def true_values(a: int) -> np.ndarray:
        groups = genie.reshape(n, pattern.K_r, pattern.M_s)[:, :, a * m_rest:(a + 1) * m_rest]
        return np.swapaxes(groups, 1, 2)  # (n, M_rest, K_r)

    def detect_row(a: int) -> None:
        eq = equations[a]
        obs = eq.numerator / (eq.weight * w_rest)  # (n, M_r, M_rest)
        obs = np.swapaxes(obs, 1, 2).reshape(n * m_rest, pattern.M_r)
        res = solver(obs, noise_variance)
        shape = (n, m_rest, pattern.K_r)
        unreliable = res.unreliable.reshape(shape)
        ambiguous = res.ambiguous.reshape(shape)
        for b in eq.depends:
            upstream = decided[b].unreliable.any(axis=2, keepdims=True)
            unreliable = unreliable | upstream
        decided[a] = _RowDecision(res.indices.reshape(shape), unreliable, ambiguous)

    for step in policy.steps:
        for row in step.detect:
            detect_row(row - 1)
        for r in step.reform:
            sources = [row - 1 for row in r.sources]
            coeff = p1[sources].sum(axis=0)
            numerator = raw[:, :, sources, :].sum(axis=2)
            for row in r.subtract:
                b = row - 1
                values = true_values(b) if genie is not None else points[decided[b].indices]
                contribution = np.swapaxes(values @ f.T, 1, 2) * w_rest  # (n, M_r, M_rest)
                numerator = numerator - coeff[b] * contribution
            equations[r.target - 1] = _Equation(
                numerator, int(coeff[r.target - 1]), tuple(row - 1 for row in r.subtract)
            )
    for a in range(m1):
        if a not in decided:
            detect_row(a)

    def assemble(attr: str) -> np.ndarray:
        stacked = np.concatenate([getattr(decided[a], attr) for a in range(m1)], axis=1)
        return _to_user_order(stacked, pattern)

    unreliable = assemble("unreliable")
    ambiguous = assemble("ambiguous")
    return ChainResult(assemble("indices"), ambiguous, unreliable & ~ambiguous)


def detect_with_sic(
    y,
    pattern: KroneckerPattern,
    base: Constellation,
    noise_variance: float,
    policy: SicPolicy,
    genie_symbols=None,
    fallback: str | None = None,
    cap: int = MUD_SEARCH_CAP,
) -> SicDetection:
    y = np.asarray(y)
    genie = None if genie_symbols is None else np.asarray(genie_symbols)[None, :]
    gains = sic_gain_table(pattern, policy)
    res = detect_with_sic_batch(y[None, :], pattern, base, noise_variance, policy, genie, fallback, cap)
    return SicDetection(
        symbols=base.array()[res.indices[0]],
        gains=gains,
        ambiguous=bool(res.ambiguous[0].any()),
    )
