"""Monte-Carlo BER simulation over the Gaussian multiple-access channel and fading variants.

SNR convention: rho = P_x / sigma^2 with sigma^2 the complex-baseband noise
power per RE, so every real dimension carries sigma^2 / 2.  For BPSK after a
combining gain gamma the bit error rate is Q(sqrt(2 * gamma * rho)).

Trials are cut into fixed-size chunks.  Chunk c at SNR index s draws from a
Philox generator keyed by (seed, s, c), so the worker count never changes a
result.
"""
from __future__ import annotations

import hashlib
import math
import os
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import psutil
from scipy.stats import binomtest

from kronoma.errors import InfeasibleError, ValidationError, ZeroGainError
from kronoma.gendetect import (
    SIC_MODES,
    SicPolicy,
    SubsystemSolver,
    detect_general_batch,
    detect_with_sic_batch,
    phase_one_batch,
)
from kronoma.patterns import KroneckerPattern, expand
from kronoma.rectdetect import MUD_SEARCH_CAP, BruteForceMud, ChainResult, Constellation, bpsk

DEFAULT_TRIALS = 10**6
CHUNK_SIZE = 4096
THREADS_ENV = "KRON_NOMA_THREADS"
FADING_KINDS = ("none", "downlink", "uplink")


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: $KRON_NOMA_THREADS, then ``requested``, then physical cores."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    if requested is not None:
        if requested < 1:
            raise ValidationError(f"--threads must be positive, got {requested}")
        return requested
    return psutil.cpu_count(logical=False) or 1


@dataclass(frozen=True, slots=True)
class Fading:
    kind: str = "none"
    uplink: tuple[float, ...] = ()
    downlink: dict[int, tuple[float, ...]] = field(default_factory=dict, hash=False)

    def __post_init__(self) -> None:
        if self.kind not in FADING_KINDS:
            raise ValidationError(f"unknown fading {self.kind!r}, expected one of {FADING_KINDS}")


NO_FADING = Fading()


@dataclass(frozen=True, slots=True)
class DownlinkSystem:
    observations: np.ndarray
    noise_variances: np.ndarray


def apply_downlink_fading(y, h, noise_variance: float) -> DownlinkSystem:
    """Divide RE m by h_m; its noise variance becomes sigma^2 / h_m^2."""
    h = np.asarray(h)
    if np.any(h == 0):
        raise ZeroGainError(f"zero channel gain on RE(s) {list(np.flatnonzero(h == 0) + 1)}")
    return DownlinkSystem(np.asarray(y) / h, noise_variance / np.abs(h) ** 2)


def apply_uplink_fading(x, h) -> np.ndarray:
    h = np.asarray(h)
    if np.any(h == 0):
        raise ZeroGainError(f"user(s) {list(np.flatnonzero(h == 0) + 1)} have zero gain and cannot be detected")
    return np.asarray(x) * h


@dataclass(frozen=True, slots=True)
class SimConfig:
    pattern: KroneckerPattern
    snr_db: tuple[float, ...]
    base: Constellation = field(default_factory=bpsk)
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    sic_policy: SicPolicy | None = None
    sic_mode: str = "imperfect"
    fading: Fading = NO_FADING
    tracked_users: tuple[int, ...] = ()
    chunk_size: int = CHUNK_SIZE
    workers: int | None = None
    fallback: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if not self.snr_db:
            raise ValidationError("SNR grid is empty")
        if any(math.isnan(s) or s == -math.inf for s in self.snr_db):
            raise ValidationError("SNR grid must be finite (+inf is the noiseless sentinel)")
        if self.trials < 1:
            raise ValidationError(f"trials must be at least 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if self.sic_mode not in SIC_MODES:
            raise ValidationError(f"unknown SIC mode {self.sic_mode!r}, expected one of {SIC_MODES}")
        if self.chunk_size < 1:
            raise ValidationError("chunk size must be positive")
        users = self.tracked_users or tuple(range(1, self.pattern.K + 1))
        bad = [u for u in users if not 1 <= u <= self.pattern.K]
        if bad:
            raise ValidationError(f"tracked users {bad} outside 1..{self.pattern.K}")
        object.__setattr__(self, "tracked_users", tuple(users))
        if self.fading.kind == "uplink" and len(self.fading.uplink) != self.pattern.K:
            raise ValidationError(f"uplink fading needs {self.pattern.K} user gains, got {len(self.fading.uplink)}")
        if self.fading.kind == "downlink":
            for user, gains in self.fading.downlink.items():
                if len(gains) != self.pattern.M:
                    raise ValidationError(f"downlink gains of user {user} need {self.pattern.M} entries")


@dataclass(frozen=True, slots=True)
class BerPoint:
    user: int
    snr_db: float
    trials: int
    errors: int
    bits: int
    ber: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True, slots=True)
class BerResult:
    points: tuple[BerPoint, ...]
    scheme: str = "no-sic"
    noise_digest: str = ""

    def curve(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        pts = [p for p in self.points if p.user == user]
        return np.array([p.snr_db for p in pts]), np.array([p.ber for p in pts])

    def point(self, user: int, snr_db: float) -> BerPoint:
        return next(p for p in self.points if p.user == user and p.snr_db == snr_db)


def _noise_std(base: Constellation, snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    power = float(np.mean(np.abs(base.array()) ** 2))
    return math.sqrt(power / 10 ** (snr_db / 10) / 2)


def _draw_noise(rng: np.random.Generator, shape: tuple[int, ...], complex_noise: bool, std: float) -> np.ndarray:
    noise = rng.standard_normal(shape)
    if complex_noise:
        noise = noise + 1j * rng.standard_normal(shape)
    return noise * std


Detector = Callable[[np.ndarray, np.ndarray, float], ChainResult]


class _Simulation:
    def __init__(self, cfg: SimConfig, detectors: Sequence[Detector]):
        self.cfg = cfg
        self.detectors = list(detectors)
        self.g = expand(cfg.pattern).to_array(float)
        self.points = cfg.base.array()
        self.bit_table = cfg.base.bit_error_table()
        self.bps = cfg.base.bits_per_symbol
        self.users = np.array(cfg.tracked_users) - 1

    def _count(self, sym: np.ndarray, res: ChainResult, cols: np.ndarray) -> np.ndarray:
        errs = self.bit_table[sym[:, cols], res.indices[:, cols]]
        errs = np.where(res.unreliable[:, cols], self.bps, errs)
        return errs.sum(axis=0)

    def chunk(self, task: tuple[int, int, int]) -> tuple[np.ndarray, bytes]:
        snr_index, chunk_index, n = task
        cfg = self.cfg
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, snr_index, chunk_index])))
        sym = rng.integers(0, cfg.base.size, size=(n, cfg.pattern.K))
        x = self.points[sym]
        std = _noise_std(cfg.base, cfg.snr_db[snr_index])
        sigma2 = 2 * std * std
        cplx = cfg.base.is_complex
        errors = np.zeros((len(self.detectors), len(self.users)), dtype=np.int64)
        digest = hashlib.sha256()
        if cfg.fading.kind == "downlink":
            clean = x @ self.g.T
            for pos, u in enumerate(self.users):
                noise = _draw_noise(rng, clean.shape, cplx, std)
                digest.update(noise.tobytes())
                h = np.array(cfg.fading.downlink.get(int(u) + 1, (1.0,) * cfg.pattern.M))
                system = apply_downlink_fading(clean * h + noise, h, sigma2)
                worst = float(np.max(system.noise_variances))
                for d, detector in enumerate(self.detectors):
                    res = detector(system.observations, x, worst)
                    errors[d, pos] = self._count(sym, res, np.array([u]))[0]
            return errors, digest.digest()
        if cfg.fading.kind == "uplink":
            x_eff = apply_uplink_fading(x, np.array(cfg.fading.uplink))
        else:
            x_eff = x
        noise = _draw_noise(rng, (n, cfg.pattern.M), cplx, std)
        digest.update(noise.tobytes())
        y = x_eff @ self.g.T + noise
        for d, detector in enumerate(self.detectors):
            errors[d] = self._count(sym, detector(y, x, sigma2), self.users)
        return errors, digest.digest()

    def run(self, labels: Sequence[str], verbose: bool = False) -> list[BerResult]:
        def log(msg: str) -> None:
            if verbose:
                print(msg, file=sys.stderr)

        cfg = self.cfg
        tasks = []
        for s in range(len(cfg.snr_db)):
            for c, start in enumerate(range(0, cfg.trials, cfg.chunk_size)):
                tasks.append((s, c, min(cfg.chunk_size, cfg.trials - start)))
        workers = resolve_workers(cfg.workers)
        log(f"Simulating {len(tasks)} chunks on {workers} worker(s)")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(self.chunk, tasks))
        digest = hashlib.sha256()
        totals = np.zeros((len(cfg.snr_db), len(self.detectors), len(self.users)), dtype=np.int64)
        for (s, _, _), (errs, chunk_digest) in zip(tasks, outputs):
            totals[s] += errs
            digest.update(chunk_digest)
        bits = cfg.trials * self.bps
        results = []
        for d, label in enumerate(labels):
            points = []
            for pos, u in enumerate(cfg.tracked_users):
                for s, snr in enumerate(cfg.snr_db):
                    k = int(totals[s, d, pos])
                    ci = binomtest(k, bits).proportion_ci(confidence_level=0.95, method="exact")
                    points.append(BerPoint(u, snr, cfg.trials, k, bits, k / bits, float(ci.low), float(ci.high)))
                    log(f"[{label}] user {u} @ {snr:g} dB: {k}/{bits} bit errors")
            results.append(BerResult(tuple(points), label, digest.hexdigest()))
        return results


def _uplink_detector(cfg: SimConfig) -> Detector:
    pattern, base = cfg.pattern, cfg.base
    if pattern.L_r > 1:
        raise InfeasibleError("uplink fading is simulated only for patterns with at most one rectangular factor")
    if cfg.sic_policy is not None and not cfg.sic_policy.is_empty:
        raise InfeasibleError("SIC is not combined with uplink fading")
    h = np.array(cfg.fading.uplink)
    points = base.array()
    f = pattern.rect_factors[0].to_array(float) if pattern.L_r else np.ones((1, 1))
    groups = [np.array([s + c * pattern.M_s for c in range(pattern.K_r)]) for s in range(pattern.M_s)]
    muds = [BruteForceMud(f * h[users][None, :], points) for users in groups]

    def detect(y: np.ndarray, x: np.ndarray, noise_variance: float) -> ChainResult:
        n = y.shape[0]
        obs = phase_one_batch(y, pattern) if pattern.L_s else y[:, None, :]
        out = np.zeros((n, pattern.K), dtype=np.int64)
        amb = np.zeros((n, pattern.K), dtype=bool)
        for s, users in enumerate(groups):
            res = muds[s].solve(obs[:, s, :], noise_variance == 0)
            out[:, users] = res.indices
            amb[:, users] = res.ambiguous[:, None] | res.infeasible[:, None]
        return ChainResult(out, amb, np.zeros_like(amb))

    return detect


def _detectors(cfg: SimConfig, with_sic: bool) -> tuple[list[Detector], list[str]]:
    if cfg.fading.kind == "uplink":
        return [_uplink_detector(cfg)], ["no-sic"]
    solver = SubsystemSolver(cfg.pattern, cfg.base, cfg.fallback, cap=MUD_SEARCH_CAP)
    genie = cfg.sic_mode == "genie"

    def plain(y: np.ndarray, x: np.ndarray, noise_variance: float) -> ChainResult:
        return detect_general_batch(y, cfg.pattern, cfg.base, noise_variance, solver=solver)

    def sic(y: np.ndarray, x: np.ndarray, noise_variance: float) -> ChainResult:
        return detect_with_sic_batch(
            y, cfg.pattern, cfg.base, noise_variance, cfg.sic_policy or SicPolicy(),
            genie=x if genie else None, solver=solver,
        )

    sic_label = f"sic-{cfg.sic_mode}"
    if with_sic:
        return [plain, sic], ["no-sic", sic_label]
    if cfg.sic_policy is not None:
        return [sic], [sic_label]
    return [plain], ["no-sic"]


def simulate_ber(cfg: SimConfig, verbose: bool = False) -> BerResult:
    detectors, labels = _detectors(cfg, with_sic=False)
    return _Simulation(cfg, detectors).run(labels, verbose)[0]


def simulate_ber_sic(cfg: SimConfig, verbose: bool = False) -> tuple[BerResult, BerResult]:
    """Paired runs sharing every noise draw: (without SIC, with SIC)."""
    if cfg.fading.kind == "uplink":
        raise InfeasibleError("SIC is not combined with uplink fading")
    detectors, labels = _detectors(cfg, with_sic=True)
    plain, sic = _Simulation(cfg, detectors).run(labels, verbose)
    return plain, sic


def snr_shift_at_ber(a: BerResult, b: BerResult, user: int, target_ber: float = 1e-3) -> float | None:
    """SNR curve ``a`` needs minus what ``b`` needs to reach ``target_ber``.

    Interpolates linearly in log10(BER); None when either curve does not cross the target.
    """

    def crossing(result: BerResult) -> float | None:
        snr, ber = result.curve(user)
        order = np.argsort(snr)
        snr, ber = snr[order], ber[order]
        finite = np.isfinite(snr) & (ber > 0)
        snr, logs = snr[finite], np.log10(ber[finite])
        goal = math.log10(target_ber)
        for i in range(len(snr) - 1):
            if logs[i] >= goal >= logs[i + 1] and logs[i] != logs[i + 1]:
                frac = (logs[i] - goal) / (logs[i] - logs[i + 1])
                return float(snr[i] + frac * (snr[i + 1] - snr[i]))
        return None

    sa, sb = crossing(a), crossing(b)
    if sa is None or sb is None:
        return None
    return sa - sb


