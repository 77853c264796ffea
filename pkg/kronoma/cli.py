"""kronoma command-line front end.

Every subcommand reads pattern files (or ``@fixture`` names), calls into the
library and writes JSON, CSV or plain text.  Exit codes: 0 success,
2 validation error, 3 infeasible configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys

import numpy as np

from kronoma import __version__
from kronoma.channelsim import (
    DEFAULT_TRIALS,
    Fading,
    SimConfig,
    resolve_workers,
    simulate_ber,
    simulate_ber_sic,
)
from kronoma.designer import CRITERIA, ENUMERATION_CAP, select_optimal_square
from kronoma.errors import EXIT_VALIDATION, KronomaError, ValidationError
from kronoma.gendetect import SIC_MODES, detect_general, detect_with_sic, sic_gain_table
from kronoma.metrics import (
    CostModel,
    RateQuery,
    Table1Params,
    latency_worst_case,
    map_search_space,
    oma_rate,
    op_counts,
    pdma_capacity,
    sum_rate_general,
    sum_rate_with_sic,
    table1_estimates,
)
from kronoma.patternfile import load_pattern, load_raw_factors, load_sic_policy
from kronoma.patterns import expand, factorized_search_space, search_space_size, validate_factor
from kronoma.rectdetect import FALLBACKS, MODULATIONS

SUMRATE_HEADER = ["snr_db", "rate_bits_per_re", "scheme_label"]
BER_HEADER = ["user", "snr_db", "trials", "errors", "ber", "ci_lo", "ci_hi"]

EPILOG = """
Patterns are JSON files {"rect": [F_1, ...], "square": [P_1, ...]} with 0/1 rows.
Shipped fixtures are addressed as @name:
  @p3p4       P(3x3) x P(4x4), twelve users on twelve REs
  @ones_f2f2  [1 1] x F(2x3) x F(2x3), eighteen users on four REs
  @pdma4x8    4x8 PDMA matrix with d_f = 4
  @ones_p3    [1 1] x P(3x3)
  @p3p4_sic   SIC policy for @p3p4

SNR grids: a:b:step (inclusive), a comma list, or a single value; inf is noiseless.

Environment:
  KRON_NOMA_THREADS  overrides --threads
"""


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def parse_snr_grid(text: str) -> tuple[float, ...]:
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValidationError(f"bad SNR grid {text!r}: need a <= b and step > 0")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 9) for i in range(count))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"bad SNR grid {text!r}") from None


def parse_factor_dims(text: str) -> list[tuple[int, int]]:
    dims = []
    for item in text.split(","):
        try:
            m, k = item.lower().split("x")
            dims.append((int(m), int(k)))
        except ValueError:
            raise ValidationError(f"bad factor size {item!r}, expected MxK") from None
    return dims


def parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"bad {what} list {text!r}") from None


def parse_float_list(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"bad {what} list {text!r}") from None


def parse_observations(text: str) -> np.ndarray:
    text = text.strip()
    try:
        if text.startswith("["):
            values = [complex(*v) if isinstance(v, list) else complex(v) for v in json.loads(text)]
        else:
            values = [complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip()]
    except (TypeError, ValueError):
        raise ValidationError(f"bad observation list {text!r}") from None
    arr = np.array(values, dtype=complex)
    if np.all(arr.imag == 0):
        return arr.real
    return arr


def _format_symbol(v):
    v = complex(v)
    return v.real if v.imag == 0 else [v.real, v.imag]


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _pattern_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pattern", required=True, help="pattern JSON file or @fixture")


def _mod_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mod", default="bpsk", choices=sorted(MODULATIONS), help="modulation (default: bpsk)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_design(args) -> int:
    design = select_optimal_square(
        args.m, args.criterion, cap=args.cap, workers=resolve_workers(args.threads), verbose=args.verbose
    )
    doc = dict(design.to_json(), criterion=args.criterion)
    _write(json.dumps(doc) + "\n", args.out)
    width = max(len(str(v)) for row in design.alpha for v in row)
    print(f"{'P':<{3 * design.m}}  {'alpha':<{(width + 1) * design.m}}  gain")
    for prow, arow, g in zip(design.p.to_rows(), design.alpha, design.gains):
        p_txt = " ".join(str(v) for v in prow)
        a_txt = " ".join(f"{v:>{width}}" for v in arow)
        print(f"{p_txt:<{3 * design.m}}  {a_txt:<{(width + 1) * design.m}}  {g}")
    return 0


def cmd_validate(args) -> int:
    factors = load_raw_factors(args.pattern)
    ok = True
    for n, f in enumerate(factors, start=1):
        report = validate_factor(f)
        ok = ok and report.valid
        print(f"factor {n} ({f.rows}x{f.cols}): {report.describe()}")
    if not ok:
        return EXIT_VALIDATION
    pattern = load_pattern(args.pattern)
    print(f"pattern: M={pattern.M} K={pattern.K} overload={pattern.beta} L_r={pattern.L_r} L_s={pattern.L_s}")
    return 0


def cmd_expand(args) -> int:
    g = expand(load_pattern(args.pattern))
    _write(json.dumps(g.to_rows()) + "\n", args.out)
    return 0


def cmd_sumrate(args) -> int:
    pattern = load_pattern(args.pattern)
    grid = parse_snr_grid(args.snr_db)
    if any(math.isinf(s) for s in grid):
        raise ValidationError("sum rate needs finite SNRs")
    gains = sic_gain_table(pattern, load_sic_policy(args.sic)) if args.sic else None
    g = expand(pattern) if args.baselines else None
    rows = []
    for snr in grid:
        rho = 10 ** (snr / 10)
        rows.append([repr(snr), repr(sum_rate_general(RateQuery(pattern, rho))), args.label])
        if gains is not None:
            rows.append([repr(snr), repr(sum_rate_with_sic(RateQuery(pattern, rho, gains))), f"{args.label}+sic"])
        if g is not None:
            rows.append([repr(snr), repr(pdma_capacity(g, rho)), "pdma"])
            rows.append([repr(snr), repr(oma_rate(rho)), "oma"])
    _write(_csv(SUMRATE_HEADER, rows), args.out)
    return 0


def cmd_latency(args) -> int:
    pattern = load_pattern(args.pattern)
    value = latency_worst_case(pattern, CostModel(t_add=args.t_add), MODULATIONS[args.mod]())
    print(f"{value:g}")
    return 0


def cmd_complexity(args) -> int:
    pattern = load_pattern(args.pattern)
    base = MODULATIONS[args.mod]()
    if args.table1:
        params = Table1Params(args.t_in, args.t_out, args.df, args.dg, base.size)
        rows = table1_estimates(pattern, params)
        width = max(len(r.scheme) for r in rows)
        print(f"{'scheme':<{width}}  {'adds':>14}  {'muls':>14}")
        for r in rows:
            print(f"{r.scheme:<{width}}  {r.adds:>14.6g}  {r.muls:>14.6g}")
        return 0
    ops = op_counts(pattern, base=base)
    print(f"adds: {ops.adds}")
    print(f"muls: {ops.muls}")
    if pattern.L_s == 0:
        space = map_search_space(pattern, base)
        print(f"search space: {space.recursive_count} (direct MAP: {space.direct_count})")
    return 0


def cmd_searchspace(args) -> int:
    if args.unfactored:
        m, k = args.unfactored
        print(search_space_size(m, k))
    elif args.factors:
        print(factorized_search_space(parse_factor_dims(args.factors)))
    else:
        raise ValidationError("searchspace needs --factors or --unfactored")
    return 0


def cmd_detect(args) -> int:
    pattern = load_pattern(args.pattern)
    if args.y_file:
        with open(args.y_file, encoding="utf-8") as fh:
            y = parse_observations(fh.read())
    elif args.y:
        y = parse_observations(args.y)
    else:
        raise ValidationError("detect needs --y or --y-file")
    if y.shape[0] != pattern.M:
        raise ValidationError(f"--y has {y.shape[0]} values, pattern has M={pattern.M}")
    base = MODULATIONS[args.mod]()
    if args.sic:
        res = detect_with_sic(y, pattern, base, args.noise_var, load_sic_policy(args.sic), fallback=args.fallback)
        per_group = res.gains
        gains = [str(per_group[u % pattern.M_s]) for u in range(pattern.K)]
        symbols, ambiguous = res.symbols, res.ambiguous
        extra = {}
    else:
        report = detect_general(y, pattern, base, args.noise_var, fallback=args.fallback)
        gains = [str(g) for g in report.gains]
        symbols, ambiguous = report.symbols, report.ambiguous
        extra = {"adds": report.adds, "muls": report.muls, "latency": report.latency}
    doc = {"symbols": [_format_symbol(v) for v in symbols], "ambiguous": ambiguous, "gains": gains, **extra}
    print(json.dumps(doc))
    return 0


def _fading(args) -> Fading:
    if args.uplink and args.downlink:
        raise ValidationError("--uplink and --downlink are exclusive")
    if args.uplink:
        return Fading("uplink", uplink=parse_float_list(args.uplink, "uplink gain"))
    if args.downlink:
        gains = {}
        for item in args.downlink:
            try:
                user, values = item.split("=", 1)
                gains[int(user)] = parse_float_list(values, "downlink gain")
            except ValueError:
                raise ValidationError(f"bad --downlink {item!r}, expected USER=h1,h2,...") from None
        return Fading("downlink", downlink=gains)
    return Fading()


def ber_rows(result, with_scheme: bool) -> list[list[str]]:
    rows = []
    for p in result.points:
        row = [str(p.user), repr(p.snr_db), str(p.trials), str(p.errors), repr(p.ber), repr(p.ci_lo), repr(p.ci_hi)]
        if with_scheme:
            row.append(result.scheme)
        rows.append(row)
    return rows


def cmd_ber(args) -> int:
    pattern = load_pattern(args.pattern)
    users = parse_int_list(args.users, "user") if args.users else ()
    cfg = SimConfig(
        pattern=pattern,
        snr_db=parse_snr_grid(args.snr_db),
        base=MODULATIONS[args.mod](),
        trials=args.trials,
        seed=args.seed,
        sic_policy=load_sic_policy(args.sic) if args.sic else None,
        sic_mode=args.sic_mode,
        fading=_fading(args),
        tracked_users=users,
        workers=args.threads,
        fallback=args.fallback,
    )
    if cfg.sic_policy is not None:
        plain, sic = simulate_ber_sic(cfg, verbose=args.verbose)
        text = _csv(BER_HEADER + ["scheme"], ber_rows(plain, True) + ber_rows(sic, True))
    else:
        text = _csv(BER_HEADER, ber_rows(simulate_ber(cfg, verbose=args.verbose), False))
    _write(text, args.out)
    return 0


COMMANDS = {
    "design": cmd_design,
    "validate": cmd_validate,
    "expand": cmd_expand,
    "sumrate": cmd_sumrate,
    "latency": cmd_latency,
    "complexity": cmd_complexity,
    "searchspace": cmd_searchspace,
    "detect": cmd_detect,
    "ber": cmd_ber,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kronoma",
        description="Kronecker-factorized code-domain NOMA: design, detection, rates and BER.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="verbose output")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="pick an m x m factor and its combining matrix")
    p.add_argument("--m", type=int, required=True, help="factor size")
    p.add_argument("--criterion", default="minmax", help=f"one of {', '.join(CRITERIA)} (default: minmax)")
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP, help="max candidates to enumerate")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--out", help="write the JSON here instead of stdout")

    p = sub.add_parser("validate", parents=[common], help="check every factor of a pattern")
    _pattern_args(p)

    p = sub.add_parser("expand", parents=[common], help="print the expanded pattern matrix")
    _pattern_args(p)
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("sumrate", parents=[common], help="sum rate per RE over an SNR grid (CSV)")
    _pattern_args(p)
    p.add_argument("--snr-db", required=True, help="SNR grid in dB")
    p.add_argument("--sic", help="SIC policy JSON file or @fixture")
    p.add_argument("--baselines", action="store_true", help="add PDMA-over-G and OMA rows")
    p.add_argument("--label", default="kronecker", help="scheme label (default: kronecker)")
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("latency", parents=[common], help="worst-case detection latency")
    _pattern_args(p)
    _mod_arg(p)
    p.add_argument("--t-add", type=float, default=1.0, help="time units per addition (default: 1)")

    p = sub.add_parser("complexity", parents=[common], help="op counts, search space or detector comparison rows")
    _pattern_args(p)
    _mod_arg(p)
    p.add_argument("--table1", action="store_true", help="print order-of-magnitude detector comparison")
    p.add_argument("--t-in", type=int, default=1, help="inner BP iterations (default: 1)")
    p.add_argument("--t-out", type=int, default=1, help="outer IDD iterations (default: 1)")
    p.add_argument("--df", type=int, default=None, help="RE degree of F (default: from pattern)")
    p.add_argument("--dg", type=int, default=None, help="RE degree of G (default: from pattern)")

    p = sub.add_parser("searchspace", parents=[common], help="count candidate pattern matrices")
    p.add_argument("--factors", help="factor sizes, e.g. 2x3,3x3")
    p.add_argument("--unfactored", nargs=2, type=int, metavar=("M", "K"), help="unfactored M x K count")

    p = sub.add_parser("detect", parents=[common], help="detect one received vector")
    _pattern_args(p)
    _mod_arg(p)
    p.add_argument("--y", help="comma list of observations (a+bj allowed) or a JSON list")
    p.add_argument("--y-file", help="file holding the observations")
    p.add_argument("--noise-var", type=float, default=0.0, help="noise variance; 0 is noiseless (default)")
    p.add_argument("--sic", help="SIC policy JSON file or @fixture")
    p.add_argument("--fallback", choices=FALLBACKS, default=None, help="answer infeasible noiseless groups anyway")

    p = sub.add_parser("ber", parents=[common], help="Monte-Carlo BER per user (CSV)")
    _pattern_args(p)
    _mod_arg(p)
    p.add_argument("--snr-db", required=True, help="SNR grid in dB")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help=f"trials per SNR (default: {DEFAULT_TRIALS})")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--users", help="1-based users to track, e.g. 1,5,9 (default: all)")
    p.add_argument("--sic", help="SIC policy; reports runs with and without it")
    p.add_argument("--sic-mode", default="imperfect", choices=SIC_MODES)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: physical cores)")
    p.add_argument("--downlink", action="append", metavar="USER=h1,...", help="per-RE gains seen by USER")
    p.add_argument("--uplink", metavar="h1,...", help="per-user gains")
    p.add_argument("--fallback", choices=FALLBACKS, default=None)
    p.add_argument("--out", help="output CSV (default: stdout)")
    return ap


# flags whose value may start with a minus sign, e.g. --snr-db -20:0:1
DASHED_VALUE_FLAGS = ("--snr-db", "--y", "--uplink")
NEGATIVE_VALUE = re.compile(r"-(\d|\.\d|inf)", re.IGNORECASE)


def glue_dashed_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -value`` as ``--flag=-value`` so argparse keeps the value."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in DASHED_VALUE_FLAGS and i + 1 < len(argv) and NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{arg}={argv[i + 1]}")
            i += 2
            continue
        out.append(arg)
        i += 1
    return out


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(glue_dashed_values(sys.argv[1:] if argv is None else list(argv)))
    try:
        rc = COMMANDS[args.command](args)
    except KronomaError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except OSError as e:
        name = e.filename or ""
        print(f"error: {name}: {e.strerror or e}" if name else f"error: {e}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)
    if rc:
        sys.exit(rc)


if __name__ == "__main__":
    main()
