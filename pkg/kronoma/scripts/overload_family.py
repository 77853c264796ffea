#!/usr/bin/env python3
"""Write the F x P^(x r) pattern family used for overload-versus-rate sweeps."""
import argparse
import sys
from pathlib import Path

from kronoma.designer import find_combining
from kronoma.errors import KronomaError
from kronoma.patternfile import dump_pattern, load_pattern
from kronoma.patterns import BinaryMatrix, KroneckerPattern

P3 = BinaryMatrix.from_rows([[1, 1, 0], [1, 0, 1], [0, 1, 1]])


def overload_family(
    r_values: list[int],
    out_dir: str = ".",
    base: str = "@pdma4x8",
    verbose: bool = False,
    dry_run: bool = False,
) -> list[Path]:
    """Write one pattern file per r. Returns the paths written (or that would be)."""

    def log(msg: str) -> None:
        if verbose:
            print(msg, file=sys.stderr)

    rect = load_pattern(base).rect_factors
    design = find_combining(P3)
    paths = []
    for r in r_values:
        if r < 0:
            raise ValueError(f"r must be nonnegative, got {r}")
        pattern = KroneckerPattern(rect, (design,) * r)
        path = Path(out_dir) / f"family_r{r}.json"
        log(f"r={r}: M={pattern.M} K={pattern.K} overload={pattern.beta}")
        if dry_run:
            print(f"[dry-run] write {path}")
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            dump_pattern(pattern, path)
        paths.append(path)
    return paths


def main() -> None:
    ap = argparse.ArgumentParser(
        description="Write the overload pattern family F x P^(x r).",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Each r adds one 3x3 square factor with gains 4/3, so consecutive members
differ by 10*log10(4/3) ~ 1.25 dB in the SNR their sum rate needs.

Example:
  kronoma-family --r 0,1,2,3,4,5 --out-dir family/
  kronoma sumrate --pattern family/family_r1.json --snr-db -20:0:1
""",
    )
    ap.add_argument("-v", "--verbose", action="store_true", help="verbose output")
    ap.add_argument("-n", "--dry-run", action="store_true", help="show what would be written without writing")
    ap.add_argument("--r", default="0,1,2,3,4,5", help="comma list of r values (default: 0..5)")
    ap.add_argument("--base", default="@pdma4x8", help="pattern whose rectangular factors are used (default: @pdma4x8)")
    ap.add_argument("--out-dir", default=".", help="output directory (default: .)")
    args = ap.parse_args()

    try:
        r_values = [int(v) for v in args.r.split(",") if v.strip()]
        paths = overload_family(r_values, args.out_dir, args.base, verbose=args.verbose, dry_run=args.dry_run)
        if not args.dry_run:
            print(f"Wrote {len(paths)} pattern files to {args.out_dir}.")
    except KronomaError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
