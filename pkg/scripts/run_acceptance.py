"""Run the acceptance gate and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py            # all criteria (a few minutes)
    python3 scripts/run_acceptance.py -k "1 or 4"
"""
import argparse
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-k", help="criterion numbers, e.g. '5 or 6'")
    args = ap.parse_args()
    argv = [str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]
    if args.k:
        expr = " or ".join(f"criterion_{t}" for t in args.k.replace("or", " ").split())
        argv += ["-k", expr]
    sys.exit(pytest.main(argv))


if __name__ == "__main__":
    main()
