"""Magnetization and autocorrelation run (n=25 by default, no exact reference).

    python3 scripts/magnetization_demo.py
    python3 scripts/magnetization_demo.py --config configs/acceptance_magnetization.yaml

The n=25 QAOA optimisation dominates the runtime: each energy/gradient
evaluation walks a 2**25 statevector.
"""
import argparse
import csv
import logging
from pathlib import Path

from qnmcmc.config import load_config
from qnmcmc.pipeline import report, run_pipeline

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(ROOT / "configs" / "magnetization_n25.yaml"))
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    out = run_pipeline(cfg)
    summary = report(out)

    print(f"\n{'proposal':>14} {'accept':>8} {'pooled m':>11} {'SE':>9} {'mhat2':>9} {'exact':>16} {'lag c<0.1':>9}")
    for r in summary["magnetization"]:
        lag = r["lag_below_0.1"]
        print(f"{r['proposal']:>14} {r['acceptance_rate']:>8.4f} {r['pooled_mean']:>11.3e} "
              f"{r['standard_error']:>9.2e} {r['pooled_mhat2']:>9.2e} {str(r['exact_mean']):>16} "
              f"{'>max_lag' if lag is None else lag:>9}")

    with open(out / "report" / "histogram.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    first = rows[0]
    rows = [r for r in rows if r["chain"] == "0" and r["instance"] == first["instance"]
            and r["n"] == first["n"] and r["beta"] == first["beta"]]
    for prop in sorted({r["proposal"] for r in rows}):
        counts = [(float(r["m_value"]), int(r["count"])) for r in rows if r["proposal"] == prop]
        top = max(c for _, c in counts) or 1
        print(f"\nchain 0 histogram, n={first['n']} beta={first['beta']}, {prop}")
        for m, c in counts:
            print(f"{m:>+7.3f} {'#' * round(40 * c / top)}")


if __name__ == "__main__":
    main()
