"""Spectral-gap sweep: run a sweep config, then print median gaps per (beta, n).

    python3 scripts/spectral_sweep.py --config configs/spectral_sweep.yaml --workers 4
"""
import argparse
import json
import logging
from pathlib import Path

from qnmcmc.config import PROPOSALS, load_config
from qnmcmc.pipeline import report, run_pipeline

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(ROOT / "configs" / "spectral_sweep.yaml"))
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--instances", type=int, help="override the instance count (quick looks)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    if args.instances is not None:
        cfg.instances = args.instances
    out = run_pipeline(cfg)
    summary = report(out)

    print(f"\n{'beta':>6} {'n':>3} " + " ".join(f"{p:>14}" for p in PROPOSALS) + f" {'opt/uniform':>12}")
    for cell in summary["cells"]:
        med = cell["median_gap"]
        ratio = cell["median_ratio_to_uniform"].get("gns_optimized", float("nan"))
        print(f"{cell['beta']:>6g} {cell['n']:>3d} "
              + " ".join(f"{med.get(p, float('nan')):>14.3e}" for p in PROPOSALS) + f" {ratio:>12.3g}")
    print("\ntemperature ordering:", json.dumps(summary["temperature_ordering"]))
    print(f"tables in {out / 'report'}")


if __name__ == "__main__":
    main()
