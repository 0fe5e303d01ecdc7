"""Desk-scale reproduction: campaign for every workload, full sweep, report, criteria printout.

    python3 scripts/run_desk.py --out desk --jobs 4

An existing campaign under --out is reused with --reuse; the sweep always reruns.
"""
from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path

from hpcsbo import checks
from hpcsbo.campaign import CampaignConfig, run_campaign
from hpcsbo.evaluation import SweepConfig, render_report, save_report, sweep
from hpcsbo.workloads import WORKLOADS


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("desk"), help="output root (default: desk)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("--master-seed", type=int, default=0)
    ap.add_argument("--reuse", action="store_true", help="skip the campaign if its files exist")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    data = args.out / "campaign"
    t0 = time.perf_counter()
    for w in WORKLOADS:
        if args.reuse and (data / w / "metadata.txt").exists():
            continue
        run_campaign(CampaignConfig(w, master_seed=args.master_seed, out_dir=data / w), args.jobs)
    t1 = time.perf_counter()
    report = sweep(SweepConfig(data_dir=data), args.jobs)
    t2 = time.perf_counter()
    save_report(report, args.out / "report.json")
    render_report(report, args.out / "figures")

    print(f"campaign {t1 - t0:.0f}s, sweep {t2 - t1:.0f}s, {len(report.cells)} cells")
    results = checks.report_checks(report) + [checks.label_soundness(data), checks.calibration_shares(data)]
    for c in sorted(results, key=lambda c: c.criterion):
        print(c.line())
    return 0 if all(c.passed for c in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
