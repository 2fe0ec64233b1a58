"""Write 2-D slice rasters (theta_1, theta_2, region id, k) of the contrived partitions.

    python scripts/slice_csv.py [--grid 100] [--outdir out]

Plot with any tool, e.g. colour cells by k to see the iteration-count map.
"""
import argparse
import csv
import os
from collections import Counter

from ascert.certify import certify
from ascert.cli import slice_rows
from ascert.frontends import build_dual, dual_start
from ascert.io import PartitionFile
from ascert.model import contrived_mpqp


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=100)
    ap.add_argument("--outdir", default="out")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    mp = contrived_mpqp()
    dual, _ = build_dual(mp)
    F0, G0, w0 = dual_start(dual)
    for name, prob, P in [("primal", mp, certify(mp)), ("dual", dual, certify(dual, w0, F0, G0))]:
        rows = slice_rows(PartitionFile(P, (prob.n, prob.m, prob.p), prob.theta0), grid=args.grid)
        path = os.path.join(args.outdir, f"contrived_{name}_slice.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta_1", "theta_2", "region_id", "k"])
            w.writerows((f"{u:.10g}", f"{v:.10g}", rid, k) for u, v, rid, k in rows)
        counts = Counter(k for *_, k in rows)
        print(f"{path}: cells per iteration count {dict(sorted(counts.items()))}")


if __name__ == "__main__":
    main()
