"""Certify the demo problems and print a comparison table.

Rows: contrived mpQP (primal, dual, relaxed quadratics), its quadratic-penalty
form, and the double-integrator MPC demo. Each partition is also checked
against the point solver on sampled parameters.

    python scripts/reproduce_table.py [--samples 2000] [--workers 1]
"""
import argparse
import time

from ascert.certify import CertOptions, certify
from ascert.cli import report_table
from ascert.frontends import build_dual, dual_start, mpc_double_integrator, penalty_reform
from ascert.io import PartitionFile
from ascert.model import contrived_mpqp
from ascert.validation import validate_partition


def runs():
    mp = contrived_mpqp()
    yield "contrived", mp, None, {}
    dual, _ = build_dual(mp)
    F0, G0, w0 = dual_start(dual)
    yield "contrived-dual", dual, (w0, F0, G0), {}
    yield "contrived-relaxed", mp, None, {"relax_quadratics": True}
    yield "contrived-penalty", penalty_reform(mp), None, {}
    yield "double-integrator", mpc_double_integrator(), None, {}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    parts, checks = [], []
    for name, mp, start, kw in runs():
        w0, F0, G0 = start or (None, None, None)
        t0 = time.perf_counter()
        P = certify(mp, w0, F0, G0, CertOptions(workers=args.workers, **kw))
        P.wall_time = time.perf_counter() - t0
        parts.append(PartitionFile(P, (mp.n, mp.m, mp.p), mp.theta0, name))
        rep = validate_partition(mp, P, args.samples, 42, w0, F0, G0,
                                 exact=not kw.get("relax_quadratics", False))
        checks.append(f"{name:<20} {rep.summary()}")

    print(report_table(parts))
    print()
    print("sampled check against the point solver:")
    print("\n".join(checks))


if __name__ == "__main__":
    main()
