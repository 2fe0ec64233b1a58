"""ascert certify|solve|validate|slice|report"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .certify import CertificationError, CertOptions, MaxIterationsExceeded, certify
from .frontends import build_dual, dual_start, recover_primal
from .io import PartitionFile, load_partition, load_problem, serialize_partition
from .model import HalfPlane, Region, WorkingSet
from .oracle import bounding_box
from .solver import InfeasibleStart, objective, solve
from .validation import validate_partition

EXIT_INVALID = 2
EXIT_MAX_K = 3

TRUE = {"1", "true", "yes", "on"}


def _flag(args, pf, name):
    return bool(getattr(args, name, False)) or pf.options.get(name, "0").lower() in TRUE


def _setup(args):
    """Problem, start and certification options after applying file options and flags."""
    pf = load_problem(args.problem)
    mp = pf.mp
    F0, G0 = pf.start()
    w0 = pf.w0
    rec = None
    dual = _flag(args, pf, "dual")
    if dual:
        mp, rec = build_dual(mp)
        F0, G0, w0 = dual_start(mp)
    eps_dual = args.eps_dual if getattr(args, "eps_dual", None) is not None \
        else float(pf.options.get("eps_dual", 0.0))
    max_k = getattr(args, "max_k", None)
    if max_k is None and "max_k" in pf.options:
        max_k = int(pf.options["max_k"])
    opts = CertOptions(eps_dual=eps_dual,
                       relax_quadratics=_flag(args, pf, "relax"),
                       prune_infeasible_iterates=_flag(args, pf, "prune"),
                       max_k=max_k,
                       workers=getattr(args, "workers", 1) or 1)
    return pf, mp, F0, G0, w0, opts, rec, dual


def _name(path, dual):
    base = os.path.splitext(os.path.basename(path))[0]
    return base + ("-dual" if dual else "")


def _run_certify(mp, F0, G0, w0, opts, dual, name):
    P = certify(mp, w0, F0, G0, opts)
    P.options["dual"] = dual
    return PartitionFile(P, (mp.n, mp.m, mp.p), mp.theta0, name)


def cmd_certify(args) -> int:
    try:
        pf, mp, F0, G0, w0, opts, _, dual = _setup(args)
        part = _run_certify(mp, F0, G0, w0, opts, dual, _name(args.problem, dual))
    except MaxIterationsExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MAX_K
    except (ValueError, CertificationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    P = part.partition
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(serialize_partition(part, record_time=args.record_time))
    print(f"N_max={P.n_max} N_reg={P.n_reg} t={P.wall_time:.3f}s")
    return 0


def _parse_vec(s, what):
    try:
        return np.array([float(v) for v in s.split(",") if v.strip() != ""])
    except ValueError:
        raise ValueError(f"{what}: expected comma-separated numbers, got {s!r}") from None


def cmd_solve(args) -> int:
    try:
        pf, mp, F0, G0, w0, opts, rec, dual = _setup(args)
        theta = _parse_vec(args.theta, "--theta")
        if len(theta) != mp.p:
            raise ValueError(f"--theta: expected {mp.p} values, got {len(theta)}")
        log = solve(mp, theta, x0=F0 @ theta + G0, w0=w0)
    except (ValueError, InfeasibleStart, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(log.sequence())
    print(f"iterations={log.iterations} status={log.status.value} flops={log.flops}")
    if log.status.value == "optimal":
        print("x=" + ",".join(f"{v:.10g}" for v in log.x))
        if dual:
            x = recover_primal(rec, theta, log.x)
            print("primal x=" + ",".join(f"{v:.10g}" for v in x))
            print(f"primal objective={objective(pf.mp, theta, x):.10g}")
        else:
            print(f"objective={objective(mp, theta, log.x):.10g}")
    return 0


def cmd_validate(args) -> int:
    try:
        pf, mp, F0, G0, w0, opts, _, dual = _setup(args)
        if args.partition:
            part = load_partition(args.partition)
            if part.partition.digest and part.partition.digest != mp.digest():
                raise ValueError("partition was computed for a different problem")
        else:
            part = _run_certify(mp, F0, G0, w0, opts, dual, _name(args.problem, dual))
    except MaxIterationsExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MAX_K
    except (ValueError, CertificationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    P = part.partition
    exact = not P.options.get("relax", False)
    rep = validate_partition(mp, P, args.samples, args.seed, w0, F0, G0, exact=exact)
    for theta, got, want in rep.mismatches[:20]:
        print(f"mismatch theta={_vec(theta)} solver={list(got)} regions={[list(w) for w in want]}")
    for theta in rep.uncovered[:20]:
        print(f"uncovered theta={_vec(theta)}")
    for theta, ids in rep.overlaps[:20]:
        print(f"overlap theta={_vec(theta)} regions={ids}")
    for theta, it, k in rep.iteration_mismatches[:20]:
        print(f"iterations theta={_vec(theta)} solver={it} region={k}")
    print(f"N_max={P.n_max} N_reg={P.n_reg} " + rep.summary())
    if rep.n_max_sampled > P.n_max:
        print("sampled iteration count exceeds the certified bound")
        return 1
    return 0 if rep.ok else 1


def _vec(v):
    return ",".join(f"{x:.6g}" for x in v)


def slice_rows(part: PartitionFile, dims=(0, 1), fix=None, grid=100, tol=1e-9):
    """Grid-cell centers over the 2-D slice of Theta0 with the lowest-id containing region."""
    p = part.dims[2]
    i, j = dims
    if p < 2:
        raise ValueError("slice needs at least two parameters")
    if not (0 <= i < p and 0 <= j < p) or i == j:
        raise ValueError(f"--dims: need two distinct indices in 1..{p}")
    others = [d for d in range(p) if d not in (i, j)]
    fix = np.zeros(len(others)) if fix is None else np.asarray(fix, dtype=float)
    if len(fix) != len(others):
        raise ValueError(f"--fix: expected {len(others)} values, got {len(fix)}")
    if grid < 1:
        raise ValueError("--grid must be >= 1")
    # restrict Theta0 to the slice, then bound the two free coordinates
    rows = list(part.theta0.linear)
    for d, v in zip(others, fix):
        e = np.zeros(p)
        e[d] = 1.0
        rows += [HalfPlane(e, v), HalfPlane(-e, -v)]
    lo, hi = bounding_box(Region(rows), p)
    regions = sorted(part.partition.regions, key=lambda r: r.id)
    out = []
    us = lo[i] + (np.arange(grid) + 0.5) * (hi[i] - lo[i]) / grid
    vs = lo[j] + (np.arange(grid) + 0.5) * (hi[j] - lo[j]) / grid
    theta = np.zeros(p)
    theta[others] = fix
    for v in vs:
        for u in us:
            theta[i], theta[j] = u, v
            hit = next((r for r in regions if r.region.contains(theta, tol)), None)
            out.append((u, v, hit.id if hit else 0, hit.k if hit else -1))
    return out


def cmd_slice(args) -> int:
    try:
        part = load_partition(args.partition)
        dims = tuple(int(d) - 1 for d in args.dims.split(","))
        if len(dims) != 2:
            raise ValueError("--dims: expected two indices")
        fix = _parse_vec(args.fix, "--fix") if args.fix else None
        rows = slice_rows(part, dims, fix, args.grid)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"theta_{dims[0] + 1}", f"theta_{dims[1] + 1}", "region_id", "k"])
    for u, v, rid, k in rows:
        w.writerow([f"{u:.10g}", f"{v:.10g}", rid, k])
    if args.out:
        fh.close()
    return 0


REPORT_COLUMNS = ("problem", "p", "n", "m", "N_max", "N_reg", "flops_max", "t_cert")


def report_table(parts) -> str:
    rows = [REPORT_COLUMNS]
    for pf in parts:
        P = pf.partition
        n, m, p = pf.dims
        t = f"{P.wall_time:.3f}" if P.wall_time is not None else "-"
        rows.append((pf.name or "-", str(p), str(n), str(m), str(P.n_max), str(P.n_reg),
                     str(P.flops_max), t))
    widths = [max(len(r[c]) for r in rows) for c in range(len(REPORT_COLUMNS))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)


def cmd_report(args) -> int:
    try:
        parts = [load_partition(p) for p in args.partitions]
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(report_table(parts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ascert", description="Certify the iteration count of an "
                                 "active-set QP solver over a parameter set.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def problem_flags(sp):
        sp.add_argument("problem")
        sp.add_argument("--dual", action="store_true", help="work on the dual QP")
        sp.add_argument("--relax", action="store_true", help="outer-approximate quadratic cuts")
        sp.add_argument("--prune", action="store_true", help="prune regions with infeasible iterates")
        sp.add_argument("--eps-dual", type=float, default=None)
        sp.add_argument("--max-k", type=int, default=None, help="iteration cap (default 4m)")

    sp = sub.add_parser("certify", help="partition the parameter set")
    problem_flags(sp)
    sp.add_argument("--out", help="write the partition file here")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--record-time", action="store_true",
                    help="store wall time in the partition file (breaks byte-stability)")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("solve", help="run the solver at one parameter")
    problem_flags(sp)
    sp.add_argument("--theta", required=True, help="comma-separated parameter values")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("validate", help="compare a partition with the solver by sampling")
    problem_flags(sp)
    sp.add_argument("--partition", help="partition file (computed when omitted)")
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("slice", help="CSV raster of a 2-D slice")
    sp.add_argument("partition")
    sp.add_argument("--dims", default="1,2")
    sp.add_argument("--fix", default="", help="values of the remaining parameters")
    sp.add_argument("--grid", type=int, default=100)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_slice)

    sp = sub.add_parser("report", help="table of partition statistics")
    sp.add_argument("partitions", nargs="*")
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
