"""Monte-Carlo comparison of a partition against the point solver."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certify import Partition
from .model import MpQP, Region, WorkingSet
from .oracle import bounding_box
from .solver import SolverOptions, solve

BOUNDARY_TOL = 1e-6


def sample_region(r: Region, n: int, seed: int = 42, p: Optional[int] = None) -> np.ndarray:
    """``n`` uniform samples from a bounded polyhedron by rejection from its bounding box."""
    p = p if p is not None else r.dim
    lo, hi = bounding_box(r, p)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("cannot sample an unbounded region")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        batch = rng.uniform(lo, hi, size=(max(64, 2 * n), p))
        out.extend(th for th in batch if r.contains(th))
    return np.array(out[:n])


@dataclass
class ValidationReport:
    checked: int = 0
    skipped_boundary: int = 0
    mismatches: list = field(default_factory=list)      # (theta, solver changes, region changes)
    uncovered: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)
    iteration_mismatches: list = field(default_factory=list)
    n_max_sampled: int = 0

    @property
    def ok(self) -> bool:
        return not (self.mismatches or self.uncovered or self.overlaps or self.iteration_mismatches)

    def summary(self) -> str:
        return (f"checked={self.checked} skipped_boundary={self.skipped_boundary} "
                f"mismatches={len(self.mismatches)} uncovered={len(self.uncovered)} "
                f"overlaps={len(self.overlaps)} iteration_mismatches={len(self.iteration_mismatches)} "
                f"N_max_sampled={self.n_max_sampled}")


def boundary_distance(P: Partition, theta) -> float:
    return min((r.region.boundary_distance(theta) for r in P.regions), default=np.inf)


def validate_partition(mp: MpQP, P: Partition, samples=2000, seed=42, w0=None, F0=None, G0=None,
                       exact=True, boundary_tol=BOUNDARY_TOL,
                       solver_opts: Optional[SolverOptions] = None) -> ValidationReport:
    """Sample ``Theta0``, run the solver, and compare with the region(s) holding each sample.

    In exact mode every off-boundary sample must lie in exactly one region
    whose change log and iteration count equal the solver's. Otherwise
    (outer approximations) the solver's log only has to appear among the
    containing regions.
    """
    w0 = w0 if w0 is not None else P.w0
    F0 = np.zeros((mp.n, mp.p)) if F0 is None else np.asarray(F0, dtype=float)
    G0 = np.zeros(mp.n) if G0 is None else np.asarray(G0, dtype=float)
    rep = ValidationReport()
    for theta in sample_region(mp.theta0, samples, seed, mp.p):
        if boundary_distance(P, theta) < boundary_tol:
            rep.skipped_boundary += 1
            continue
        rep.checked += 1
        log = solve(mp, theta, x0=F0 @ theta + G0, w0=w0, opts=solver_opts)
        rep.n_max_sampled = max(rep.n_max_sampled, log.iterations)
        got = tuple(log.wschanges)
        hits = P.containing(theta)
        if not hits:
            rep.uncovered.append(theta)
            continue
        if exact and len(hits) > 1:
            rep.overlaps.append((theta, [r.id for r in hits]))
            continue
        match = [r for r in hits if r.wschanges == got]
        if not match:
            rep.mismatches.append((theta, got, [r.wschanges for r in hits]))
        elif exact and match[0].k != log.iterations:
            rep.iteration_mismatches.append((theta, log.iterations, match[0].k))
    return rep
