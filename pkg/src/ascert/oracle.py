"""Emptiness and geometry queries on parameter regions.

A region counts as nonempty only if it contains a ball of radius
``eps_region``; measure-zero slivers are treated as empty. Polyhedral
regions are decided with a Chebyshev-center LP. Regions with quadratic
inequalities go through a staged policy: empty if the linear part is,
nonempty once a sampled witness is found, then a branch-and-bound proof
over boxes (which can also answer either way), and unknown otherwise.
"""
from __future__ import annotations

import enum
import subprocess
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from .model import HalfPlane, QuadIneq, Region

EPS_REGION = 1e-9
SEED = 0x5EED
N_SAMPLES = 128
RADIUS_CAP = 1e6
MAX_CELLS = 2000


class Verdict(str, enum.Enum):
    EMPTY = "empty"
    NONEMPTY = "nonempty"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class FeasibilityVerdict:
    verdict: Verdict
    witness: Optional[np.ndarray] = None
    radius: Optional[float] = None

    @property
    def empty(self) -> bool:
        return self.verdict is Verdict.EMPTY


def _trivial_rows_ok(r: Region) -> bool:
    for h in r.linear:
        if h.is_trivial and (h.d < 0 or (h.strict and h.d <= 0)):
            return False
    return True


def chebyshev(r: Region, p: Optional[int] = None):
    """Center and radius of the largest ball in the closure of ``r.linear``.

    Returns ``(None, -inf)`` when the LP is infeasible and ``(None, nan)``
    when the solver fails. The radius is recomputed from the returned
    center, so a positive value is a certified inscribed radius.
    """
    p = p if p is not None else r.dim
    rows = [h for h in r.linear if not h.is_trivial]
    if not _trivial_rows_ok(r):
        return None, -np.inf
    if not rows:
        return np.zeros(p), RADIUS_CAP
    C = np.array([h.c for h in rows])
    d = np.array([h.d for h in rows])
    norms = np.linalg.norm(C, axis=1)
    A_ub = np.hstack([C, norms[:, None]])
    cost = np.zeros(p + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * p + [(None, RADIUS_CAP)]
    res = linprog(cost, A_ub=A_ub, b_ub=d, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return None, -np.inf
    if res.status != 0:
        return None, np.nan
    center = res.x[:p]
    radius = float(np.min((d - C @ center) / norms))
    return center, min(radius, RADIUS_CAP)


def polyhedron_feasible(r: Region, eps_region=EPS_REGION, p=None) -> FeasibilityVerdict:
    if r.quadratic:
        raise ValueError("polyhedron_feasible expects a region without quadratic inequalities")
    center, radius = chebyshev(r, p)
    if np.isnan(radius):
        return FeasibilityVerdict(Verdict.UNKNOWN)
    if center is None or radius <= eps_region:
        return FeasibilityVerdict(Verdict.EMPTY, radius=max(radius, 0.0) if np.isfinite(radius) else None)
    return FeasibilityVerdict(Verdict.NONEMPTY, center, radius)


def bounding_box(r: Region, p=None):
    """Per-coordinate bounds of the linear part (``inf`` where unbounded)."""
    p = p if p is not None else r.dim
    C, d, _ = Region([h for h in r.linear if not h.is_trivial]).as_arrays()
    lo, hi = np.full(p, -np.inf), np.full(p, np.inf)
    if C.shape[0] == 0:
        return lo, hi
    for i in range(p):
        for sign in (1.0, -1.0):
            cost = np.zeros(p)
            cost[i] = sign
            res = linprog(cost, A_ub=C, b_ub=d, bounds=[(None, None)] * p, method="highs")
            if res.status == 0:
                if sign > 0:
                    lo[i] = res.x[i]
                else:
                    hi[i] = res.x[i]
            elif res.status == 2:
                raise ValueError("bounding_box of an empty region")
    return lo, hi


def _quad_margin_ok(q: QuadIneq, theta, eps) -> bool:
    # ball of radius eps around theta stays inside {q < 0}
    g = np.linalg.norm(q.grad(theta))
    qn = np.linalg.norm(q.Q, 2) if q.Q.size else 0.0
    return -q.value(theta) > eps * (g + eps * qn)


def is_witness(r: Region, theta, eps=EPS_REGION) -> bool:
    theta = np.asarray(theta, dtype=float)
    for h in r.linear:
        if h.is_trivial:
            if h.d < 0 or (h.strict and h.d <= 0):
                return False
        elif h.margin(theta) <= eps:
            return False
    return all(_quad_margin_ok(q, theta, eps) for q in r.quadratic)


def _score(r: Region, theta) -> float:
    """Smallest normalized margin; positive inside."""
    vals = [h.margin(theta) for h in r.linear if not h.is_trivial]
    for q in r.quadratic:
        g = np.linalg.norm(q.grad(theta))
        vals.append(-q.value(theta) / max(g, 1e-12 * max(1.0, q.scale())))
    return min(vals) if vals else np.inf


def _hit_and_run(r: Region, start, n, rng, lo, hi):
    p = len(start)
    C, d, _ = Region([h for h in r.linear if not h.is_trivial]).as_arrays()
    C = C.reshape(-1, p)
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    x = np.asarray(start, dtype=float).copy()
    out = []
    for _ in range(n):
        u = rng.standard_normal(p) * span
        u /= np.linalg.norm(u)
        cu = C @ u
        slack = d - C @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / cu
        tmax = np.min(t[cu > 1e-14], initial=RADIUS_CAP)
        tmin = np.max(t[cu < -1e-14], initial=-RADIUS_CAP)
        if tmax <= tmin:
            continue
        x = x + rng.uniform(tmin, tmax) * u
        out.append(x.copy())
    return out


def quad_region_feasible(r: Region, eps_region=EPS_REGION, n_samples=N_SAMPLES,
                         seed=SEED, refine=True, max_cells=MAX_CELLS, p=None) -> FeasibilityVerdict:
    p = p if p is not None else r.dim
    lin = polyhedron_feasible(r.linear_part(), eps_region, p)
    if not r.quadratic or lin.verdict is not Verdict.NONEMPTY:
        return lin
    center = lin.witness
    cands = [center]
    try:
        lo, hi = bounding_box(r, p)
    except ValueError:
        return FeasibilityVerdict(Verdict.EMPTY)
    if p <= 10 and np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
        for bits in range(2 ** p):
            v = np.array([hi[i] if bits >> i & 1 else lo[i] for i in range(p)])
            cands.append(v)
            cands.append(0.5 * (v + center))
    rng = np.random.default_rng(seed)
    cands.extend(_hit_and_run(r, center, n_samples, rng, lo, hi))
    for c in cands:
        if is_witness(r, c, eps_region):
            return FeasibilityVerdict(Verdict.NONEMPTY, np.asarray(c))
    if max_cells:
        verdict, w, _ = prove_empty(r, eps_region, max_cells, p)
        if verdict is not Verdict.UNKNOWN:
            return FeasibilityVerdict(verdict, w)
    if refine:
        scored = sorted(cands, key=lambda c: -_score(r, c))[:4]
        for c in scored:
            w = _maximize_margin(r, c)
            if w is not None and is_witness(r, w, eps_region):
                return FeasibilityVerdict(Verdict.NONEMPTY, w)
    return FeasibilityVerdict(Verdict.UNKNOWN)


def _maximize_margin(r: Region, start):
    """Local search for a point with positive margin in every inequality."""
    lin = [h for h in r.linear if not h.is_trivial]
    p = len(start)
    cons = [{"type": "ineq", "fun": (lambda z, h=h: h.d - h.c @ z[:p] - z[p])} for h in lin]
    for q in r.quadratic:
        s = max(q.scale(), 1e-300)
        cons.append({"type": "ineq", "fun": (lambda z, q=q, s=s: -q.value(z[:p]) / s - z[p])})
    z0 = np.append(start, min(_score(r, start), 0.0))
    try:
        res = minimize(lambda z: -z[p], z0, constraints=cons, method="SLSQP",
                       options={"maxiter": 200, "ftol": 1e-12})
    except (ValueError, np.linalg.LinAlgError):
        return None
    return res.x[:p] if np.all(np.isfinite(res.x)) else None


def region_feasible(r: Region, eps_region=EPS_REGION, external=None, p=None) -> FeasibilityVerdict:
    """Dispatch to the polyhedral or quadratic check (or an external oracle)."""
    if external is not None and r.quadratic:
        lin = polyhedron_feasible(r.linear_part(), eps_region, p)
        if lin.verdict is Verdict.EMPTY:
            return lin
        return external(r)
    if r.quadratic:
        return quad_region_feasible(r, eps_region, p=p)
    return polyhedron_feasible(r, eps_region, p)


def min_quad_lower_bound(Q, r: Region, p=None) -> float:
    """A certified lower bound on ``min theta'Q theta`` over ``r``'s linear part."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    if not np.any(Q):
        return 0.0
    lo, hi = bounding_box(r, p if p is not None else Q.shape[0])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("cannot bound quadratic term over an unbounded region")
    lam_min = float(np.linalg.eigvalsh(Q).min())
    if lam_min < 0:
        far = np.maximum(np.abs(lo), np.abs(hi))
        return lam_min * float(far @ far)
    near = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    return lam_min * float(near @ near)


# ---------------------------------------------------------------------------
# external oracle process protocol
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def encode_region(r: Region, p: int) -> str:
    lines = [f"QREGION {p} {len(r.linear)} {len(r.quadratic)}"]
    for h in r.linear:
        lines.append(" ".join(_fmt(c) for c in h.c) + f" {_fmt(h.d)} {int(h.strict)}")
    for q in r.quadratic:
        for row in q.Q:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(" ".join(_fmt(v) for v in q.R))
        lines.append(f"{_fmt(q.S)} {int(q.strict)}")
    return "\n".join(lines) + "\n"


def decode_region(text: str) -> Region:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    head = rows[0]
    if head[0] != "QREGION":
        raise ValueError("expected QREGION header")
    p, nl, nq = int(head[1]), int(head[2]), int(head[3])
    pos = 1
    lin = []
    for _ in range(nl):
        v = rows[pos]
        pos += 1
        lin.append(HalfPlane(np.array(v[:p], dtype=float), float(v[p]), bool(int(v[p + 1]))))
    quad = []
    for _ in range(nq):
        Q = np.array(rows[pos:pos + p], dtype=float)
        R = np.array(rows[pos + p], dtype=float)
        S, strict = rows[pos + p + 1]
        pos += p + 2
        quad.append(QuadIneq(Q, R, float(S), bool(int(strict))))
    return Region(lin, quad)


def decode_verdict(line: str) -> FeasibilityVerdict:
    parts = line.split()
    if not parts:
        raise ValueError("empty oracle response")
    if parts[0] == "EMPTY":
        return FeasibilityVerdict(Verdict.EMPTY)
    if parts[0] == "UNKNOWN":
        return FeasibilityVerdict(Verdict.UNKNOWN)
    if parts[0] == "NONEMPTY":
        return FeasibilityVerdict(Verdict.NONEMPTY, np.array(parts[1:], dtype=float))
    raise ValueError(f"bad oracle response {line!r}")


def encode_verdict(v: FeasibilityVerdict) -> str:
    if v.verdict is Verdict.NONEMPTY:
        return "NONEMPTY " + " ".join(_fmt(x) for x in v.witness)
    return v.verdict.name


class ExternalOracle:
    """Run ``command`` once per query; region on stdin, one verdict line on stdout.

    A NONEMPTY answer is only trusted when its witness checks out locally;
    otherwise the verdict degrades to UNKNOWN.
    """

    def __init__(self, command: Sequence[str], p: int, eps_region=EPS_REGION, timeout=60.0):
        self.command = list(command)
        self.p = p
        self.eps_region = eps_region
        self.timeout = timeout

    def __call__(self, r: Region) -> FeasibilityVerdict:
        out = subprocess.run(self.command, input=encode_region(r, self.p), text=True,
                             capture_output=True, timeout=self.timeout, check=True)
        v = decode_verdict(out.stdout.strip().splitlines()[0])
        if v.verdict is Verdict.NONEMPTY and not (
                len(v.witness) == self.p and is_witness(r, v.witness, self.eps_region)):
            return FeasibilityVerdict(Verdict.UNKNOWN)
        return v


def oracle_main(argv=None):
    """Reference implementation of the oracle protocol on stdin/stdout."""
    import sys
    r = decode_region(sys.stdin.read())
    print(encode_verdict(region_feasible(r, p=r.dim)))


# ---------------------------------------------------------------------------
# certified emptiness by branch and bound
# ---------------------------------------------------------------------------


def _quad_box_floor(Q, half):
    """Lower bound of ``delta' Q delta`` over ``|delta| <= half``."""
    lam = float(np.linalg.eigvalsh(Q).min())
    if lam >= 0:
        return 0.0
    eig = lam * float(half @ half)
    off = np.abs(Q - np.diag(np.diag(Q)))
    interval = float(np.minimum(np.diag(Q), 0.0) @ half ** 2 - half @ off @ half)
    return max(eig, interval)


def _cell_relaxation(r: Region, lo, hi):
    """Polyhedral superset of ``r`` restricted to the box ``[lo, hi]``."""
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    rows = list(r.linear) + list(Region.box(lo, hi).linear)
    for q in r.quadratic:
        g = q.grad(c)
        kappa = _quad_box_floor(q.Q, half)
        # q(theta) >= q(c) + g'(theta - c) + kappa on the box
        rows.append(HalfPlane.make(g, g @ c - q.value(c) - kappa, q.strict, max(1.0, q.scale())))
    return Region(rows)


def prove_empty(r: Region, eps_region=EPS_REGION, max_cells=4000, p=None):
    """Branch and bound over boxes; returns (verdict, witness, cells used).

    EMPTY means no cell's polyhedral relaxation holds a ball larger than
    ``eps_region / (2 sqrt(p))``, so ``r`` holds no ball of radius
    ``eps_region``. A relaxation center that satisfies ``r`` is returned as
    a NONEMPTY witness. Running out of cells gives UNKNOWN.
    """
    p = p if p is not None else r.dim
    try:
        lo, hi = bounding_box(r, p)
    except ValueError:
        return Verdict.EMPTY, None, 0
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return Verdict.UNKNOWN, None, 0
    cell_eps = eps_region / (2.0 * np.sqrt(max(p, 1)))
    queue = [(lo, hi)]
    used = 0
    while queue:
        if used >= max_cells:
            return Verdict.UNKNOWN, None, used
        lo, hi = queue.pop()
        used += 1
        center, radius = chebyshev(_cell_relaxation(r, lo, hi), p)
        if np.isnan(radius):
            return Verdict.UNKNOWN, None, used
        if center is None or radius <= cell_eps:
            continue
        if is_witness(r, center, eps_region):
            return Verdict.NONEMPTY, center, used
        i = int(np.argmax(hi - lo))
        mid = 0.5 * (lo[i] + hi[i])
        left_hi, right_lo = hi.copy(), lo.copy()
        left_hi[i] = mid
        right_lo[i] = mid
        queue.append((right_lo, hi))
        queue.append((lo, left_hi))
    return Verdict.EMPTY, None, used
