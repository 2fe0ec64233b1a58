"""Parametric certification of the active-set solver.

Starting from ``Theta0`` the engine keeps a stack of region tuples and
splits each region according to the decision the solver would take there.

* Mode B (one solver pass): step toward the CSP of the current working set
  and split by which constraint blocks first, or none.
* Mode A (the dual check at a CSP): split by which multiplier is removed,
  or optimality.

Before the first removal (``case2``) the iterates are not affine in theta.
Step-length comparisons then become quadratic inequalities built from the
initial iterate. After a removal every iterate is affine, and every search
direction is a positive multiple of ``-H* a_l'`` where ``a_l`` is the row
removed last.

Iteration counting follows the solver: one solver pass is one Mode B
split (``k + 1``) followed, at a CSP, by one Mode A split that keeps ``k``.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .frontends import flop_model
from .kkt import EPS_SING, KktFactors, factorize_ws, hstar_apply, parametric_eqp, singular_direction
from .model import HalfPlane, MpQP, QuadIneq, Region, Status, WorkingSet
from .oracle import EPS_REGION, Verdict, min_quad_lower_bound, region_feasible

QUAD_ZERO_TOL = 1e-12


class CertificationError(RuntimeError):
    pass


class MaxIterationsExceeded(CertificationError):
    pass


class InfeasibleStartMap(CertificationError):
    pass


@dataclass
class CertOptions:
    eps_dual: float = 0.0
    relax_quadratics: bool = False
    prune_infeasible_iterates: bool = False
    eps_region: float = EPS_REGION
    max_k: Optional[int] = None        # None -> 4 m
    deterministic_order: bool = True
    workers: int = 1
    eps_primal: float = 1e-9           # candidate threshold for fixed directions
    eps_sing: float = EPS_SING
    flop_method: str = "nullspace"
    external_oracle: Optional[object] = None

    def __post_init__(self):
        if self.eps_region <= 0:
            raise ValueError("eps_region must be positive")
        if self.max_k is not None and self.max_k < 1:
            raise ValueError("max_k must be >= 1")


@dataclass(frozen=True)
class RegionTuple:
    region: Region
    ws: WorkingSet
    F: Optional[np.ndarray]
    G: Optional[np.ndarray]
    status: Status = Status.IN_PROGRESS
    k: int = 0
    nhat: Optional[np.ndarray] = None      # row removed last (as a column of A')
    last_removed: Optional[int] = None     # its index, while the parent factorization is usable
    case2: bool = True
    wschanges: tuple = ()
    flops: int = 0


@dataclass(frozen=True)
class CertRegion:
    id: int
    status: Status
    k: int
    wschanges: tuple
    region: Region
    F: Optional[np.ndarray]
    G: Optional[np.ndarray]
    flops: int


@dataclass
class Partition:
    regions: list
    w0: WorkingSet
    digest: str = ""
    options: dict = field(default_factory=dict)
    wall_time: Optional[float] = None
    p: int = 0

    @property
    def n_max(self) -> int:
        return max((r.k for r in self.regions), default=0)

    @property
    def n_reg(self) -> int:
        return len(self.regions)

    @property
    def flops_max(self) -> int:
        return max((r.flops for r in self.regions), default=0)

    def containing(self, theta, tol=0.0):
        return [r for r in self.regions if r.region.contains(theta, tol)]


class CertContext:
    """Read-only problem data shared by all workers, plus a factorization cache."""

    def __init__(self, mp: MpQP, w0: WorkingSet, F0, G0, opts: CertOptions):
        self.mp = mp
        self.w0 = w0
        self.F0 = np.asarray(F0, dtype=float).reshape(mp.n, mp.p)
        self.G0 = np.asarray(G0, dtype=float).reshape(mp.n)
        self.opts = opts
        self.max_k = opts.max_k if opts.max_k is not None else 4 * mp.m
        self._cache = {}
        f0 = self.factors(w0)
        if f0.singular:
            raise CertificationError(
                "reduced Hessian is singular for the initial working set (no parent factorization)")
        eqp = parametric_eqp(mp, w0, f0)
        self.Fstar0, self.Gstar0 = eqp.Fstar, eqp.Gstar

    def factors(self, ws: WorkingSet) -> KktFactors:
        key = ws.indices
        f = self._cache.get(key)
        if f is None:
            f = factorize_ws(self.mp, ws, self.opts.eps_sing)
            self._cache[key] = f
        return f

    def start_is_csp(self, tol=1e-12) -> bool:
        sc = max(1.0, np.abs(self.F0).max(initial=0.0), np.abs(self.G0).max(initial=0.0))
        return (np.abs(self.Fstar0 - self.F0).max(initial=0.0) <= tol * sc
                and np.abs(self.Gstar0 - self.G0).max(initial=0.0) <= tol * sc)

    def check_start(self, tol=1e-9):
        """``x0(theta)`` feasible on Theta0 and active on ``w0``."""
        mp = self.mp
        Fs = mp.A @ self.F0 - mp.W
        Gs = mp.A @ self.G0 - mp.b
        C, d, _ = mp.theta0.as_arrays()
        for i in range(mp.m):
            scale = max(1.0, abs(mp.b[i]), np.abs(mp.W[i]).max(initial=0.0))
            if i in self.w0:
                if np.abs(Fs[i]).max(initial=0.0) > tol * scale or abs(Gs[i]) > tol * scale:
                    raise InfeasibleStartMap(f"constraint {i + 1} in w0 is not active at x0(theta)")
                continue
            if not np.any(Fs[i]):
                worst = Gs[i]
            else:
                res = linprog(-Fs[i], A_ub=C, b_ub=d, bounds=[(None, None)] * mp.p, method="highs")
                if res.status == 3:
                    raise InfeasibleStartMap(f"constraint {i + 1}: violation unbounded over Theta0")
                if res.status != 0:
                    raise CertificationError(f"feasibility LP failed for constraint {i + 1}")
                worst = -res.fun + Gs[i]
            if worst > tol * scale:
                raise InfeasibleStartMap(
                    f"x0(theta) violates constraint {i + 1} on Theta0 (by {worst:.3g})")


# ---------------------------------------------------------------------------
# inequality builders
# ---------------------------------------------------------------------------


def _half(c, d, strict, scale=1.0):
    return HalfPlane.make(c, d, strict, scale)


def _ratio_less(j, i, Fs, Gs, Gsig, strict):
    """``s_j / sig_j < s_i / sig_i`` for fixed positive ``sig``, as ``K theta < L``."""
    K = Gsig[i] * Fs[j] - Gsig[j] * Fs[i]
    L = -Gsig[i] * Gs[j] + Gsig[j] * Gs[i]
    scale = abs(Gsig[i]) * (np.abs(Fs[j]).max(initial=0) + abs(Gs[j])) \
        + abs(Gsig[j]) * (np.abs(Fs[i]).max(initial=0) + abs(Gs[i]))
    return _half(K, L, strict, scale)


def _quad_less(j, i, a, c, e, d, strict):
    """``N_j D_i - N_i D_j < 0`` with ``N = a theta + c`` and ``D = e theta + d``."""
    Q = np.outer(a[j], e[i]) - np.outer(a[i], e[j])
    R = c[j] * e[i] + d[i] * a[j] - c[i] * e[j] - d[j] * a[i]
    S = c[j] * d[i] - c[i] * d[j]
    scale = max(np.abs(R).max(initial=0), abs(S), 1.0)
    Qs = 0.5 * (Q + Q.T)
    if np.abs(Qs).max(initial=0) <= QUAD_ZERO_TOL * scale:
        return _half(R, -S, strict, scale)
    return QuadIneq(Qs, R, S, strict)


def relax_quadratic(q: QuadIneq, base: Region) -> HalfPlane:
    """Half-plane containing ``{theta in base : q(theta) < 0}``."""
    try:
        L = min_quad_lower_bound(q.Q, base, len(q.R))
    except ValueError as e:
        raise CertificationError("cannot bound quadratic term: region is unbounded") from e
    return _half(q.R, -q.S - L, q.strict, max(1.0, abs(q.S), abs(L)))


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------


def _nonempty(region: Region, ctx: CertContext) -> bool:
    v = region_feasible(region, ctx.opts.eps_region, ctx.opts.external_oracle, ctx.mp.p)
    return v.verdict is not Verdict.EMPTY


def _emit(children, t: RegionTuple, extra_lin, extra_quad, ctx, **fields):
    r = t.region.intersect(extra_lin, extra_quad)
    if r.quadratic and ctx.opts.relax_quadratics:
        r = Region(r.linear + tuple(relax_quadratic(q, t.region) for q in r.quadratic))
    if _nonempty(r, ctx):
        children.append(replace(t, region=r, **fields))


def mode_a(t: RegionTuple, ctx: CertContext):
    assert t.status is Status.CSP
    mp, eps = ctx.mp, ctx.opts.eps_dual
    children = []
    idx = list(t.ws.indices)
    if not idx:
        return [replace(t, status=Status.OPTIMAL)]
    F = ctx.factors(t.ws)
    assert not F.singular, "Mode A reached with a singular reduced Hessian"
    eqp = parametric_eqp(mp, t.ws, F)
    Fl, Gl = eqp.Flam, eqp.Glam
    sc = max(1.0, np.abs(Fl).max(), np.abs(Gl).max())
    for a, l in enumerate(idx):
        lin = [_half(Fl[a], -eps - Gl[a], True, sc)]
        for b, i in enumerate(idx):
            if i != l:
                lin.append(_half(Fl[a] - Fl[b], Gl[b] - Gl[a], i < l, sc))
        _emit(children, t, lin, (), ctx,
              ws=t.ws.remove(l), status=Status.IN_PROGRESS, nhat=mp.A[l].copy(),
              last_removed=l, case2=False, wschanges=t.wschanges + (-(l + 1),))
    lin = [_half(-Fl[a], Gl[a] + eps, False, sc) for a in range(len(idx))]
    _emit(children, t, lin, (), ctx, status=Status.OPTIMAL)
    return children


def mode_b(t: RegionTuple, ctx: CertContext):
    if t.k + 1 > ctx.max_k:
        raise MaxIterationsExceeded(
            f"max_k={ctx.max_k} exceeded after {t.wschanges} (possible cycling or cap too low)")
    F = ctx.factors(t.ws)
    if F.singular:
        return mode_b_singular(t, ctx)
    if len(t.ws) == ctx.mp.n:
        # zero step: the iterate is its own CSP and nothing can block
        children = []
        _csp_child(children, t, ctx, parametric_eqp(ctx.mp, t.ws, F), [], _pass(t, ctx))
        return children
    if t.case2:
        return mode_b_case2(t, ctx)
    return mode_b_case1(t, ctx)


def _pass(t, ctx):
    return dict(k=t.k + 1, flops=t.flops + flop_model(t.ws, ctx.mp.n, ctx.opts.flop_method))


def _csp_child(children, t, ctx, eqp, lin, bump):
    mp = ctx.mp
    if ctx.opts.prune_infeasible_iterates:
        lin = list(lin) + _feasibility_rows(mp, t.ws, eqp.Fstar, eqp.Gstar)
    _emit(children, t, lin, (), ctx, status=Status.CSP, F=eqp.Fstar, G=eqp.Gstar, **bump)


def _feasibility_rows(mp, ws, F, G):
    Fs = mp.A @ F - mp.W
    Gs = mp.b - mp.A @ G
    return [_half(Fs[i], Gs[i], False, max(1.0, abs(mp.b[i])))
            for i in ws.complement(mp.m)]


def mode_b_case1(t: RegionTuple, ctx: CertContext):
    mp = ctx.mp
    Fk = ctx.factors(t.ws)
    eqp = parametric_eqp(mp, t.ws, Fk)
    bump = _pass(t, ctx)
    comp = t.ws.complement(mp.m)
    d = -hstar_apply(Fk, t.nhat)          # the search direction, up to a positive factor
    Gsig = mp.A @ d
    tol = 1e-12 * max(1.0, np.abs(Gsig).max(initial=0.0))
    cands = [i for i in comp if Gsig[i] > tol]
    Fs, Gs = mp.W - mp.A @ t.F, mp.b - mp.A @ t.G
    Fss, Gss = mp.W - mp.A @ eqp.Fstar, mp.b - mp.A @ eqp.Gstar
    children = []
    for j in cands:
        sc = max(1.0, abs(mp.b[j]))
        lin = [_half(Fss[j], -Gss[j], True, sc)]
        lin += [_ratio_less(j, i, Fs, Gs, Gsig, strict=i < j) for i in cands if i != j]
        Fp = t.F + np.outer(d, Fs[j]) / Gsig[j]
        Gp = t.G + d * Gs[j] / Gsig[j]
        _emit(children, t, lin, (), ctx, ws=t.ws.add(j), F=Fp, G=Gp,
              wschanges=t.wschanges + (j + 1,), last_removed=None, **bump)
    lin = [_half(-Fss[i], Gss[i], False, max(1.0, abs(mp.b[i]))) for i in cands]
    _csp_child(children, t, ctx, eqp, lin, bump)
    return children


def surrogate_maps(ctx: CertContext, ws: WorkingSet, Fk: Optional[KktFactors] = None):
    """Affine maps of the surrogate step length's numerator and denominator.

    Before the first removal the step length to constraint i is ordered like
    ``N_i(theta) / D_i(theta)`` with ``N = a theta + c`` and
    ``D = e theta + d``. Returns ``(a, c, e, d)`` over all constraints.
    """
    mp = ctx.mp
    Fk = Fk if Fk is not None else ctx.factors(ws)
    idx = list(ws.indices)
    Tk = Fk.T
    a = mp.W - mp.A @ (hstar_apply(Fk, mp.H @ ctx.F0) + Tk @ mp.W[idx])
    c = mp.b - mp.A @ (hstar_apply(Fk, mp.H @ ctx.G0) + Tk @ mp.b[idx])
    e = mp.A @ hstar_apply(Fk, mp.H @ (ctx.Fstar0 - ctx.F0))
    d = mp.A @ hstar_apply(Fk, mp.H @ (ctx.Gstar0 - ctx.G0))
    return a, c, e, d


def mode_b_case2(t: RegionTuple, ctx: CertContext):
    mp = ctx.mp
    Fk = ctx.factors(t.ws)
    eqp = parametric_eqp(mp, t.ws, Fk)
    bump = _pass(t, ctx)
    comp = t.ws.complement(mp.m)
    a, c, e, dd = surrogate_maps(ctx, t.ws, Fk)
    Fss, Gss = mp.W - mp.A @ eqp.Fstar, mp.b - mp.A @ eqp.Gstar
    # rows whose surrogate slack vanishes identically (x0 on the constraint but
    # not in the working set): the cross-multiplied test reads 0 < 0 for them,
    # so "j beats i" becomes "i does not block", i.e. s*_i >= 0
    nscale = max(1.0, np.abs(a).max(initial=0), np.abs(c).max(initial=0))
    flat = {i for i in comp
            if max(np.abs(a[i]).max(initial=0), abs(c[i])) <= QUAD_ZERO_TOL * nscale}
    children = []
    for j in comp:
        sc = max(1.0, abs(mp.b[j]))
        lin = [_half(Fss[j], -Gss[j], True, sc)]
        quad = []
        for i in comp:
            if i == j:
                continue
            if i < j and i in flat:
                lin.append(_half(-Fss[i], Gss[i], False, max(1.0, abs(mp.b[i]))))
                continue
            q = _quad_less(j, i, a, c, e, dd, strict=i < j)
            (quad if isinstance(q, QuadIneq) else lin).append(q)
        _emit(children, t, lin, quad, ctx, ws=t.ws.add(j), F=None, G=None,
              wschanges=t.wschanges + (j + 1,), **bump)
    lin = [_half(-Fss[i], Gss[i], False, max(1.0, abs(mp.b[i]))) for i in comp]
    _csp_child(children, t, ctx, eqp, lin, bump)
    return children


def mode_b_singular(t: RegionTuple, ctx: CertContext):
    mp = ctx.mp
    if t.case2 or t.last_removed is None:
        raise CertificationError(
            f"singular reduced Hessian at {t.ws} without a preceding removal (no parent factorization)")
    parent_ws = t.ws.add(t.last_removed)
    parent = ctx.factors(parent_ws)
    p = -singular_direction(parent, parent_ws.position(t.last_removed))
    bump = _pass(t, ctx)
    sig = mp.A @ p
    comp = t.ws.complement(mp.m)
    cands = [i for i in comp if sig[i] > ctx.opts.eps_primal]
    if not cands:
        return [replace(t, status=Status.UNBOUNDED, **bump)]
    Fs, Gs = mp.W - mp.A @ t.F, mp.b - mp.A @ t.G
    children = []
    for j in cands:
        lin = [_ratio_less(j, i, Fs, Gs, sig, strict=i < j) for i in cands if i != j]
        Fp = t.F + np.outer(p, Fs[j]) / sig[j]
        Gp = t.G + p * Gs[j] / sig[j]
        _emit(children, t, lin, (), ctx, ws=t.ws.add(j), F=Fp, G=Gp,
              wschanges=t.wschanges + (j + 1,), last_removed=None, **bump)
    return children


def prune_infeasible_iterates(t: RegionTuple, ctx: CertContext) -> Optional[RegionTuple]:
    """Intersect a CSP region with primal feasibility of its CSP; None when empty."""
    assert t.status is Status.CSP
    r = t.region.intersect(_feasibility_rows(ctx.mp, t.ws, t.F, t.G))
    if not _nonempty(r, ctx):
        return None
    return replace(t, region=r)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def initial_tuple(ctx: CertContext) -> RegionTuple:
    root = RegionTuple(ctx.mp.theta0, ctx.w0, ctx.F0, ctx.G0)
    if ctx.start_is_csp():
        # the first pass finds p = 0 everywhere; go straight to the dual check
        root = replace(root, status=Status.CSP, **_pass(root, ctx))
    return root


def step(t: RegionTuple, ctx: CertContext):
    """Children of one tuple (Mode A at a CSP, Mode B otherwise)."""
    return mode_a(t, ctx) if t.status is Status.CSP else mode_b(t, ctx)


def certify(mp: MpQP, w0: Optional[WorkingSet] = None, F0=None, G0=None,
            opts: Optional[CertOptions] = None) -> Partition:
    opts = opts or CertOptions()
    w0 = w0 if w0 is not None else WorkingSet()
    F0 = np.zeros((mp.n, mp.p)) if F0 is None else F0
    G0 = np.zeros(mp.n) if G0 is None else G0
    t_start = time.perf_counter()
    ctx = CertContext(mp, w0, F0, G0, opts)
    ctx.check_start()
    if not _nonempty(mp.theta0, ctx):
        raise CertificationError("Theta0 is empty")
    root = initial_tuple(ctx)
    done = []
    if opts.workers <= 1:
        stack = [root]
        while stack:
            t = stack.pop()
            for c in reversed(step(t, ctx)):
                (done if c.status in (Status.OPTIMAL, Status.UNBOUNDED) else stack).append(c)
    else:
        wave = [root]
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            while wave:
                nxt = []
                for kids in pool.map(lambda t: step(t, ctx), wave):
                    for c in kids:
                        (done if c.status in (Status.OPTIMAL, Status.UNBOUNDED) else nxt).append(c)
                wave = nxt

    done.sort(key=lambda t: t.wschanges)
    regions = [CertRegion(i + 1, t.status, t.k, t.wschanges, t.region, t.F, t.G, t.flops)
               for i, t in enumerate(done)]
    return Partition(regions, w0, mp.digest(), _options_dict(opts),
                     time.perf_counter() - t_start, mp.p)


def _options_dict(opts: CertOptions) -> dict:
    return {"eps_dual": opts.eps_dual, "relax": opts.relax_quadratics,
            "prune": opts.prune_infeasible_iterates, "eps_region": opts.eps_region,
            "max_k": opts.max_k}
