"""Primal active-set QP solver with the semi-definite (singular) extension.

This is the online algorithm whose behaviour ``certify`` predicts, and the
ground truth every certificate is checked against.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .frontends import flop_model
from .kkt import (EPS_SING, KktFactors, SingularReducedHessian, factorize_ws,
                  hstar_apply, singular_direction)
from .model import MpQP, WorkingSet, format_sequence

TIE_TOL = 1e-12


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


class InfeasibleStart(ValueError):
    pass


@dataclass
class SolverOptions:
    eps_dual: float = 0.0
    eps_primal: float = 1e-9
    eps_sing: float = EPS_SING
    max_iter: Optional[int] = None
    lp_gradient_direction: bool = False
    flop_method: str = "nullspace"


@dataclass
class SolveLog:
    x: np.ndarray
    lam: np.ndarray
    ws: WorkingSet
    status: SolveStatus
    iterations: int
    wschanges: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    flops: int = 0
    w0: WorkingSet = field(default_factory=WorkingSet)
    # per-pass trace: (working set, x_k, p_k, kind) with kind in
    # {"add", "remove", "optimal", "singular-add", "unbounded"}
    trace: list = field(default_factory=list)

    def sequence(self) -> str:
        s = format_sequence(self.w0, self.wschanges)
        if self.status is not SolveStatus.OPTIMAL:
            s += f"  status={self.status.value}"
        return s


def objective(mp: MpQP, theta, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ mp.H @ x + mp.f_of(theta) @ x)


def _argmin_lowest(values, idx, tol=TIE_TOL):
    """Lowest constraint index among the (near-)minimal entries."""
    values = np.asarray(values, dtype=float)
    vmin = values.min()
    thr = vmin + tol * max(1.0, abs(vmin))
    return min(i for i, v in zip(idx, values) if v <= thr)


def solve(mp: MpQP, theta, x0=None, w0: Optional[WorkingSet] = None,
          opts: Optional[SolverOptions] = None) -> SolveLog:
    opts = opts or SolverOptions()
    theta = np.asarray(theta, dtype=float).ravel()
    n, m = mp.n, mp.m
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    ws = w0 if w0 is not None else WorkingSet()
    w_start = ws
    max_iter = opts.max_iter if opts.max_iter is not None else 10 * (m + n)
    f = mp.f_of(theta)
    bt = mp.b_of(theta)
    s = bt - mp.A @ x
    scale = max(1.0, np.abs(bt).max(initial=0.0))
    if s.min(initial=0.0) < -opts.eps_primal * scale:
        raise InfeasibleStart(f"x0 is infeasible (min slack {s.min():.3g})")
    if ws.indices and np.abs(s[list(ws.indices)]).max() > opts.eps_primal * scale:
        raise InfeasibleStart("w0 contains constraints that are not active at x0")

    log = SolveLog(x, np.zeros(0), ws, SolveStatus.MAX_ITER, 0, w0=w_start)
    parent: Optional[tuple] = None   # (factors before the last removal, position)
    k = 0
    while k < max_iter:
        k += 1
        idx = list(ws.indices)
        comp = ws.complement(m)
        F = factorize_ws(mp, ws, opts.eps_sing)
        log.flops += flop_model(ws, n, opts.flop_method)
        g = mp.H @ x + f

        if F.singular:
            p = _singular_step(mp, F, g, parent, opts)
            if p is None:
                # projected gradient vanished: x is a stationary point of the face
                x_star = x
                res = _dual_check(mp, F, ws, x_star, f, opts)
                if res is None:
                    raise SingularReducedHessian("singular face with no multiplier estimate")
            else:
                sigma = mp.A @ p
                cand = [i for i in comp if sigma[i] > opts.eps_primal]
                if not cand:
                    log.trace.append((ws, x.copy(), p, "unbounded"))
                    log.status = SolveStatus.UNBOUNDED
                    break
                alphas = s[cand] / sigma[cand]
                j = _argmin_lowest(alphas, cand)
                alpha = max(0.0, s[j] / sigma[j])
                log.trace.append((ws, x.copy(), p, "singular-add"))
                x = x + alpha * p
                s = s - alpha * sigma
                s[j] = 0.0
                ws = ws.add(j)
                log.wschanges.append(j + 1)
                log.alphas.append(alpha)
                parent = None
                continue
        else:
            p = -hstar_apply(F, g)
            sigma = mp.A @ p
            s_star = s - sigma
            blocking = [i for i in comp if s_star[i] < -opts.eps_primal * scale]
            if blocking:
                alphas = s[blocking] / sigma[blocking]
                j = _argmin_lowest(alphas, blocking)
                alpha = min(1.0, max(0.0, s[j] / sigma[j]))
                log.trace.append((ws, x.copy(), p, "add"))
                x = x + alpha * p
                s = s - alpha * sigma
                s[j] = 0.0
                ws = ws.add(j)
                log.wschanges.append(j + 1)
                log.alphas.append(alpha)
                continue
            x_star = x + p
            res = _dual_check(mp, F, ws, x_star, f, opts)

        lam, l = res
        log.alphas.append(1.0)
        if l is None:
            log.trace.append((ws, x.copy(), x_star - x, "optimal"))
            x, s = x_star, bt - mp.A @ x_star
            log.lam = lam
            log.status = SolveStatus.OPTIMAL
            break
        log.trace.append((ws, x.copy(), x_star - x, "remove"))
        x = x_star
        s = bt - mp.A @ x
        s[idx] = 0.0
        parent = (F, ws.position(l))
        ws = ws.remove(l)
        log.wschanges.append(-(l + 1))

    log.x, log.ws, log.iterations = x, ws, k
    return log


def _singular_step(mp, F: KktFactors, g, parent, opts):
    if opts.lp_gradient_direction:
        p = -F.Z @ (F.Z.T @ g)
        if np.linalg.norm(p) <= 1e-12 * max(1.0, np.linalg.norm(g)):
            return None
        return p
    if parent is None:
        raise SingularReducedHessian(
            "reduced Hessian is singular without a preceding removal (no parent factorization)")
    # T e_i points out of the removed constraint; the descent direction is its negative
    return -singular_direction(parent[0], parent[1])


def _dual_check(mp, F: KktFactors, ws, x_star, f, opts):
    """Multipliers at the CSP and the constraint to drop (None when optimal)."""
    if not len(ws):
        return np.zeros(0), None
    lam = -F.Y.T @ (mp.H @ x_star + f)
    if lam.min() >= -opts.eps_dual:
        return lam, None
    l = _argmin_lowest(lam, list(ws.indices))
    return lam, l


def lp_gradient_step(mp: MpQP, ws: WorkingSet, theta):
    """Solve ``[[I, A_k'], [A_k, 0]] [p; lam] = [-f(theta); 0]`` directly."""
    n = mp.n
    Ak = mp.A[list(ws.indices)]
    r = Ak.shape[0]
    K = np.block([[np.eye(n), Ak.T], [Ak, np.zeros((r, r))]])
    rhs = np.concatenate([-mp.f_of(theta), np.zeros(r)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]
