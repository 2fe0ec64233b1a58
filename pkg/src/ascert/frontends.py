"""Problem transformations: dual QP, quadratic penalty, LP, MPC demo, FLOP counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Convexity, MpQP, Region, WorkingSet, as_mpqp

FLOP_METHODS = ("nullspace", "rangespace", "fullspace")


def flop_model(ws, n: int, method: str = "nullspace") -> int:
    """Dense FLOP count for one search-direction computation.

    nullspace:  Cholesky of the (n-w) reduced Hessian plus two triangular solves
    rangespace: Cholesky of the w x w Schur complement, forming it with H^{-1}
    fullspace:  symmetric-indefinite factorization of the (n+w) KKT matrix
    """
    w = len(ws) if not isinstance(ws, int) else ws
    if method == "nullspace":
        r = n - w
        cost = r ** 3 / 3 + 2 * r ** 2
    elif method == "rangespace":
        cost = w ** 3 / 3 + 2 * w ** 2 + 2 * n * w
    elif method == "fullspace":
        s = n + w
        cost = s ** 3 / 3 + 2 * s ** 2
    else:
        raise ValueError(f"unknown FLOP method {method!r}")
    return int(round(cost))


@dataclass(frozen=True)
class DualRecovery:
    Hinv: np.ndarray
    A: np.ndarray
    f: np.ndarray
    f_theta: np.ndarray


def build_dual(mp: MpQP):
    """Dual mpQP in the multipliers, ``min 1/2 l'(A H^-1 A')l + (A H^-1 f(theta) + b(theta))'l, l >= 0``."""
    if mp.convexity is not Convexity.STRICTLY_CONVEX:
        raise ValueError("build_dual needs a strictly convex primal (H must be invertible)")
    Hinv = np.linalg.inv(mp.H)
    Hinv = 0.5 * (Hinv + Hinv.T)
    AHi = mp.A @ Hinv
    Hd = AHi @ mp.A.T
    m = mp.m
    dual = MpQP(
        H=Hd,
        f=AHi @ mp.f + mp.b,
        f_theta=AHi @ mp.f_theta + mp.W,
        A=-np.eye(m),
        b=np.zeros(m),
        W=np.zeros((m, mp.p)),
        theta0=mp.theta0,
    )
    return dual, DualRecovery(Hinv, mp.A.copy(), mp.f.copy(), mp.f_theta.copy())


def dual_start(dual: MpQP):
    """``lambda_0 = 0`` with every bound in the working set."""
    return np.zeros((dual.n, dual.p)), np.zeros(dual.n), WorkingSet(range(dual.m))


def recover_primal(rec: DualRecovery, theta, lam_star) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    f = rec.f + rec.f_theta @ theta
    return -rec.Hinv @ (f + rec.A.T @ np.asarray(lam_star, dtype=float))


def penalty_reform(mp: MpQP, rho: float = 1e4) -> MpQP:
    """Move ``A x + s = b(theta), s >= 0`` into the objective with weight ``rho/2``.

    Variables are stacked as ``(x, s)``; the only constraints left are
    ``-s <= 0``, which carry no parameter dependence.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    n, m, p = mp.n, mp.m, mp.p
    A = mp.A
    H = np.block([[mp.H + rho * A.T @ A, rho * A.T],
                  [rho * A, rho * np.eye(m)]])
    f = np.concatenate([mp.f - rho * A.T @ mp.b, -rho * mp.b])
    f_theta = np.vstack([mp.f_theta - rho * A.T @ mp.W, -rho * mp.W])
    Ac = np.hstack([np.zeros((m, n)), -np.eye(m)])
    return MpQP(H, f, f_theta, Ac, np.zeros(m), np.zeros((m, p)), mp.theta0)


def lp_frontend(c, c_theta, A, b, W, theta0: Region) -> MpQP:
    c = np.asarray(c, dtype=float).ravel()
    n = len(c)
    return as_mpqp(np.zeros((n, n)), c, c_theta, A, b, W, theta0)


def mpc_double_integrator(horizon: int = 3, q: float = 1.0, r: float = 0.1,
                          umax: float = 1.0, xmax=(1.5, 1.0)) -> MpQP:
    """Condensed input-constrained MPC for a sampled double integrator.

    ``theta`` is the initial state; only input bounds are present, so
    ``W = 0``. The terminal weight equals the stage weight.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    Ad = np.array([[1.0, 1.0], [0.0, 1.0]])
    Bd = np.array([[0.5], [1.0]])
    N = horizon
    # x_{t} = Ad^t x0 + sum_{s<t} Ad^{t-1-s} Bd u_s, t = 1..N
    Sx = np.vstack([np.linalg.matrix_power(Ad, t) for t in range(1, N + 1)])
    Su = np.zeros((2 * N, N))
    for t in range(1, N + 1):
        for s in range(t):
            Su[2 * (t - 1):2 * t, s] = (np.linalg.matrix_power(Ad, t - 1 - s) @ Bd).ravel()
    Qb = q * np.eye(2 * N)
    H = 2 * (Su.T @ Qb @ Su + r * np.eye(N))
    f_theta = 2 * Su.T @ Qb @ Sx
    A = np.vstack([np.eye(N), -np.eye(N)])
    b = umax * np.ones(2 * N)
    xmax = np.asarray(xmax, dtype=float)
    return as_mpqp(H, np.zeros(N), f_theta, A, b, np.zeros((2 * N, 2)),
                   Region.box(-xmax, xmax))
