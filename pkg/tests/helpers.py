"""Random instance generators and independent reference oracles for the tests."""
import itertools

import numpy as np

from ascert.frontends import lp_frontend
from ascert.model import MpQP, Region, WorkingSet, as_mpqp


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.linspace(1.0, cond, n)
    return Q @ np.diag(ev) @ Q.T


def random_mpqp(rng, n=3, m=5, p=2, wscale=1.0, box=1.0, fscale=3.0) -> MpQP:
    """Strictly convex mpQP with x = 0 strictly feasible on the box ``[-box, box]^p``."""
    H = random_spd(rng, n)
    A = rng.standard_normal((m, n))
    W = wscale * rng.standard_normal((m, p))
    b = box * np.abs(W).sum(axis=1) + rng.uniform(0.2, 1.5, m)
    f = rng.standard_normal(n)
    f_theta = fscale * rng.standard_normal((n, p))
    return as_mpqp(H, f, f_theta, A, b, W, Region.box(-box * np.ones(p), box * np.ones(p)))


def random_lp(rng, n=3, m=6, p=2, bounded=True):
    """Parametric LP with a vertex start ``x0(theta)`` feasible on ``[-1, 1]^p``."""
    while True:
        A = rng.standard_normal((max(m, n + 1), n))
        if bounded:
            A = np.vstack([A, np.eye(n), -np.eye(n)])
        B = sorted(rng.choice(A.shape[0], n, replace=False))
        if abs(np.linalg.det(A[B])) > 0.2:
            break
    m = A.shape[0]
    W = 0.3 * rng.standard_normal((m, p))
    bB = rng.standard_normal(n)
    Ai = np.linalg.inv(A[B])
    F0, G0 = Ai @ W[B], Ai @ bB
    b = A @ G0 + np.abs(A @ F0 - W).sum(axis=1) + rng.uniform(0.5, 2.0, m)
    b[B] = bB
    c = rng.standard_normal(n)
    c_theta = 0.5 * rng.standard_normal((n, p))
    mp = lp_frontend(c, c_theta, A, b, W, Region.box(-np.ones(p), np.ones(p)))
    return mp, WorkingSet(B), F0, G0


def _argmin_lowest(vals, idx, tol=1e-12):
    vals = np.asarray(vals)
    vmin = vals.min()
    return min(i for i, v in zip(idx, vals) if v <= vmin + tol * max(1.0, abs(vmin)))


def dantzig_simplex(mp, theta, basis, x, max_pivots=200):
    """Inequality-form simplex with Dantzig's rule; returns (signed 1-based changes, status).

    Works directly with the basis matrix ``A_B`` (no null-space machinery).
    """
    A, b, c = mp.A, mp.b_of(theta), mp.f_of(theta)
    B = list(basis)
    x = np.array(x, dtype=float)
    changes = []
    for _ in range(max_pivots):
        lam = -np.linalg.solve(A[B].T, c)
        if lam.min() >= 0:
            return changes, "optimal"
        l = _argmin_lowest(lam, B)
        e = np.zeros(len(B))
        e[B.index(l)] = 1.0
        d = -np.linalg.solve(A[B], e)          # leaves constraint l, keeps the rest active
        changes.append(-(l + 1))
        sig = A @ d
        s = b - A @ x
        cand = [i for i in range(mp.m) if i not in B and sig[i] > 1e-9]
        if not cand:
            return changes, "unbounded"
        j = _argmin_lowest([s[i] / sig[i] for i in cand], cand)
        x = x + s[j] / sig[j] * d
        B = [i for i in B if i != l] + [j]
        changes.append(j + 1)
    return changes, "max_iter"


def polytope_vertices(C, d, tol=1e-9):
    """All vertices of ``{C theta <= d}`` by brute-force enumeration of p-subsets."""
    m, p = C.shape
    verts = []
    for rows in itertools.combinations(range(m), p):
        M = C[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, d[list(rows)])
        if np.all(C @ v <= d + tol):
            verts.append(v)
    return np.array(verts).reshape(-1, p)


def kkt_residuals(mp, theta, x, lam, ws):
    """(stationarity, primal infeasibility, dual infeasibility) of a solver result."""
    idx = list(ws.indices)
    g = mp.H @ x + mp.f_of(theta) + mp.A[idx].T @ lam
    s = mp.b_of(theta) - mp.A @ x
    return np.abs(g).max(), max(0.0, -s.min()), max(0.0, -lam.min(initial=0.0))
