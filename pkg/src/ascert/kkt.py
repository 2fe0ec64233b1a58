"""Null-space factorization of the equality-constrained subproblems.

For a working-set matrix ``A_k`` (full row rank) the KKT matrix

    [[H, A_k'], [A_k, 0]]

has inverse ``[[H*, T], [T', U]]`` whenever the reduced Hessian ``Z'HZ`` is
positive definite. Everything the solver and the certifier need is built
from ``Z``, ``Y`` and a Cholesky factor of ``Z'HZ``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .model import MpQP, WorkingSet

EPS_SING = 1e-9
RANK_TOL = 1e-10


class DegenerateWorkingSet(ValueError):
    pass


class SingularReducedHessian(ValueError):
    pass


@dataclass(frozen=True)
class KktFactors:
    Z: np.ndarray            # n x (n - r), orthonormal basis of null(A_k)
    Y: np.ndarray            # n x r, A_k Y = I
    H: np.ndarray
    reduced: np.ndarray      # Z'HZ
    chol: Optional[tuple]    # cho_factor of Z'HZ, None when singular
    singular: bool
    T: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def r(self):
        return self.Y.shape[1]

    def reduced_solve(self, v):
        if self.singular:
            raise SingularReducedHessian("reduced Hessian is singular; use singular_direction")
        if self.Z.shape[1] == 0:
            return np.zeros((0,) + np.shape(v)[1:])
        return sla.cho_solve(self.chol, v)

    @property
    def hstar(self) -> np.ndarray:
        """Dense ``H*``; only for tests and small problems."""
        return self.Z @ self.reduced_solve(self.Z.T)


def factorize(H, A_k, eps_sing=EPS_SING) -> KktFactors:
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    A_k = np.asarray(A_k, dtype=float).reshape(-1, n)
    r = A_k.shape[0]
    if r > n:
        raise DegenerateWorkingSet(f"degenerate working set: {r} constraints in {n} variables")
    if r == 0:
        Z, Y = np.eye(n), np.zeros((n, 0))
    else:
        Q, R = np.linalg.qr(A_k.T, mode="complete")
        diag = np.abs(np.diag(R[:r, :r]))
        if diag.min() <= RANK_TOL * max(1.0, np.abs(A_k).max()):
            raise DegenerateWorkingSet("degenerate working set: rows of A_k are linearly dependent")
        Z = Q[:, r:]
        # A_k = R1' Q1'  =>  Y = Q1 R1^{-T}
        Y = sla.solve_triangular(R[:r, :r], Q[:, :r].T).T
    M = Z.T @ H @ Z
    M = 0.5 * (M + M.T)
    singular = False
    chol = None
    if M.shape[0]:
        ev = np.linalg.eigvalsh(M)
        if ev.min() < eps_sing * max(1.0, ev.max()):
            singular = True
        else:
            chol = sla.cho_factor(M, lower=False)
    if singular:
        return KktFactors(Z, Y, H, M, None, True)
    if Z.shape[1]:
        MiZtH = sla.cho_solve(chol, Z.T @ H)
        T = Y - Z @ (MiZtH @ Y)
        U = Y.T @ H @ Z @ (MiZtH @ Y) - Y.T @ H @ Y
    else:
        T = Y.copy()
        U = -Y.T @ H @ Y
    return KktFactors(Z, Y, H, M, chol, False, T, U)


def factorize_ws(mp: MpQP, ws: WorkingSet, eps_sing=EPS_SING) -> KktFactors:
    return factorize(mp.H, mp.A[list(ws.indices)], eps_sing)


def hstar_apply(factors: KktFactors, v) -> np.ndarray:
    """``H* v`` without forming ``H*``."""
    v = np.asarray(v, dtype=float)
    if factors.singular:
        raise SingularReducedHessian("reduced Hessian is singular")
    if factors.Z.shape[1] == 0:
        return np.zeros_like(v)
    return factors.Z @ factors.reduced_solve(factors.Z.T @ v)


@dataclass(frozen=True)
class EqpSolution:
    Fstar: np.ndarray
    Gstar: np.ndarray
    Flam: np.ndarray
    Glam: np.ndarray


def parametric_eqp(mp: MpQP, ws: WorkingSet, factors: KktFactors) -> EqpSolution:
    """Affine maps ``x*(theta) = Fstar theta + Gstar`` and the matching multipliers."""
    if factors.singular:
        raise SingularReducedHessian(
            "parametric_eqp needs a nonsingular reduced Hessian; use singular_direction")
    idx = list(ws.indices)
    Wk, bk = mp.W[idx], mp.b[idx]
    T, U = factors.T, factors.U
    Fstar = -hstar_apply(factors, mp.f_theta) + T @ Wk
    Gstar = -hstar_apply(factors, mp.f) + T @ bk
    Flam = -T.T @ mp.f_theta + U @ Wk
    Glam = -T.T @ mp.f + U @ bk
    return EqpSolution(Fstar, Gstar, Flam, Glam)


def singular_direction(parent: Optional[KktFactors], removed_pos: int) -> np.ndarray:
    """Column ``removed_pos`` of the parent's ``T``.

    When removing row ``i`` of ``A_{k-1}`` makes the reduced Hessian
    singular, ``T_{k-1} e_i`` solves ``H p + A_k' lam = 0, A_k p = 0``. It
    satisfies ``a_i' p = 1``, i.e. it points *out* of the removed
    constraint; callers that want a descent direction negate it.
    """
    if parent is None or parent.T is None:
        raise SingularReducedHessian("no parent factorization for the singular direction")
    return parent.T[:, removed_pos].copy()
