"""Problem and region data types shared by the solver and the certifier.

Constraint indices are 0-based inside the package. Anything user-facing
(working-set logs, problem files, printed sequences) is 1-based.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

SYM_TOL = 1e-10
PSD_TOL = 1e-8
ZERO_ROW_TOL = 1e-12


class Convexity(str, enum.Enum):
    STRICTLY_CONVEX = "strictly_convex"
    SEMI_DEFINITE = "semi_definite"
    LP = "lp"


class Status(enum.IntEnum):
    IN_PROGRESS = 0
    CSP = 1
    OPTIMAL = 2
    # not one of the three states of the original tuple; marks rays with no
    # blocking constraint in the semi-definite extension
    UNBOUNDED = 3


# ---------------------------------------------------------------------------
# parameter-space inequalities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfPlane:
    """``c @ theta <= d`` (or ``<`` when ``strict``)."""

    c: np.ndarray
    d: float
    strict: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @classmethod
    def make(cls, c, d, strict=False, scale=1.0):
        """Build a normalized half-plane.

        Rows whose normal is negligible relative to ``scale`` are snapped to
        ``0 @ theta <= d`` so that structurally tautological (or
        contradictory) rows do not turn into random unit normals.
        """
        c = np.asarray(c, dtype=float).ravel()
        nrm = np.linalg.norm(c)
        if nrm <= ZERO_ROW_TOL * max(1.0, scale):
            d = float(d)
            if abs(d) <= ZERO_ROW_TOL * max(1.0, scale):
                d = 0.0
            return cls(np.zeros_like(c), d, strict)
        return cls(c / nrm, float(d) / nrm, strict)

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.c)

    def margin(self, theta) -> float:
        return self.d - float(self.c @ theta)

    def holds(self, theta, tol=0.0) -> bool:
        m = self.margin(theta)
        return m > -tol if self.strict else m >= -tol

    def __eq__(self, other):
        if not isinstance(other, HalfPlane):
            return NotImplemented
        return (self.strict == other.strict and self.d == other.d
                and np.array_equal(self.c, other.c))

    def __hash__(self):
        return hash((self.c.tobytes(), self.d, self.strict))


@dataclass(frozen=True)
class QuadIneq:
    """``theta' Q theta + R theta + S < 0`` (``<= 0`` when not strict)."""

    Q: np.ndarray
    R: np.ndarray
    S: float
    strict: bool = True

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).ravel())
        object.__setattr__(self, "S", float(self.S))

    def value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.Q @ theta + self.R @ theta + self.S)

    def grad(self, theta) -> np.ndarray:
        return 2.0 * self.Q @ theta + self.R

    def holds(self, theta, tol=0.0) -> bool:
        v = self.value(theta)
        return v < tol if self.strict else v <= tol

    def scale(self) -> float:
        return max(np.abs(self.Q).max(initial=0.0), np.abs(self.R).max(initial=0.0), abs(self.S))

    def __eq__(self, other):
        if not isinstance(other, QuadIneq):
            return NotImplemented
        return (self.strict == other.strict and self.S == other.S
                and np.array_equal(self.Q, other.Q) and np.array_equal(self.R, other.R))

    def __hash__(self):
        return hash((self.Q.tobytes(), self.R.tobytes(), self.S, self.strict))


@dataclass(frozen=True)
class Region:
    linear: tuple = ()
    quadratic: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(self.linear))
        object.__setattr__(self, "quadratic", tuple(self.quadratic))

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        rows = []
        eye = np.eye(len(lower))
        for i in range(len(lower)):
            rows.append(HalfPlane(eye[i], upper[i]))
            rows.append(HalfPlane(-eye[i], -lower[i]))
        return cls(rows)

    @property
    def dim(self) -> Optional[int]:
        for h in self.linear:
            return len(h.c)
        for q in self.quadratic:
            return len(q.R)
        return None

    @property
    def is_polyhedral(self) -> bool:
        return not self.quadratic

    def intersect(self, linear=(), quadratic=()) -> "Region":
        return Region(self.linear + tuple(linear), self.quadratic + tuple(quadratic))

    def linear_part(self) -> "Region":
        return Region(self.linear)

    def as_arrays(self):
        """Stacked ``(C, d, strict)`` of the linear part."""
        if not self.linear:
            p = self.dim or 0
            return np.zeros((0, p)), np.zeros(0), np.zeros(0, dtype=bool)
        C = np.array([h.c for h in self.linear])
        d = np.array([h.d for h in self.linear])
        s = np.array([h.strict for h in self.linear])
        return C, d, s

    def contains(self, theta, tol=0.0) -> bool:
        return region_contains(self, theta, tol)

    def boundary_distance(self, theta) -> float:
        """Smallest distance-like margin of ``theta`` to any defining surface."""
        theta = np.asarray(theta, dtype=float)
        best = np.inf
        for h in self.linear:
            if not h.is_trivial:
                best = min(best, abs(h.margin(theta)))
        for q in self.quadratic:
            g = np.linalg.norm(q.grad(theta))
            v = abs(q.value(theta))
            best = min(best, v / g if g > 0 else (0.0 if v == 0 else np.inf))
        return best


def region_contains(r: Region, theta, tol=0.0) -> bool:
    theta = np.asarray(theta, dtype=float).ravel()
    p = r.dim
    if p is not None and len(theta) != p:
        raise ValueError(f"theta has dimension {len(theta)}, region expects {p}")
    return (all(h.holds(theta, tol) for h in r.linear)
            and all(q.holds(theta, tol) for q in r.quadratic))


# ---------------------------------------------------------------------------
# working sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkingSet:
    """Sorted, duplicate-free tuple of 0-based constraint indices."""

    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate indices in working set {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @classmethod
    def from_one_based(cls, idx):
        return cls(tuple(int(i) - 1 for i in idx))

    def one_based(self):
        return tuple(i + 1 for i in self.indices)

    def complement(self, m):
        s = set(self.indices)
        return tuple(i for i in range(m) if i not in s)

    def add(self, j):
        if j in self.indices:
            raise ValueError(f"constraint {j + 1} already in the working set")
        return WorkingSet(self.indices + (j,))

    def remove(self, j):
        if j not in self.indices:
            raise ValueError(f"constraint {j + 1} not in the working set")
        return WorkingSet(tuple(i for i in self.indices if i != j))

    def position(self, j) -> int:
        return self.indices.index(j)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def __str__(self):
        if not self.indices:
            return "∅"
        return "{" + ",".join(str(i) for i in self.one_based()) + "}"


def replay(w0: WorkingSet, changes: Sequence[int]) -> WorkingSet:
    """Apply a signed 1-based change log to ``w0``."""
    ws = w0
    for c in changes:
        ws = ws.add(c - 1) if c > 0 else ws.remove(-c - 1)
    return ws


def format_sequence(w0: WorkingSet, changes: Sequence[int]) -> str:
    sets = [w0]
    for c in changes:
        sets.append(replay(sets[-1], [c]))
    return " -> ".join(str(s) for s in sets)


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MpQP:
    """``min 1/2 x'Hx + (f + f_theta theta)'x  s.t.  A x <= b + W theta``."""

    H: np.ndarray
    f: np.ndarray
    f_theta: np.ndarray
    A: np.ndarray
    b: np.ndarray
    W: np.ndarray
    theta0: Region = field(default_factory=Region)
    convexity: Optional[Convexity] = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        f = np.asarray(self.f, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        m = A.shape[0]
        b = np.asarray(self.b, dtype=float).ravel()
        p = self.theta0.dim
        if p is None:
            p = np.asarray(self.f_theta).reshape(n, -1).shape[1] if np.size(self.f_theta) else 0
        f_theta = np.asarray(self.f_theta, dtype=float)
        f_theta = f_theta.reshape(n, p) if f_theta.size else np.zeros((n, p))
        W = np.asarray(self.W, dtype=float)
        W = W.reshape(m, p) if W.size else np.zeros((m, p))
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "f_theta", f_theta)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "W", W)
        if self.convexity is None:
            object.__setattr__(self, "convexity", classify(self.H))

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.f_theta.shape[1]

    def f_of(self, theta):
        return self.f + self.f_theta @ np.asarray(theta, dtype=float)

    def b_of(self, theta):
        return self.b + self.W @ np.asarray(theta, dtype=float)

    def slack(self, theta, x):
        return self.b_of(theta) - self.A @ x

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.H, self.f, self.f_theta, self.A, self.b, self.W):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        for hp in self.theta0.linear:
            h.update(hp.c.tobytes())
            h.update(np.float64(hp.d).tobytes())
        return h.hexdigest()[:16]

    def with_theta0(self, theta0: Region) -> "MpQP":
        return replace(self, theta0=theta0)


def classify(H, psd_tol=PSD_TOL) -> Convexity:
    if not np.any(H):
        return Convexity.LP
    lam_min = np.linalg.eigvalsh(H).min() if H.size else 0.0
    return Convexity.STRICTLY_CONVEX if lam_min >= psd_tol else Convexity.SEMI_DEFINITE


def validate(mp: MpQP, sym_tol=SYM_TOL, psd_tol=PSD_TOL):
    """Return a list of diagnostics; empty when ``mp`` is well formed."""
    diags = []
    H = np.asarray(mp.H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return [f"H: expected square matrix, got shape {H.shape}"]
    n = H.shape[0]
    m, p = mp.A.shape[0], mp.f_theta.shape[1]
    if mp.f.shape != (n,):
        diags.append(f"f: expected length {n}, got {mp.f.shape}")
    if mp.f_theta.shape != (n, p):
        diags.append(f"f_theta: expected shape {(n, p)}, got {mp.f_theta.shape}")
    if mp.A.shape[1] != n:
        diags.append(f"A: expected {n} columns, got {mp.A.shape[1]}")
    if mp.b.shape != (m,):
        diags.append(f"b: expected length {m}, got {mp.b.shape}")
    if mp.W.shape != (m, p):
        diags.append(f"W: expected shape {(m, p)}, got {mp.W.shape}")
    for h in mp.theta0.linear:
        if len(h.c) != p:
            diags.append(f"theta0: half-plane of dimension {len(h.c)}, expected {p}")
            break
    if mp.theta0.quadratic:
        diags.append("theta0: must be polyhedral")
    if np.abs(H - H.T).max(initial=0.0) > sym_tol:
        diags.append("H not symmetric")
    if n and np.linalg.eigvalsh(0.5 * (H + H.T)).min() < -psd_tol:
        diags.append("H not PSD")
    return diags


def as_mpqp(H, f, f_theta, A, b, W, theta0=None, check=True) -> MpQP:
    """Build an ``MpQP`` from raw arrays, raising on malformed input."""
    if theta0 is None:
        theta0 = Region()
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    f_theta = np.asarray(f_theta, dtype=float)
    if A.size and (A.ndim != 2 or A.shape[1] != n):
        raise ValueError(f"A: expected {n} columns, got shape {A.shape}")
    m = A.shape[0] if A.size else 0
    if np.size(b) != m:
        raise ValueError(f"b: expected length {m}, got {np.size(b)}")
    if np.size(f) != n:
        raise ValueError(f"f: expected length {n}, got {np.size(f)}")
    if f_theta.size and f_theta.shape[0] != n:
        raise ValueError(f"f_theta: expected {n} rows, got shape {f_theta.shape}")
    if W.size and W.shape[0] != m:
        raise ValueError(f"W: expected {m} rows, got shape {W.shape}")
    p = theta0.dim or (f_theta.shape[1] if f_theta.ndim == 2 else 0) or (W.shape[1] if W.ndim == 2 else 0)
    if f_theta.size and f_theta.shape[1] != p:
        raise ValueError(f"f_theta: expected {p} columns, got shape {f_theta.shape}")
    if W.size and W.shape[1] != p:
        raise ValueError(f"W: expected {p} columns, got shape {W.shape}")
    mp = MpQP(H, f, f_theta if f_theta.size else np.zeros((n, p)), A.reshape(m, n),
              b, W if W.size else np.zeros((m, p)), theta0)
    if check:
        diags = validate(mp)
        if diags:
            raise ValueError("; ".join(diags))
    return mp


def contrived_mpqp() -> MpQP:
    """The 3-variable, 2-parameter test problem with quadratic partitioning."""
    H = [[0.97, 0.19, 0.15],
         [0.19, 0.98, 0.05],
         [0.15, 0.05, 0.99]]
    A = [[0.38, 2.20, 0.43],
         [0.49, 0.57, 0.22],
         [0.77, 0.46, 0.41]]
    b = [4.1, 3.7, 4.3]
    W = [[0.19, -0.89],
         [0.62, -1.54],
         [-0.59, -1.01]]
    f_theta = [[11.3, -44.3],
               [-3.66, -11.9],
               [-32.6, 7.81]]
    return as_mpqp(H, np.zeros(3), f_theta, A, b, W, Region.box([0, 0], [1, 1]))
