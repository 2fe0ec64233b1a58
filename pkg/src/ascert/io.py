"""Line-oriented text formats for problems and partitions.

Both formats use '#' comments, one keyword per section line and
whitespace-separated decimals. Serialization is canonical (shortest
round-trip float repr), so parse followed by serialize reproduces a
canonical file byte for byte.

Problem file::

    dims <n> <m> <p>
    H            (n rows)
    f            (1 row)
    f_theta      (n rows)
    A            (m rows)
    b            (1 row)
    W            (m rows)
    theta0 <count>   (rows "c1 .. cp d")
    start origin | start affine (n rows of F0, then 1 row of G0)
    w0 [i ...]   (1-based)
    option <key> <value>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certify import CertRegion, Partition
from .model import HalfPlane, MpQP, QuadIneq, Region, Status, WorkingSet, as_mpqp


def fmt(x) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0          # drop the sign of -0.0
    return repr(x)


def _row(v) -> str:
    return " ".join(fmt(x) for x in np.ravel(v))


class _Lines:
    """Comment-stripped, non-empty lines with a cursor."""

    def __init__(self, text: str):
        self.lines = []
        for no, raw in enumerate(text.splitlines(), 1):
            s = raw.split("#", 1)[0].strip()
            if s:
                self.lines.append((no, s))
        self.pos = 0

    def more(self):
        return self.pos < len(self.lines)

    def peek(self):
        return self.lines[self.pos][1].split()

    def next(self):
        if not self.more():
            raise ValueError("unexpected end of file")
        no, s = self.lines[self.pos]
        self.pos += 1
        self.lineno = no
        return s.split()

    def floats(self, width):
        toks = self.next()
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            raise ValueError(f"line {self.lineno}: expected numbers, got {' '.join(toks)!r}") from None
        if len(vals) != width:
            raise ValueError(f"line {self.lineno}: expected {width} values, got {len(vals)}")
        return vals

    def matrix(self, rows, cols):
        return np.array([self.floats(cols) for _ in range(rows)], dtype=float).reshape(rows, cols)

    def expect(self, key):
        toks = self.next()
        if toks[0] != key:
            raise ValueError(f"line {self.lineno}: expected section {key!r}, got {toks[0]!r}")
        return toks[1:]


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------


@dataclass
class ProblemFile:
    mp: MpQP
    F0: Optional[np.ndarray] = None      # None means the origin
    G0: Optional[np.ndarray] = None
    w0: WorkingSet = field(default_factory=WorkingSet)
    options: dict = field(default_factory=dict)

    def start(self):
        n, p = self.mp.n, self.mp.p
        F0 = np.zeros((n, p)) if self.F0 is None else self.F0
        G0 = np.zeros(n) if self.G0 is None else self.G0
        return F0, G0


def parse_problem(text: str, check=True) -> ProblemFile:
    L = _Lines(text)
    try:
        n, m, p = (int(v) for v in L.expect("dims"))
    except ValueError as e:
        raise ValueError(f"dims: {e}") from None
    H = (L.expect("H"), L.matrix(n, n))[1]
    f = (L.expect("f"), L.floats(n))[1]
    f_theta = (L.expect("f_theta"), L.matrix(n, p))[1]
    A = (L.expect("A"), L.matrix(m, n))[1]
    b = (L.expect("b"), L.floats(m) if m else [])[1]
    W = (L.expect("W"), L.matrix(m, p))[1]
    cnt = int(L.expect("theta0")[0])
    rows = [L.floats(p + 1) for _ in range(cnt)]
    theta0 = Region([HalfPlane(r[:p], r[p]) for r in rows])
    kind = L.expect("start")
    F0 = G0 = None
    if kind == ["affine"]:
        F0 = L.matrix(n, p)
        G0 = np.array(L.floats(n))
    elif kind != ["origin"]:
        raise ValueError(f"line {L.lineno}: start must be 'origin' or 'affine'")
    w0 = WorkingSet.from_one_based(int(i) for i in L.expect("w0"))
    if any(i < 0 or i >= m for i in w0):
        raise ValueError(f"w0: indices must lie in 1..{m}")
    options = {}
    while L.more():
        toks = L.expect("option")
        if len(toks) != 2:
            raise ValueError(f"line {L.lineno}: expected 'option <key> <value>'")
        options[toks[0]] = toks[1]
    mp = as_mpqp(np.array(H), np.array(f), f_theta, A, np.array(b), W, theta0, check=check)
    return ProblemFile(mp, F0, G0, w0, options)


def serialize_problem(pf: ProblemFile) -> str:
    mp = pf.mp
    out = [f"dims {mp.n} {mp.m} {mp.p}", "H"]
    out += [_row(r) for r in mp.H]
    out += ["f", _row(mp.f), "f_theta"]
    out += [_row(r) for r in mp.f_theta]
    out += ["A"] + [_row(r) for r in mp.A]
    out += ["b"] + ([_row(mp.b)] if mp.m else [])
    out += ["W"] + [_row(r) for r in mp.W]
    out.append(f"theta0 {len(mp.theta0.linear)}")
    out += [_row(np.append(h.c, h.d)) for h in mp.theta0.linear]
    if pf.F0 is None:
        out.append("start origin")
    else:
        out.append("start affine")
        out += [_row(r) for r in pf.F0]
        out.append(_row(pf.G0))
    out.append(" ".join(["w0"] + [str(i) for i in pf.w0.one_based()]))
    out += [f"option {k} {v}" for k, v in sorted(pf.options.items())]
    return "\n".join(out) + "\n"


def load_problem(path, check=True) -> ProblemFile:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), check)


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------


@dataclass
class PartitionFile:
    partition: Partition
    dims: tuple                      # (n, m, p)
    theta0: Region
    name: str = ""


def _opt_str(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if v is None:
        return "none"
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def serialize_partition(pf: PartitionFile, record_time=False) -> str:
    P = pf.partition
    n, m, p = pf.dims
    out = ["# partition", f"name {pf.name or '-'}", f"problem {P.digest or '-'}", f"dims {n} {m} {p}"]
    out += [f"option {k} {_opt_str(v)}" for k, v in sorted(P.options.items())]
    out.append(" ".join(["w0"] + [str(i) for i in P.w0.one_based()]))
    out.append(f"theta0 {len(pf.theta0.linear)}")
    out += [_row(np.append(h.c, h.d)) for h in pf.theta0.linear]
    out += [f"N_max {P.n_max}", f"N_reg {P.n_reg}"]
    if record_time and P.wall_time is not None:
        out.append(f"wall_time {P.wall_time:.6f}")
    for r in P.regions:
        out.append(f"region {r.id}")
        out.append(f"status {r.status.name.lower()}")
        out.append(f"k {r.k}")
        out.append(" ".join(["wschanges"] + [str(c) for c in r.wschanges]))
        out.append(f"flops {r.flops}")
        out.append(f"linear {len(r.region.linear)}")
        out += [_row(np.append(h.c, h.d)) + f" {int(h.strict)}" for h in r.region.linear]
        out.append(f"quadratic {len(r.region.quadratic)}")
        for q in r.region.quadratic:
            out += [_row(row) for row in q.Q]
            out.append(_row(q.R))
            out.append(f"{fmt(q.S)} {int(q.strict)}")
        if r.F is None:
            out.append("affine none")
        else:
            out.append("affine")
            out += [_row(row) for row in r.F]
            out.append(_row(r.G))
    return "\n".join(out) + "\n"


def _parse_option(v: str):
    if v == "none":
        return None
    try:
        return int(v)
    except ValueError:
        return float(v)


def parse_partition(text: str) -> PartitionFile:
    L = _Lines(text)
    name = L.expect("name")[0]
    digest = L.expect("problem")[0]
    n, m, p = (int(v) for v in L.expect("dims"))
    options = {}
    while L.peek()[0] == "option":
        k, v = L.next()[1:3]
        options[k] = _parse_option(v)
    for key in ("relax", "prune"):
        if key in options:
            options[key] = bool(options[key])
    w0 = WorkingSet.from_one_based(int(i) for i in L.expect("w0"))
    cnt = int(L.expect("theta0")[0])
    theta0 = Region([HalfPlane(r[:p], r[p]) for r in (L.floats(p + 1) for _ in range(cnt))])
    n_max = int(L.expect("N_max")[0])
    n_reg = int(L.expect("N_reg")[0])
    wall = None
    if L.more() and L.peek()[0] == "wall_time":
        wall = float(L.next()[1])
    regions = []
    while L.more():
        rid = int(L.expect("region")[0])
        status = Status[L.expect("status")[0].upper()]
        k = int(L.expect("k")[0])
        changes = tuple(int(c) for c in L.expect("wschanges"))
        flops = int(L.expect("flops")[0])
        lin = []
        for _ in range(int(L.expect("linear")[0])):
            v = L.floats(p + 2)
            lin.append(HalfPlane(v[:p], v[p], bool(int(v[p + 1]))))
        quad = []
        for _ in range(int(L.expect("quadratic")[0])):
            Q = L.matrix(p, p)
            R = L.floats(p)
            S, strict = L.floats(2)
            quad.append(QuadIneq(Q, R, S, bool(int(strict))))
        aff = L.expect("affine")
        F = G = None
        if aff != ["none"]:
            F = L.matrix(n, p)
            G = np.array(L.floats(n))
        regions.append(CertRegion(rid, status, k, changes, Region(lin, quad), F, G, flops))
    P = Partition(regions, w0, "" if digest == "-" else digest, options, wall, p)
    if P.n_max != n_max or P.n_reg != n_reg:
        raise ValueError(f"header says N_max={n_max} N_reg={n_reg}, "
                         f"regions give N_max={P.n_max} N_reg={P.n_reg}")
    return PartitionFile(P, (n, m, p), theta0, "" if name == "-" else name)


def load_partition(path) -> PartitionFile:
    with open(path, encoding="utf-8") as fh:
        return parse_partition(fh.read())
