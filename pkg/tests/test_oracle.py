import itertools
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ascert.model import HalfPlane, QuadIneq, Region
from ascert.oracle import (EPS_REGION, ExternalOracle, FeasibilityVerdict, Verdict, decode_region,
                           encode_region, is_witness, min_quad_lower_bound, polyhedron_feasible,
                           prove_empty, quad_region_feasible)

from helpers import polytope_vertices


def test_interval_midpoint():
    v = polyhedron_feasible(Region([HalfPlane([1.0], 1.0), HalfPlane([-1.0], 0.0)]))
    assert v.verdict is Verdict.NONEMPTY
    assert v.radius == pytest.approx(0.5)
    assert v.witness == pytest.approx([0.5])


def test_contradictory_strict_pair():
    r = Region([HalfPlane([1.0], 0.0, True), HalfPlane([-1.0], 0.0, True)])
    assert polyhedron_feasible(r).verdict is Verdict.EMPTY


def test_thin_sliver_is_empty():
    r = Region([HalfPlane([1.0, 0.0], 1e-11), HalfPlane([-1.0, 0.0], 0.0)]
               + list(Region.box([-1, -1], [1, 1]).linear))
    assert polyhedron_feasible(r).empty


def test_trivial_rows():
    box = list(Region.box([0], [1]).linear)
    assert polyhedron_feasible(Region(box + [HalfPlane([0.0], -1.0)])).empty
    assert polyhedron_feasible(Region(box + [HalfPlane([0.0], 0.0, strict=True)])).empty
    assert not polyhedron_feasible(Region(box + [HalfPlane([0.0], 0.0)])).empty


def test_unbounded_region_nonempty():
    v = polyhedron_feasible(Region([HalfPlane([1.0, 1.0], 0.0)]))
    assert v.verdict is Verdict.NONEMPTY


def test_polyhedron_rejects_quadratics():
    with pytest.raises(ValueError):
        polyhedron_feasible(Region([], [QuadIneq(np.eye(1), [0.0], -1.0)]))


def random_polytope(seed, p):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    C = rng.standard_normal((k, p))
    d = rng.uniform(-0.8, 0.8, k)
    box = Region.box(-np.ones(p), np.ones(p))
    rows = [HalfPlane(c, di) for c, di in zip(C, d)] + list(box.linear)
    return Region(rows)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_sandwich_against_vertex_enumeration(seed, p):
    r = random_polytope(seed, p)
    C, d, _ = r.as_arrays()
    verts = polytope_vertices(C, d)
    v = polyhedron_feasible(r)
    if len(verts) == 0:
        assert v.empty
        return
    # distance from the vertex centroid to every facet is a certified inscribed radius
    c = verts.mean(axis=0)
    inner = np.min((d - C @ c) / np.linalg.norm(C, axis=1))
    if inner > 2 * EPS_REGION:
        assert v.verdict is Verdict.NONEMPTY
    if v.verdict is Verdict.NONEMPTY:
        assert r.contains(v.witness)
        assert v.radius >= inner - 1e-9


def test_quad_examples():
    box = Region.box([-0.5, -0.5], [0.5, 0.5])
    inside = box.intersect(quadratic=[QuadIneq(np.eye(2), [0, 0], -1.0)])
    v = quad_region_feasible(inside)
    assert v.verdict is Verdict.NONEMPTY and inside.contains(v.witness)
    # truly empty, and unbounded: no proof is possible, so the answer stays unknown
    never = Region([], [QuadIneq(np.eye(2), [0, 0], 1.0)])
    assert quad_region_feasible(never).verdict is Verdict.UNKNOWN
    # the same set over a bounded box is proven empty by branch and bound
    assert quad_region_feasible(box.intersect(quadratic=never.quadratic)).empty


def test_quad_without_quadratics_delegates():
    r = Region.box([0], [1])
    assert quad_region_feasible(r) == polyhedron_feasible(r)


def test_quad_empty_only_if_proven():
    # a disc that misses the box by a small gap: sampling cannot see it, the proof can
    box = Region.box([0, 0], [1, 1])
    q = QuadIneq(np.eye(2), [-6.0, -6.0], 18.0 - 4.0)   # (x-3)^2 + (y-3)^2 < 4
    r = box.intersect(quadratic=[q])
    assert quad_region_feasible(r, max_cells=0, refine=False).verdict is Verdict.UNKNOWN
    assert quad_region_feasible(r).empty


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_proof_never_contradicts_a_sample(seed):
    rng = np.random.default_rng(seed)
    box = Region.box([-1, -1], [1, 1])
    quads = [QuadIneq(rng.standard_normal((2, 2)), rng.standard_normal(2), rng.uniform(-0.5, 0.5))
             for _ in range(int(rng.integers(1, 3)))]
    r = box.intersect(quadratic=quads)
    verdict, w, _ = prove_empty(r)
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 41)), -1).reshape(-1, 2)
    if verdict is Verdict.EMPTY:
        assert not any(is_witness(r, th, 1e-6) for th in grid)
    if verdict is Verdict.NONEMPTY:
        assert r.contains(w)


def test_min_quad_lower_bound_examples():
    box = Region.box([-1, -1], [1, 1])
    assert min_quad_lower_bound(np.eye(2), box) == 0.0
    assert min_quad_lower_bound(np.zeros((2, 2)), box) == 0.0
    L = min_quad_lower_bound(-np.eye(2), box)
    assert L <= -2.0 + 1e-9 and L >= -2.0 * 1.01
    with pytest.raises(ValueError):
        min_quad_lower_bound(np.eye(2), Region([HalfPlane([1.0, 0.0], 0.0)]))


def test_min_quad_lower_bound_below_grid_minimum():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 4))
        lo = rng.uniform(-2, 1, p)
        hi = lo + rng.uniform(0.1, 2, p)
        M = rng.standard_normal((p, p))
        Q = 0.5 * (M + M.T)
        L = min_quad_lower_bound(Q, Region.box(lo, hi))
        axes = [np.linspace(a, b, 50 if p < 3 else 20) for a, b in zip(lo, hi)]
        pts = np.array(list(itertools.product(*axes)))
        grid_min = np.einsum("ij,jk,ik->i", pts, Q, pts).min()
        assert L <= grid_min + 1e-9


def test_region_text_round_trip():
    r = Region([HalfPlane([1.0, -2.0], 0.5, True)],
               [QuadIneq([[1.0, 0.5], [0.5, -1.0]], [0.1, 0.2], -0.3)])
    assert decode_region(encode_region(r, 2)) == r


def test_external_oracle_process():
    box = Region.box([-0.5, -0.5], [0.5, 0.5])
    r = box.intersect(quadratic=[QuadIneq(np.eye(2), [0, 0], -1.0)])
    oracle = ExternalOracle([sys.executable, "-c", "from ascert.oracle import oracle_main; oracle_main()"], 2)
    v = oracle(r)
    assert v.verdict is Verdict.NONEMPTY and r.contains(v.witness)
    # a lying oracle's witness is checked and downgraded
    liar = ExternalOracle([sys.executable, "-c", "print('NONEMPTY 5 5')"], 2)
    assert liar(r).verdict is Verdict.UNKNOWN
