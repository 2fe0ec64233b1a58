import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import ascert.certify as cert
from ascert.certify import (CertContext, CertificationError, CertOptions, InfeasibleStartMap,
                            MaxIterationsExceeded, RegionTuple, certify, initial_tuple, mode_a,
                            mode_b, prune_infeasible_iterates, relax_quadratic, step,
                            surrogate_maps)
from ascert.frontends import build_dual, dual_start, mpc_double_integrator
from ascert.io import PartitionFile, serialize_partition
from ascert.model import HalfPlane, QuadIneq, Region, Status, WorkingSet, as_mpqp, contrived_mpqp
from ascert.solver import solve
from ascert.validation import validate_partition

from helpers import dantzig_simplex, random_lp, random_mpqp


def grid(lo, hi, n=50):
    u = np.linspace(lo, hi, n + 2)[1:-1]
    return np.stack(np.meshgrid(u, u), -1).reshape(-1, 2)


def descend(ctx, theta):
    """Tuples along the branch of the certification tree that contains ``theta``."""
    t = initial_tuple(ctx)
    path = [t]
    while t.status not in (Status.OPTIMAL, Status.UNBOUNDED):
        kids = [c for c in step(t, ctx) if c.region.contains(theta)]
        assert len(kids) == 1
        t = kids[0]
        path.append(t)
    return path


def one_dim_csp(b, W):
    """n = 1, H = 1: at the CSP of {x <= b + W theta} the multiplier is -(b + W theta)."""
    m = len(b)
    mp = as_mpqp(np.eye(m), np.zeros(m), np.zeros((m, 2)), np.eye(m), b, W,
                 Region.box([0, 0], [1, 1]))
    ctx = CertContext(mp, WorkingSet(), np.zeros((m, 2)), np.zeros(m), CertOptions())
    return mp, ctx


def csp_tuple(mp, ctx, ws):
    eqp = cert.parametric_eqp(mp, ws, ctx.factors(ws))
    return RegionTuple(mp.theta0, ws, eqp.Fstar, eqp.Gstar, Status.CSP, 1)


# ---------------------------------------------------------------------------
# Mode A
# ---------------------------------------------------------------------------


def test_mode_a_sign_split():
    mp, ctx = one_dim_csp([0.5], [[-1.0, 0.0]])       # lambda = theta1 - 0.5
    kids = mode_a(csp_tuple(mp, ctx, WorkingSet((0,))), ctx)
    removal = [k for k in kids if k.status is Status.IN_PROGRESS]
    optimal = [k for k in kids if k.status is Status.OPTIMAL]
    assert len(removal) == 1 and len(optimal) == 1
    assert removal[0].ws == WorkingSet() and removal[0].wschanges == (-1,)
    assert removal[0].k == 1 and optimal[0].k == 1
    for th in grid(0, 1, 20):
        assert removal[0].region.contains(th) == (th[0] < 0.5)
        assert optimal[0].region.contains(th) == (th[0] >= 0.5)


def test_mode_a_empty_working_set():
    mp, ctx = one_dim_csp([0.5], [[-1.0, 0.0]])
    kids = mode_a(csp_tuple(mp, ctx, WorkingSet()), ctx)
    assert len(kids) == 1 and kids[0].status is Status.OPTIMAL
    assert kids[0].region == mp.theta0


def test_mode_a_tie_goes_to_lowest_index():
    mp, ctx = one_dim_csp([0.5, 0.5], [[-1.0, 0.0], [-1.0, 0.0]])   # identical multipliers
    kids = mode_a(csp_tuple(mp, ctx, WorkingSet((0, 1))), ctx)
    changes = sorted(k.wschanges for k in kids if k.status is Status.IN_PROGRESS)
    assert changes == [(-1,)]
    # the point solver agrees: from x at the CSP it drops constraint 1 first
    theta = np.array([0.2, 0.7])
    x = np.full(2, 0.5 - theta[0])
    log = solve(mp, theta, x0=x, w0=WorkingSet((0, 1)))
    assert log.wschanges[0] == -1


# ---------------------------------------------------------------------------
# Mode B
# ---------------------------------------------------------------------------


def test_case1_center_branch_reaches_csp_with_ws3():
    mp = contrived_mpqp()
    ctx = CertContext(mp, WorkingSet(), np.zeros((3, 2)), np.zeros(3), CertOptions())
    path = descend(ctx, np.array([0.5, 0.5]))
    after = [t for t in path if t.wschanges == (1, 3, -1)]
    assert after[0].status is Status.IN_PROGRESS and after[0].k == 3 and not after[0].case2
    csp = [t for t in after if t.status is Status.CSP]
    assert csp and csp[0].ws == WorkingSet((2,)) and csp[0].k == 4
    assert path[-1].status is Status.OPTIMAL and path[-1].k == 4


def test_single_inactive_constraint_two_children():
    # x <= 0.5 - theta1 with the unconstrained minimizer at x = theta2
    mp = as_mpqp(np.eye(1), [0.0], [[0.0, -1.0]], [[1.0]], [0.5], [[-1.0, 0.0]],
                 Region.box([0, 0], [1, 1]))
    ctx = CertContext(mp, WorkingSet(), np.zeros((1, 2)), np.zeros(1), CertOptions())
    t = RegionTuple(mp.theta0, WorkingSet(), np.zeros((1, 2)), np.zeros(1))
    kids = mode_b(t, ctx)
    assert sorted(k.status for k in kids) == [Status.IN_PROGRESS, Status.CSP]
    for th in grid(0, 1, 25):
        if abs(th.sum() - 0.5) < 1e-9:
            continue
        inside = [k for k in kids if k.region.contains(th)]
        assert len(inside) == 1
        assert (inside[0].status is Status.IN_PROGRESS) == (th[1] > 0.5 - th[0])


def test_first_iteration_children_cover_box():
    mp = contrived_mpqp()
    ctx = CertContext(mp, WorkingSet(), np.zeros((3, 2)), np.zeros(3), CertOptions())
    kids = mode_b(initial_tuple(ctx), ctx)
    assert {k.wschanges for k in kids} <= {(1,), (2,), (3,), ()}
    for th in grid(0, 1):
        inside = [k for k in kids if k.region.contains(th)]
        if min(k.region.boundary_distance(th) for k in kids) < 1e-6:
            continue
        assert len(inside) == 1
        log = solve(mp, th)
        first = tuple(log.wschanges[:1]) if log.trace[0][3] == "add" else ()
        assert inside[0].wschanges == first


def test_case2_polyhedral_when_w_and_f0_vanish():
    P = certify(mpc_double_integrator())
    assert all(not r.region.quadratic for r in P.regions)


def test_start_at_csp_skips_case2(monkeypatch):
    calls = []
    orig = cert.mode_b_case2
    monkeypatch.setattr(cert, "mode_b_case2", lambda t, ctx: calls.append(t) or orig(t, ctx))
    dual, _ = build_dual(contrived_mpqp())
    F0, G0, w0 = dual_start(dual)
    P = certify(dual, w0, F0, G0)
    assert (P.n_max, P.n_reg) == (4, 5)
    assert calls == []


def test_surrogate_argmin_matches_solver_additions():
    checked = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        mp = random_mpqp(rng, n=3, m=8, p=2, fscale=10.0)
        ctx = CertContext(mp, WorkingSet(), np.zeros((3, 2)), np.zeros(3), CertOptions())
        for theta in rng.uniform(-1, 1, (5, 2)):
            log = solve(mp, theta)
            for (ws, x, p, kind), change in zip(log.trace, log.wschanges):
                if kind != "add":
                    break
                a, c, e, d = surrogate_maps(ctx, ws)
                s_star = mp.b_of(theta) - mp.A @ (x + p)
                blocking = [i for i in ws.complement(mp.m) if s_star[i] < 0]
                ratio = [(a[i] @ theta + c[i]) / (e[i] @ theta + d[i]) for i in blocking]
                assert blocking[int(np.argmin(ratio))] == change - 1
                checked += 1
    assert checked > 20


def test_affine_iterates_after_removal():
    mp = contrived_mpqp()
    ctx = CertContext(mp, WorkingSet(), np.zeros((3, 2)), np.zeros(3), CertOptions())
    P = certify(mp)
    worst, checked = 0.0, 0
    rng = np.random.default_rng(0)
    for r in P.regions:
        if not any(c < 0 for c in r.wschanges):
            continue
        pts = [th for th in rng.uniform(0, 1, (4000, 2)) if r.region.contains(th)][:3]
        for th in pts:
            log = solve(mp, th)
            for t in descend(ctx, th):
                if t.case2 or t.status is not Status.IN_PROGRESS:
                    continue
                x_solver = log.trace[t.k][1]
                worst = max(worst, np.abs(t.F @ th + t.G - x_solver).max())
                checked += 1
    assert checked >= 3
    assert worst <= 1e-8


# ---------------------------------------------------------------------------
# singular / LP
# ---------------------------------------------------------------------------


def lp_case(seed, bounded):
    rng = np.random.default_rng(seed)
    return random_lp(rng, n=int(rng.integers(2, 4)), m=4, bounded=bounded)


@pytest.mark.parametrize("seed", range(10))
def test_lp_certificate_matches_simplex(seed):
    mp, B, F0, G0 = lp_case(seed, bounded=seed % 2 == 0)
    P = certify(mp, B, F0, G0)
    rng = np.random.default_rng(100 + seed)
    for th in rng.uniform(-1, 1, (200, 2)):
        hits = P.containing(th)
        if not hits:
            assert min(r.region.boundary_distance(th) for r in P.regions) < 1e-6
            continue
        changes, status = dantzig_simplex(mp, th, B.indices, F0 @ th + G0)
        assert len(hits) == 1
        assert list(hits[0].wschanges) == changes
        assert hits[0].status.name.lower() == status


def test_singular_unbounded_single_child():
    # min theta x1 + x2 over x >= 0, -x1 + x2 <= 1, from the origin vertex
    from ascert.frontends import lp_frontend
    lp = lp_frontend([0.0, 1.0], [[1.0], [0.0]], [[-1.0, 0.0], [0.0, -1.0], [-1.0, 1.0]],
                     [0.0, 0.0, 1.0], np.zeros((3, 1)), Region.box([-1.0], [-0.1]))
    P = certify(lp, WorkingSet((0, 1)), np.zeros((2, 1)), np.zeros(2))
    assert P.n_reg == 1 and P.regions[0].status is Status.UNBOUNDED
    assert P.regions[0].wschanges == (-1,) and P.regions[0].k == 2


def test_singular_single_candidate_keeps_region():
    from ascert.frontends import lp_frontend
    # same LP with x1 <= 2: leaving x1 >= 0 can only hit constraint 4
    lp = lp_frontend([0.0, 1.0], [[1.0], [0.0]],
                     [[-1.0, 0.0], [0.0, -1.0], [-1.0, 1.0], [1.0, 0.0]],
                     [0.0, 0.0, 1.0, 2.0], np.zeros((4, 1)), Region.box([-1.0], [-0.1]))
    P = certify(lp, WorkingSet((0, 1)), np.zeros((2, 1)), np.zeros(2))
    assert P.n_reg == 1 and P.regions[0].wschanges == (-1, 4)
    assert P.regions[0].region.contains([-0.5])


def test_singular_at_start_is_an_error():
    from ascert.frontends import lp_frontend
    lp = lp_frontend([1.0, 1.0], np.zeros((2, 1)), -np.eye(2), np.zeros(2), np.zeros((2, 1)),
                     Region.box([-1.0], [1.0]))
    with pytest.raises(CertificationError):
        certify(lp)


# ---------------------------------------------------------------------------
# relaxation and pruning
# ---------------------------------------------------------------------------


def test_relax_quadratic_examples():
    box = Region.box([-1, -1], [1, 1])
    h = relax_quadratic(QuadIneq(np.zeros((2, 2)), [1.0, 0.0], -0.5), box)
    assert np.allclose(h.c, [1.0, 0.0]) and h.d == pytest.approx(0.5)
    h = relax_quadratic(QuadIneq(np.eye(2), [0.0, 2.0], -0.5), box)
    assert np.allclose(h.c, [0.0, 1.0]) and h.d == pytest.approx(0.25)
    with pytest.raises(CertificationError, match="cannot bound quadratic term"):
        relax_quadratic(QuadIneq(np.eye(2), [0.0, 1.0], 0.0), Region([HalfPlane([1.0, 0.0], 0.0)]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_relaxation_is_outer(seed):
    rng = np.random.default_rng(seed)
    box = Region.box([-1, -1], [1, 1])
    M = rng.standard_normal((2, 2))
    q = QuadIneq(M + M.T, rng.standard_normal(2), rng.uniform(-1, 1))
    h = relax_quadratic(q, box)
    for th in rng.uniform(-1, 1, (200, 2)):
        if q.holds(th):
            assert h.holds(th, 1e-12)


def test_relaxed_contrived_is_sound():
    mp = contrived_mpqp()
    P = certify(mp, opts=CertOptions(relax_quadratics=True))
    assert P.n_max >= 4
    assert all(not r.region.quadratic for r in P.regions)
    rep = validate_partition(mp, P, 1000, exact=False)
    assert rep.ok, rep.summary()


def test_pruning_in_exact_mode_changes_nothing():
    mp = contrived_mpqp()
    a = certify(mp)
    b = certify(mp, opts=CertOptions(prune_infeasible_iterates=True))
    assert [r.wschanges for r in a.regions] == [r.wschanges for r in b.regions]


def test_pruning_never_adds_regions_when_relaxed():
    mp = contrived_mpqp()
    a = certify(mp, opts=CertOptions(relax_quadratics=True))
    b = certify(mp, opts=CertOptions(relax_quadratics=True, prune_infeasible_iterates=True))
    assert b.n_reg <= a.n_reg


def test_prune_hand_built_infeasible_region():
    mp, ctx = one_dim_csp([0.5], [[-1.0, 0.0]])
    # claim the CSP of {x1 <= 0.5 - theta1} for the problem with an extra row x1 <= -1
    mp2 = as_mpqp(np.eye(1), [0.0], [[0.0, 0.0]], [[1.0], [1.0]], [0.5, -1.0],
                  [[-1.0, 0.0], [0.0, 0.0]], Region.box([0, 0], [1, 1]), check=True)
    ctx2 = CertContext(mp2, WorkingSet((0,)), [[-1.0, 0.0]], [0.5], CertOptions())
    t = csp_tuple(mp2, ctx2, WorkingSet((0,)))
    assert prune_infeasible_iterates(t, ctx2) is None
    t_ok = csp_tuple(mp, ctx, WorkingSet((0,)))
    assert prune_infeasible_iterates(t_ok, ctx) is not None


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def test_all_slack_gives_single_region():
    mp = as_mpqp(np.eye(2), np.zeros(2), 0.1 * np.eye(2), np.eye(2), [10.0, 10.0],
                 np.zeros((2, 2)), Region.box([-1, -1], [1, 1]))
    P = certify(mp)
    assert P.n_reg == 1 and P.regions[0].k == 1 and P.regions[0].wschanges == ()


def test_max_k_guard():
    with pytest.raises(MaxIterationsExceeded):
        certify(contrived_mpqp(), opts=CertOptions(max_k=2))


def test_infeasible_start_map():
    with pytest.raises(InfeasibleStartMap):
        certify(contrived_mpqp(), G0=np.array([10.0, 0.0, 0.0]))


def test_options_validated():
    with pytest.raises(ValueError):
        CertOptions(eps_region=0.0)
    with pytest.raises(ValueError):
        CertOptions(max_k=0)


def _bytes(mp, **kw):
    P = certify(mp, opts=CertOptions(**kw))
    return serialize_partition(PartitionFile(P, (mp.n, mp.m, mp.p), mp.theta0, "x"))


def test_deterministic_and_worker_independent():
    mp = contrived_mpqp()
    assert _bytes(mp) == _bytes(mp) == _bytes(mp, workers=4)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6))
def test_random_instances_match_solver(seed):
    rng = np.random.default_rng(seed)
    mp = random_mpqp(rng, n=int(rng.integers(2, 4)), m=int(rng.integers(2, 5)), p=2, fscale=10.0)
    P = certify(mp)
    rep = validate_partition(mp, P, 300, seed=seed % 1000)
    assert rep.ok, rep.summary()
