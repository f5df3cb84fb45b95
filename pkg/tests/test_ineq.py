import json
import math

import numpy as np
import pytest

from shrinkerlab import ineq
from shrinkerlab.ineq import GroupSample, OmegaMembershipError, OmegaPoint, PoleError


def _random_sample(rng, n=None, m=None, pattern=None):
    n = int(rng.integers(1, 6)) if n is None else n
    m = int(rng.integers(1, 6)) if m is None else m
    if pattern is None:
        pattern = ineq._PATTERNS[rng.integers(len(ineq._PATTERNS))]
    return ineq.random_group_sample(rng, n, m, pattern=pattern)


def _hyperbola_t(v, r):
    return (v * v - 1.0 - r) / (1.0 + r)


# ---------------------------------------------------------------------------
# scalar domain


def test_omega_membership_examples():
    assert ineq.omega_membership(2.0, 1.5, 0.6) == (True, "member")
    ok, reason = ineq.omega_membership(2.0, 0.5, _hyperbola_t(2.0, 0.5))
    assert not ok and "t-bound undefined" in reason
    ok, reason = ineq.omega_membership(2.0, 0.2, _hyperbola_t(2.0, 0.2))
    assert not ok and "t-bound undefined" in reason
    ok, reason = ineq.omega_membership(2.0, 0.6, _hyperbola_t(2.0, 0.6))
    assert not ok and "lower bound" in reason
    ok, reason = ineq.omega_membership(3.5, 1.5, 0.6)
    assert not ok and "(1,3)" in reason
    ok, reason = ineq.omega_membership(2.0, 1.5, 0.7)
    assert not ok and "v^2" in reason


def test_omega_point_validation():
    pt = OmegaPoint(v=2.0, r=1.5, t=0.6)
    assert pt.tau == 0.5
    with pytest.raises(OmegaMembershipError, match="t-bound"):
        OmegaPoint(v=2.0, r=0.5, t=_hyperbola_t(2.0, 0.5))
    with pytest.raises(OmegaMembershipError, match="v\\^2"):
        OmegaPoint(v=2.0, r=1.5, t=0.61)


def test_F_paper_point():
    fb = ineq.F_value(OmegaPoint(v=2.0, r=1.5, t=0.6))
    assert fb.F == pytest.approx(-2.25, abs=1e-12)
    assert fb.F1 == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert fb.F2 == pytest.approx(1.0, abs=1e-12)
    assert fb.F == pytest.approx(fb.F2 / (fb.F1 * (fb.F2 - fb.F1)), abs=1e-10)


def test_F_factorization_identity_random():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 200:
        v = 1.0 + 2.0 * rng.random()
        tau = 0.5 * (v - 1.0)
        r = tau + (v * v - 1.0 - tau) * rng.random()
        t = _hyperbola_t(v, r)
        ok, _ = ineq.omega_membership(v, r, t)
        if not ok:
            continue
        fb = ineq.F_value(OmegaPoint(v=v, r=r, t=t))
        assert fb.F == pytest.approx(
            fb.F2 / (fb.F1 * (fb.F2 - fb.F1)), rel=1e-10, abs=1e-10
        )
        assert fb.F2 == pytest.approx(fb.H1 / fb.H2, rel=1e-9)
        checked += 1


def test_F_pole_on_t_bound_boundary():
    # at v=2, r=1, t=1 the hyperbola meets the t lower bound exactly and the
    # second denominator vanishes
    pt = OmegaPoint(v=2.0, r=1.0, t=1.0)
    with pytest.raises(PoleError):
        ineq.F_value(pt)


def test_H1_pinned_values():
    assert ineq.H1_value(1.0, 1.5) == pytest.approx(1.0, abs=1e-12)
    # at v = 1 the polynomial is 2 th (th - 3/2)^2 + 1
    for th in np.linspace(0.5, 2.0, 31):
        assert ineq.H1_value(1.0, th) == pytest.approx(
            2.0 * th * (th - 1.5) ** 2 + 1.0, abs=1e-12
        )
    # along v = th - 1 it collapses to th (th - 1)^2
    grid = np.linspace(2.0, 4.0, 4001)
    vals = np.array([ineq.H1_value(th - 1.0, th) for th in grid])
    direct = grid * (grid - 1.0) ** 2
    assert np.max(np.abs(vals - direct)) <= 1e-10
    k = int(np.argmin(vals))
    assert grid[k] == pytest.approx(2.0, abs=1e-12)
    assert vals[k] == pytest.approx(2.0, abs=1e-12)


def test_scalar_bounds_on_sampled_domain():
    rng = np.random.default_rng(8)
    f1_max = -math.inf
    f2_min = math.inf
    h1_min = math.inf
    h2_max = -math.inf
    count = 0
    while count < 500:
        v = 1.0 + 2.0 * rng.random()
        tau = 0.5 * (v - 1.0)
        r = tau + (v * v - 1.0 - tau) * rng.random()
        t = _hyperbola_t(v, r)
        if not ineq.omega_membership(v, r, t)[0]:
            continue
        try:
            fb = ineq.F_value(OmegaPoint(v=v, r=r, t=t))
        except PoleError:
            continue
        f1_max = max(f1_max, fb.F1)
        f2_min = min(f2_min, fb.F2)
        h1_min = min(h1_min, fb.H1)
        h2_max = max(h2_max, fb.H2)
        count += 1
    assert f1_max <= 2.0 + 1e-12
    assert f2_min >= 0.25 - 1e-12
    assert h1_min >= 1.0 - 1e-12
    assert h2_max <= 4.0 + 1e-12


def test_sup_F_sweep_bound_and_refinement():
    rep = ineq.sup_F_sweep(v_count=400, rt_resolution=1500, keep_per_v=True)
    assert rep.passed
    assert rep.worst_value <= -1.0 / 16.0 + 1e-9
    assert rep.samples >= 100_000
    assert rep.empty_slices == 0
    # uniformity: every populated v-slice stays below the bound
    per_v = rep.worst_per_v[np.isfinite(rep.worst_per_v)]
    assert np.max(per_v) <= -1.0 / 16.0 + 1e-9
    # refining 4x inside a window around the arg-max barely moves the worst
    lo = max(1.0 + 1e-9, rep.arg_v - 0.01)
    hi = min(3.0 - 1e-9, rep.arg_v + 0.01)
    fine = ineq.sup_F_sweep(v_count=200, rt_resolution=6000, v_lo=lo, v_hi=hi)
    assert fine.worst_value >= rep.worst_value - 1e-12
    assert abs(fine.worst_value - rep.worst_value) < 1e-4


def test_near_equality_probe_attains_bound():
    for v in (1.3, 1.5, 2.0, 2.5, 2.9):
        d = ineq.near_equality_probe(v)
        assert d["min_attains_bound"]
        assert d["bound_exceeds_v_squared"]
        assert d["all_above_bound"]
        assert d["arg_x"] == pytest.approx(d["x_star"], abs=1e-9)


# ---------------------------------------------------------------------------
# group samples


def test_group_sample_validation():
    with pytest.raises(ValueError, match="angle values"):
        GroupSample(n=3, m=2, lam=np.zeros(3), h=np.zeros((2, 3, 3)))
    with pytest.raises(ValueError, match="nonnegative"):
        GroupSample(n=3, m=2, lam=np.array([0.5, -0.1]), h=np.zeros((2, 3, 3)))
    with pytest.raises(ValueError, match="shape"):
        GroupSample(n=3, m=2, lam=np.zeros(2), h=np.zeros((2, 3, 2)))
    bad = np.zeros((2, 3, 3))
    bad[0, 0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        GroupSample(n=3, m=2, lam=np.zeros(2), h=bad)
    s = GroupSample(n=2, m=2, lam=np.array([1.0, 1.0]), h=np.zeros((2, 2, 2)))
    assert s.v == pytest.approx(2.0, rel=1e-14)
    assert s.subcritical
    assert not GroupSample(
        n=2, m=2, lam=np.array([3.0, 3.0]), h=np.zeros((2, 2, 2))
    ).subcritical


def test_groups_vanish_without_curvature():
    s = GroupSample(n=4, m=3, lam=np.array([0.5, 1.0, 0.2]), h=np.zeros((3, 4, 4)))
    gb = ineq.group_terms(s)
    assert gb.grouped_total == 0.0
    assert gb.direct_total == 0.0
    assert all(val == 0.0 for val in gb.I.values())
    assert all(val == 0.0 for val in gb.IV.values())


def test_group_presence_follows_index_ranges():
    rng = np.random.default_rng(4)
    # p = n: no tangent index beyond p, so groups I and II are absent
    square = _random_sample(rng, n=3, m=5, pattern="dense")
    gb = ineq.group_terms(square)
    assert gb.I == {} and gb.II == {}
    assert len(gb.III) == 1 and len(gb.IV) == 3
    # p <= 2: no fully-distinct triple inside p, so group III is absent
    thin = _random_sample(rng, n=5, m=2, pattern="dense")
    gb2 = ineq.group_terms(thin)
    assert gb2.III == {}
    assert len(gb2.I) == 3


def test_group_index_guards():
    rng = np.random.default_rng(9)
    s = _random_sample(rng, n=4, m=3, pattern="dense")
    with pytest.raises(IndexError):
        ineq.I_term(s, 1)
    with pytest.raises(IndexError):
        ineq.II_term(s, 1, 0, 1)
    with pytest.raises(IndexError):
        ineq.III_term(s, 0, 0, 1)
    with pytest.raises(IndexError):
        ineq.IV_term(s, 3)


def test_regrouping_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(300):
        s = _random_sample(rng)
        gb = ineq.group_terms(s)
        scale = max(1.0, abs(gb.direct_total))
        assert abs(gb.grouped_total - gb.direct_total) <= 1e-10 * scale


def test_group_bounds_random_subcritical():
    rng = np.random.default_rng(1)
    for _ in range(300):
        s = _random_sample(rng)
        report = ineq.group_bounds_check(s)
        assert report.min_margin >= -1e-12
        assert report.counterexample is None


def test_group_bounds_need_subcritical():
    s = GroupSample(n=2, m=2, lam=np.array([3.0, 3.0]), h=np.zeros((2, 2, 2)))
    with pytest.raises(ValueError, match="subcritical"):
        ineq.group_bounds_check(s)


def test_II_margin_tight_at_zero_angles():
    # with lambda = 0 the slope is 1 and each II margin collapses exactly
    h = np.zeros((2, 3, 3))
    h[1, 2, 0] = h[1, 0, 2] = 0.7
    h[0, 2, 1] = h[0, 1, 2] = -0.4
    s = GroupSample(n=3, m=2, lam=np.zeros(2), h=h)
    report = ineq.group_bounds_check(s)
    assert report.II[(2, 0, 1)] == pytest.approx(0.0, abs=1e-14)


def test_master_margin_trivial_cases():
    h = np.random.default_rng(3).normal(size=(2, 3, 3))
    h = 0.5 * (h + np.swapaxes(h, 1, 2))
    zero_angles = GroupSample(n=3, m=2, lam=np.zeros(2), h=h)
    assert ineq.master_margin(zero_angles) == 0.0
    no_curv = GroupSample(n=3, m=2, lam=np.array([0.4, 1.1]), h=np.zeros((2, 3, 3)))
    assert ineq.master_margin(no_curv) == 0.0


def test_master_margin_random_and_hierarchy():
    rng = np.random.default_rng(6)
    for _ in range(300):
        s = _random_sample(rng)
        margin, record = ineq.master_inequality_check(s)
        assert margin >= -1e-12
        assert record is None
        # whenever the four group bounds hold the master bound must follow
        if ineq.group_bounds_check(s).min_margin >= -1e-12:
            assert margin >= -1e-12


def test_master_margin_near_critical_schedule():
    rng = np.random.default_rng(7)
    for v_target in ineq.V_SCHEDULE:
        for _ in range(40):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 6))
            s = ineq.random_group_sample(rng, n, m, v_target=v_target)
            assert s.v == pytest.approx(v_target, rel=1e-9)
            assert ineq.master_margin(s) >= -1e-12


def test_batched_margins_match_scalar():
    rng = np.random.default_rng(12)
    lam = []
    h = []
    for _ in range(64):
        s = ineq.random_group_sample(rng, 4, 3)
        lam.append(s.lam)
        h.append(s.h)
    batched, v = ineq.batched_master_margins(np.array(lam), np.array(h))
    for i in range(64):
        s = GroupSample(n=4, m=3, lam=lam[i], h=h[i])
        assert batched[i] == pytest.approx(ineq.master_margin(s), rel=1e-10, abs=1e-10)
        assert v[i] == pytest.approx(s.v, rel=1e-12)


def test_longdouble_recheck_consistent():
    rng = np.random.default_rng(13)
    for _ in range(20):
        s = _random_sample(rng, pattern="dense")
        a = ineq.master_margin(s)
        b = ineq.longdouble_master_margin(s)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_adversarial_search_finds_no_violation():
    report = ineq.adversarial_margin_search(seed=5, restarts=300, iters=30)
    assert report.passed
    assert report.worst_margin >= -1e-12
    assert report.violations == []
    assert report.evaluations > report.restarts


def test_search_is_deterministic_in_seed():
    a = ineq.adversarial_margin_search(seed=21, restarts=60, iters=10)
    b = ineq.adversarial_margin_search(seed=21, restarts=60, iters=10)
    assert a.worst_margin == b.worst_margin


# ---------------------------------------------------------------------------
# transform and plumbing


def test_h_transform_values():
    lh, bound = ineq.h_transform_identity(0.0, 0.0, 0.0)
    assert lh == 0.0 and bound is None
    lh, _ = ineq.h_transform_identity(math.log(2.0), 1.0, 0.0)
    assert lh == pytest.approx(16.0 * 2.0**16, rel=1e-12)
    lh, bound = ineq.h_transform_identity(math.log(2.0), 1.0, 0.0, b2=0.0, v=2.0)
    assert bound == 0.0
    lh, bound = ineq.h_transform_identity(math.log(2.0), 1.0, 0.25, b2=3.0, v=2.0)
    assert lh == pytest.approx(16.0 * 2.0**16 * 5.0, rel=1e-12)
    assert bound == pytest.approx(0.5 * 16.0 * 2.0**16 * 1.0 * 3.0, rel=1e-12)


def test_certificate_and_dump_json():
    rep = ineq.sup_F_sweep(v_count=50, rt_resolution=200)
    text = ineq.sweep_certificate_json(rep, seed=123)
    data = json.loads(text)
    assert data["bound"] == -0.0625
    assert data["worst_value"] == rep.worst_value
    assert data["samples"] == rep.samples
    assert data["seed"] == 123

    rng = np.random.default_rng(14)
    s = _random_sample(rng, n=3, m=2, pattern="dense")
    dump = ineq.counterexample_dump(s, {"master_margin": 0.5})
    rt = json.loads(json.dumps(dump))
    assert rt["C1"] == 16.0
    assert rt["master_margin"] == 0.5
    assert np.array(rt["sample"]["h"]).shape == (2, 3, 3)
    assert rt["sample"]["v"] == pytest.approx(s.v)
