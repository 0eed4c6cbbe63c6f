import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import refresh_low_bits as oracle_refresh
from skewsrb.errors import DegenerateFit, InfeasibleMeasures, InvalidParams, NotHyperbolic
from skewsrb.holder_lab import (
    QUARTER_TURN, MobiusCircleMap, allocate_arcs, build_system, drift, drift_samples, fixed_points,
    holder_fit, hyp_constant, identity_control, projective_action, refresh_low_bits, y_process, z_experiment,
)


@pytest.fixture(scope="module")
def system():
    return build_system(0.1, 0.05, 2.0)


def rotation(theta):
    return MobiusCircleMap(np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]))


# ------------------------------------------------------------------ Mobius circle maps


def test_det_validated():
    with pytest.raises(InvalidParams):
        MobiusCircleMap(np.diag([2.0, 1.0]))


@settings(max_examples=40, deadline=None)
@given(b=st.floats(-2, 2), c=st.floats(-2, 2), x=st.floats(0, 1, exclude_max=True))
def test_lift_matches_projective_action(b, c, x):
    M = np.array([[1.0, b], [c, 1.0 + b * c]])  # det 1
    H = MobiusCircleMap(M)
    img = projective_action(M, x)
    assert abs(np.mod(H(x) - img + 0.5, 1.0) - 0.5) <= 1e-12
    assert H(x + 1.0) == pytest.approx(H(x) + 1.0, abs=1e-12)


def test_hyperbolic_fixed_points_and_derivatives():
    H = MobiusCircleMap.hyperbolic(2.0)
    assert H.sink == pytest.approx(0.0, abs=1e-15) and H.source == pytest.approx(0.5, abs=1e-15)
    assert H.derivative(0.0) == pytest.approx(math.exp(-4.0), rel=1e-13)
    assert H.derivative(0.5) == pytest.approx(math.exp(4.0), rel=1e-13)
    B = MobiusCircleMap(QUARTER_TURN)
    assert float(B(0.0)) == pytest.approx(0.5, abs=1e-15)
    assert not B.is_hyperbolic and B.alpha is None


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_fixed_point_motion_against_finite_difference(alpha):
    H = MobiusCircleMap.hyperbolic(alpha)
    u, s, du, ds = fixed_points(H)
    assert u == pytest.approx(0.0, abs=1e-12) and s == pytest.approx(0.5, abs=1e-12)
    h = 1e-6
    up, sp, _, _ = fixed_points(H, h)
    um, sm, _, _ = fixed_points(H, -h)
    wrap = lambda v: np.mod(v + 0.5, 1.0) - 0.5  # the sink sits on the seam 0 = 1
    assert wrap(up - um) / (2 * h) == pytest.approx(du, rel=1e-7)
    assert wrap(sp - sm) / (2 * h) == pytest.approx(ds, rel=1e-6)
    assert du == pytest.approx(1.0 / (1.0 - math.exp(-2 * alpha)), rel=1e-12)
    assert ds == pytest.approx(1.0 / (1.0 - math.exp(2 * alpha)), rel=1e-12)


def test_fixed_points_require_hyperbolicity():
    with pytest.raises(NotHyperbolic):
        fixed_points(rotation(0.3))
    with pytest.raises(NotHyperbolic):
        fixed_points(MobiusCircleMap(np.eye(2)))
    with pytest.raises(NotHyperbolic):
        hyp_constant(rotation(0.3), [0.1], [1])


def test_hyp_constant_stable_at_double_rate():
    H = MobiusCircleMap.hyperbolic(1.0)
    rep = hyp_constant(H, [0.1, 0.2], [2, 4, 6, 8], rate=2.0)
    for delta in (0.1, 0.2):
        vals = [rep.table[(delta, n)] for n in (2, 4, 6, 8)]
        assert max(vals) / min(vals) < 1.05
    assert rep.c == max(rep.table.values())
    assert hyp_constant(H, [0.1], [1]).rate == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(InvalidParams):
        hyp_constant(H, [0.6], [1])


# ------------------------------------------------------------------ construction


def test_arc_allocation():
    c, b, gap = allocate_arcs(0.3, 0.2)
    assert (c, b, c + b + gap) == pytest.approx((0.72, 0.22, 1.0), abs=1e-15)
    with pytest.raises(InfeasibleMeasures):
        allocate_arcs(0.1, 0.3)
    with pytest.raises(InfeasibleMeasures):
        allocate_arcs(0.1, 0.1)


@settings(max_examples=40, deadline=None)
@given(kappa=st.floats(0.01, 0.9), frac=st.floats(0.01, 0.99))
def test_arc_allocation_meets_measure_bounds(kappa, frac):
    c0 = frac * kappa
    c, b, gap = allocate_arcs(kappa, c0)
    assert c > 1.0 - kappa and b > c0 and gap > 0
    assert c + b + gap == pytest.approx(1.0, abs=1e-14)


def test_feasible_system(system):
    c, b, union = system.region_measures()
    assert c > 1 - system.kappa and b > system.c0
    assert system.witness.q == 3
    assert system.eps == pytest.approx(min(system.witness.eps1, system.witness.eps2) / 20)
    assert system.K >= 1
    assert system.u0 == pytest.approx(0.0, abs=1e-15) and system.s0 == pytest.approx(0.5, abs=1e-15)


def test_witness_orbit_is_periodic(system):
    w = system.witness
    z = w.z
    for _ in range(w.q):
        z = (system.base_degree * z) % 1.0
    assert abs(np.mod(z - w.z + 0.5, 1.0) - 0.5) <= 1e-12
    assert w.eps1 > 0 and w.eps2 > 0


def test_blend_exact_on_regions(system):
    z = np.random.default_rng(0).random(20000)
    wgt = system.blend_weight(z)
    assert np.all(wgt[system.in_C(z)] == 0.0) and np.all(wgt[system.in_B(z)] == 1.0)
    a, b, c, d = system.matrices(z)
    assert np.max(np.abs(a * d - b * c - 1.0)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(z=st.floats(0, 1, exclude_max=True), x=st.floats(-3, 3), t=st.floats(-0.5, 0.5))
def test_fiber_lift_is_circle_lift(system, z, x, t):
    assert system.fiber_lift(z, x + 1.0, t) == pytest.approx(system.fiber_lift(z, x, t) + 1.0, abs=1e-12)


def test_fiber_lift_monotone_in_x_and_t(system):
    z = np.full(2001, 0.37)
    x = np.linspace(0, 1, 2001)
    y = system.fiber_lift(z, x)
    assert np.all(np.diff(y) > 0)
    assert np.all(system.fiber_lift(z, x, 0.01) > y)


# ------------------------------------------------------------------ low-bit refresh


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_refresh_matches_oracle(seed):
    z = np.random.default_rng(seed).random(64)
    a = refresh_low_bits(z, np.random.default_rng(seed + 1))
    b = oracle_refresh(z, np.random.default_rng(seed + 1))
    assert np.array_equal(a, b)
    assert np.max(np.abs(a - z)) <= 2.0**-40


# ------------------------------------------------------------------ drift


def test_drift_is_periodic_in_t(system):
    a = drift_samples(system, 0.13, 40, 2000, seed=5)
    b = drift_samples(system, 1.13, 40, 2000, seed=5)
    assert np.max(np.abs(b - a - 1.0)) <= 1e-12


def test_drift_monotone_pathwise(system):
    ts = [-0.05, -0.01, 0.0, 0.02, 0.05]
    rows = [drift_samples(system, t, 60, 3000, seed=9) for t in ts]
    for lo, hi in zip(rows, rows[1:]):
        assert np.all(hi >= lo)


def test_drift_deterministic_across_threads(system):
    a = drift(system, 0.02, 30, 40000, seed=3, threads=1)
    b = drift(system, 0.02, 30, 40000, seed=3, threads=4)
    assert (a.mean, a.se) == (b.mean, b.se)


def test_drift_independent_of_fiber_stream(system):
    a = drift(system, 0.0, 200, 20000, seed=1, x_stream=0)
    b = drift(system, 0.0, 200, 20000, seed=1, x_stream=7)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.se, b.se) + 1e-3


def test_identity_control_translates():
    sys = identity_control(build_system(0.3, 0.2, 2.0))
    r = drift(sys, 0.07, 25, 500)
    assert r.mean == pytest.approx(0.07, abs=1e-14)


def test_drift_validation(system):
    with pytest.raises(InvalidParams):
        drift(system, 0.0, 0, 10)
    with pytest.raises(InvalidParams):
        drift(system, 0.0, 5, 0)


# ------------------------------------------------------------------ Z and Y processes


def test_z_is_non_negative(system):
    res = z_experiment(system, 3, samples=8000, seed=2)
    assert res.count_negative == 0 and res.min_Z >= 0.0
    assert res.ci[0] <= res.fraction <= res.ci[1]
    assert res.N0 == 2 * 3 + 1 + system.K


def test_y_process_monotone(system):
    res = y_process(system, 3, n_blocks=6, samples=4000, seed=4)
    assert res.monotone and res.min_X >= 0.0
    assert np.all(res.increments >= 0.0)
    assert res.mean_Y[0] == 0.0


def test_z_validation(system):
    with pytest.raises(InvalidParams):
        z_experiment(system, 0, samples=10)
    with pytest.raises(InvalidParams):
        z_experiment(system, 2, delta=0.7, samples=10)


# ------------------------------------------------------------------ Holder fit


def test_control_slope_is_one(system):
    fit = holder_fit(identity_control(system), range(2, 6), samples=500, n_factor=2)
    assert fit.slope == pytest.approx(1.0, abs=1e-9)


def test_holder_slope_below_bound(system):
    fit = holder_fit(system, range(2, 8), samples=8000, n_factor=20, threads=4)
    assert 0.0 < fit.slope <= fit.bound
    assert fit.bound == pytest.approx(-6 * math.log(0.9) / 2.0)
    assert [r[0] for r in fit.rows] == list(range(2, 8))


def test_holder_fit_validation(system):
    with pytest.raises(InvalidParams):
        holder_fit(system, [3])
    with pytest.raises(InvalidParams):
        holder_fit(system, [2, 3, 5])
    with pytest.raises(DegenerateFit):
        holder_fit(system, [20, 21], samples=2, n_factor=1)
