import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from skewsrb.errors import InvalidParams, NewtonDivergence
from skewsrb.skew_map import (
    FrozenMap, SkewEndomorphism, TorusField, TorusPoint, TrigPoly, cocycle, eval_map, inverse_branches,
    make_perturbation, parse_field_terms, parse_pairs, torus_distance,
)

PHI = TrigPoly((0.0, 0.1))  # 0.1 cos(2 pi x)
GENERIC = SkewEndomorphism(2, PHI)
# small field with a horizontal component so the x-coordinates move too
OBLIQUE = TorusField(((0, 1, 0.0, 0.3),), ((1, 0, 0.2, 0.0), (0, 1, 0.0, 1.0)))


def close_on_torus(p, q, tol):
    return torus_distance(p.x, p.y, q.x, q.y) <= tol


# ------------------------------------------------------------------ eval


@pytest.mark.parametrize("ell,phi,z,expected", [
    (2, TrigPoly(), (0.25, 0.5), (0.5, 0.5)),
    (2, PHI, (0.0, 0.0), (0.0, 0.1)),
    (3, TrigPoly(), (0.4, 0.9), (0.2, 0.9)),
])
def test_eval_examples(ell, phi, z, expected):
    w = eval_map(SkewEndomorphism(ell, phi), 0.0, TorusPoint(*z))
    assert close_on_torus(w, TorusPoint(*expected), 1e-15)


def test_zero_amplitude_is_base_map():
    f = SkewEndomorphism(2, PHI, TorusField.vertical_profile())
    rng = np.random.default_rng(1)
    x, y = rng.random(100), rng.random(100)
    a = f.at(0.0).forward(x, y)
    b = f.rot.forward(x, y)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_torus_point_canonical():
    p = TorusPoint(1.25, -0.25)
    assert (p.x, p.y) == (0.25, 0.75)


def test_ell_validated():
    with pytest.raises(InvalidParams):
        SkewEndomorphism(1, PHI)


def test_derivative_bound_dominates_grid_max():
    phi = TrigPoly((0.0, 0.1, 0.0, -0.02), (0.0, 0.0, 0.05))
    assert phi.derivative_grid_max() <= phi.derivative_bound()
    assert PHI.derivative_bound() == pytest.approx(0.2 * np.pi, rel=1e-15)


# ------------------------------------------------------------------ inverse branches


def test_doubling_preimages_level_one():
    out = inverse_branches(SkewEndomorphism(2, TrigPoly()), 0.0, TorusPoint(0.0, 0.0), 1)
    xs = sorted(w.x for w, _ in out)
    assert xs == [0.0, 0.5]
    for w, J in out:
        assert w.y == 0.0
        assert np.array_equal(J, np.diag([2.0, 1.0]))


def test_doubling_preimages_level_two():
    out = inverse_branches(SkewEndomorphism(2, TrigPoly()), 0.0, TorusPoint(0.0, 0.0), 2)
    assert sorted(w.x for w, _ in out) == [0.0, 0.25, 0.5, 0.75]
    for w, J in out:
        assert w.y == 0.0
        assert np.array_equal(J, np.diag([4.0, 1.0]))


def test_generic_preimages_map_back():
    z = TorusPoint(0.0, 0.0)
    out = inverse_branches(GENERIC, 0.0, z, 1)
    assert len(out) == 2
    for w, _ in out:
        assert close_on_torus(eval_map(GENERIC, 0.0, w), z, 1e-12)


def test_oblique_branch_x_against_bisection():
    # x-coordinate of each preimage of z found by bisection on f_x along the
    # curve of points mapping to the right fibre height
    f = SkewEndomorphism(2, PHI, OBLIQUE)
    t = 0.02
    z = TorusPoint(0.3, 0.7)
    out = inverse_branches(f, t, z, 1)
    fm = f.at(t)
    for w, _ in out:
        # solve forward(x, y)_x = z.x along y = w.y for x in a small bracket around w.x
        g = lambda x: ((fm.forward(x, w.y)[0] - z.x + 0.5) % 1.0) - 0.5
        x_ref = brentq(g, w.x - 0.05, w.x + 0.05, xtol=1e-15)
        assert abs(x_ref - w.x) < 1e-12
        assert close_on_torus(eval_map(f, t, w), z, 1e-12)


def test_newton_divergence_signals_large_perturbation():
    wild = TorusField(((5, 3, 0.5, 0.0),), ((3, 5, 0.0, 0.5),))
    g = np.linspace(0, 1, 64, endpoint=False)
    X, Y = np.meshgrid(g, g)
    with pytest.raises(NewtonDivergence):
        FrozenMap(2, PHI, ((wild, 1.0),)).preimages(X.ravel(), Y.ravel())


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), y=st.floats(0, 1, exclude_max=True),
       n=st.integers(1, 4), t=st.floats(-0.03, 0.03))
def test_covering_consistency(x, y, n, t):
    f = SkewEndomorphism(2, PHI, OBLIQUE)
    z = TorusPoint(x, y)
    out = inverse_branches(f, t, z, n)
    assert len(out) == 2**n
    for w, J in out:
        p = w
        for _ in range(n):
            p = eval_map(f, t, p)
        assert close_on_torus(p, z, 1e-10)
        assert np.allclose(J, cocycle(f, t, w, n), rtol=1e-10, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), y=st.floats(0, 1, exclude_max=True), n=st.integers(1, 5))
def test_branch_count_and_separation(x, y, n):
    out = inverse_branches(SkewEndomorphism(3, PHI), 0.0, TorusPoint(x, y), n)
    assert len(out) == 3**n
    pts = np.array([[w.x, w.y] for w, _ in out])
    d = torus_distance(pts[:, None, 0], pts[:, None, 1], pts[None, :, 0], pts[None, :, 1])
    d[np.diag_indices(len(pts))] = np.inf
    assert d.min() > 1e-8


# ------------------------------------------------------------------ cocycle


def test_cocycle_examples():
    assert np.array_equal(cocycle(SkewEndomorphism(2, TrigPoly()), 0.0, TorusPoint(0.3, 0.6), 3), np.diag([8.0, 1.0]))
    assert np.array_equal(cocycle(GENERIC, 0.0, TorusPoint(0.3, 0.6), 0), np.eye(2))
    # phi'(0) = 0 at both points of the orbit 0 -> 0
    assert np.allclose(cocycle(GENERIC, 0.0, TorusPoint(0.0, 0.0), 2), np.diag([4.0, 1.0]), atol=1e-15)


def test_single_step_jacobian_exact():
    x = np.linspace(0, 1, 17)
    J = GENERIC.rot.jacobian(x, 0.3 + 0 * x)
    assert np.all(J[:, 0, 0] == 2.0) and np.all(J[:, 0, 1] == 0.0) and np.all(J[:, 1, 1] == 1.0)
    assert np.array_equal(J[:, 1, 0], PHI.derivative(x))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), y=st.floats(0, 1, exclude_max=True),
       m=st.integers(0, 6), n=st.integers(0, 6), t=st.floats(-0.05, 0.05))
def test_cocycle_chain_rule(x, y, m, n, t):
    f = SkewEndomorphism(2, PHI, OBLIQUE)
    w = TorusPoint(x, y)
    p = w
    for _ in range(n):
        p = eval_map(f, t, p)
    lhs = cocycle(f, t, w, m + n)
    rhs = cocycle(f, t, p, m) @ cocycle(f, t, w, n)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.max(np.abs(lhs)))


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), n=st.integers(0, 12))
def test_unperturbed_determinant(x, n):
    J = cocycle(GENERIC, 0.0, TorusPoint(x, 0.0), n)
    assert np.linalg.det(J) == pytest.approx(2.0**n, rel=1e-13)


# ------------------------------------------------------------------ parsing


def test_parse_helpers():
    assert parse_pairs("1:0.1, 3:-0.02") == {1: 0.1, 3: -0.02}
    assert parse_field_terms("0,1:1:0; 2,-1:0:0.5") == ((0, 1, 1.0, 0.0), (2, -1, 0.0, 0.5))
    with pytest.raises(InvalidParams):
        parse_pairs("1=0.1")
    with pytest.raises(InvalidParams):
        make_perturbation("spiral")


def test_vertical_profile_matches_product():
    h = TrigPoly((0.3, 0.5), (0.0, -0.2))
    V = TorusField.vertical_profile(h)
    rng = np.random.default_rng(0)
    x, y = rng.random(50), rng.random(50)
    assert np.allclose(V(x, y)[1], h(x) * np.sin(2 * np.pi * y), atol=1e-15)
    assert V.is_vertical


def test_frozen_map_drops_zero_steps():
    fm = FrozenMap(2, PHI, ((OBLIQUE, 0.0),))
    assert fm.is_rot
