import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewsrb.cones import (
    ConeSpec, angular_distance, check_cone_invariance, cones_disjoint, integrability_defect, m_finite,
    m_upper_bound, push_cone, transversal,
)
from skewsrb.errors import InvalidParams, SingularMatrix
from skewsrb.skew_map import SkewEndomorphism, TorusField, TorusPoint, TrigPoly, inverse_branches

PHI = TrigPoly((0.0, 0.1))
GENERIC = SkewEndomorphism(2, PHI)
FLAT = SkewEndomorphism(2, TrigPoly())


def same_cone(a: ConeSpec, b: ConeSpec, tol):
    return angular_distance(a.center_angle, b.center_angle) <= tol and abs(a.half_width - b.half_width) <= tol


# ------------------------------------------------------------------ cones


def test_axis_cone():
    c = ConeSpec.axis(1.0)
    assert c.half_width == pytest.approx(np.pi / 4)
    assert c.contains([1.0, 0.99]) and not c.contains([1.0, 1.01])
    with pytest.raises(InvalidParams):
        ConeSpec.axis(0.0)
    with pytest.raises(InvalidParams):
        ConeSpec(0.0, np.pi / 2)


def test_push_examples():
    assert same_cone(push_cone(np.diag([2.0, 1.0]), ConeSpec.axis(1.0)), ConeSpec.axis(0.5), 1e-14)
    c = ConeSpec(0.7, 0.3)
    assert same_cone(push_cone(np.eye(2), c), c, 1e-15)
    # shear from phi' = 1: boundary vectors (1, +-0.5) go to (2, 1.5) and (2, 0.5)
    img = push_cone(np.array([[2.0, 0.0], [1.0, 1.0]]), ConeSpec.axis(0.5))
    lo, hi = img.bounds()
    assert lo == pytest.approx(np.arctan(0.25), abs=1e-14)
    assert hi == pytest.approx(np.arctan(0.75), abs=1e-14)


def test_push_singular():
    with pytest.raises(SingularMatrix):
        push_cone(np.array([[1.0, 2.0], [2.0, 4.0]]), ConeSpec.axis(1.0))


def _well_conditioned(seed):
    rng = np.random.default_rng(seed)
    while True:
        M = rng.standard_normal((2, 2))
        if np.linalg.cond(M) <= 1e3:
            return M


@settings(max_examples=60, deadline=None)
@given(s1=st.integers(0, 10**6), s2=st.integers(0, 10**6),
       center=st.floats(0, np.pi, exclude_max=True), half=st.floats(0.01, 1.5))
def test_push_functoriality(s1, s2, center, half):
    M1, M2 = _well_conditioned(s1), _well_conditioned(s2)
    c = ConeSpec(center, half)
    a = push_cone(M1 @ M2, c)
    b = push_cone(M1, push_cone(M2, c))
    assert same_cone(a, b, 1e-10)


@settings(max_examples=60, deadline=None)
@given(s=st.integers(0, 10**6), center=st.floats(0, np.pi, exclude_max=True), half=st.floats(0.01, 1.5),
       probe=st.floats(-1, 1))
def test_push_contains_images(s, center, half, probe):
    M = _well_conditioned(s)
    c = ConeSpec(center, half)
    a = center + probe * half
    v = M @ np.array([np.cos(a), np.sin(a)])
    img = push_cone(M, c)
    assert angular_distance(np.arctan2(v[1], v[0]), img.center_angle) <= img.half_width + 1e-10


# ------------------------------------------------------------------ invariance


def test_invariance_examples():
    r = check_cone_invariance(FLAT, 1.0, 0.75)
    assert r.ok and r.margin == pytest.approx(0.5, abs=1e-15)
    r = check_cone_invariance(GENERIC, 1.0, 0.75)
    assert not r.ok and r.margin == pytest.approx(0.5 - 0.2 * np.pi, abs=1e-14)
    r = check_cone_invariance(GENERIC, 2.0, 0.75)
    assert r.ok and r.margin == pytest.approx(1.0 - 0.2 * np.pi, abs=1e-14)
    with pytest.raises(InvalidParams):
        check_cone_invariance(GENERIC, 2.0, 0.4)


def test_invariance_perturbed_grid_check():
    f = SkewEndomorphism(2, PHI, TorusField.vertical_profile())
    r = check_cone_invariance(f, 2.0, 0.75, grid=32, t=0.01)
    assert r.ok and r.angular_margin > 0


# ------------------------------------------------------------------ transversality


def test_transversal_examples():
    z = TorusPoint(0.0, 0.0)
    assert not transversal(FLAT, 0.0, z, 0, 1, 3, 2.0)
    assert not transversal(GENERIC, 0.0, z, 5, 5, 4, 2.0)
    pairs = [transversal(GENERIC, 0.0, z, a, b, 4, 2.0) for a, b in itertools.combinations(range(16), 2)]
    assert any(pairs)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(0, 15), b=st.integers(0, 15), x=st.floats(0, 1, exclude_max=True))
def test_transversal_symmetric(a, b, x):
    z = TorusPoint(x, 0.3)
    assert transversal(GENERIC, 0.0, z, a, b, 4, 2.0) == transversal(GENERIC, 0.0, z, b, a, 4, 2.0)


def brute_force_m(f, n, theta, grid):
    """Pair-by-pair oracle built from inverse_branches and push_cone only."""
    best = 0
    c0 = ConeSpec.axis(theta)
    g = np.arange(grid) / grid
    for x in g:
        for y in g:
            cones = [push_cone(J, c0) for _, J in inverse_branches(f, 0.0, TorusPoint(x, y), n)]
            for w in cones:
                best = max(best, sum(not cones_disjoint(w, z) for z in cones))
    return best / f.ell**n


@pytest.mark.parametrize("n", [3, 4, 5])
def test_m_finite_matches_pairwise_oracle(n):
    assert m_finite(GENERIC, 0.0, n, 2.0, 8).m_n == brute_force_m(GENERIC, n, 2.0, 8)


def test_m_finite_perturbed_matches_oracle():
    f = SkewEndomorphism(2, PHI, TorusField.vertical_profile())
    fm = f.at(0.01)
    rep = m_finite(fm, 0.0, 4, 2.0, 4)
    assert rep.m_n == brute_force_m(fm, 4, 2.0, 4)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("grid", [8, 32])
def test_m_finite_degenerate(n, grid):
    rep = m_finite(FLAT, 0.0, n, 2.0, grid)
    assert rep.m_n == 1.0 and rep.m_root == 1.0


def test_m_finite_generic_regression():
    # frozen from the exhaustive enumeration on the 64 x 64 grid
    expected = {4: 1.0, 5: 0.75, 6: 0.5}
    for n, m in expected.items():
        rep = m_finite(GENERIC, 0.0, n, 2.0, 64)
        assert rep.m_n == m
        assert rep.rigorous is False


@settings(max_examples=15, deadline=None)
@given(c1=st.floats(-0.2, 0.2), c2=st.floats(-0.1, 0.1), n=st.integers(1, 5))
def test_m_finite_lower_bound(c1, c2, n):
    f = SkewEndomorphism(2, TrigPoly((0.0, c1, c2)))
    rep = m_finite(f, 0.0, n, 2.0, 8)
    assert 2.0**-n <= rep.m_n <= 1.0


@pytest.mark.parametrize("n", [5, 6])
def test_m_finite_nested_grid_refinement(n):
    coarse = m_finite(GENERIC, 0.0, n, 2.0, 16).m_n
    fine = m_finite(GENERIC, 0.0, n, 2.0, 32).m_n
    assert fine >= coarse


def test_inflated_cones_count_more():
    plain = m_finite(GENERIC, 0.0, 6, 2.0, 16).m_n
    assert m_finite(GENERIC, 0.0, 6, 2.0, 16, inflate=0.05).m_n >= plain


def test_m_upper_bound():
    assert m_upper_bound(FLAT, 0.0, 4, 2.0, 8) == 1.0
    value, reports = m_upper_bound(GENERIC, 0.0, 6, 2.0, 64, return_reports=True)
    assert 0.0 < value < 1.0
    assert value == min(r.m_root for r in reports)
    assert value == pytest.approx(0.5 ** (1 / 6), rel=1e-15)


# ------------------------------------------------------------------ integrability


def test_integrability_defect():
    assert integrability_defect(FLAT, 30, 100) == 0.0
    assert integrability_defect(SkewEndomorphism(2, TrigPoly((0.4,))), 30, 100) == 0.0
    d = integrability_defect(GENERIC, 30, 1000, seed=0)
    assert d == pytest.approx(0.93324, abs=5e-6)


def test_integrability_defect_constant_shift():
    shifted = SkewEndomorphism(2, TrigPoly((0.7, 0.1)))
    assert integrability_defect(shifted, 20, 200, seed=3) == integrability_defect(GENERIC, 20, 200, seed=3)
