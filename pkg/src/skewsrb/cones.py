"""Cones on the projective line, the transversality relation and the exponent m(f, n).

A cone is a closed double sector ``{v : angle(v, axis) <= half_width}``
stored by its axis angle in [0, pi) and its half-width.  Projective angles
live on a circle of length pi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, SingularMatrix
from .skew_map import TorusPoint, frozen

EPS_ANGLE = 1e-9


def wrap_pi(a):
    """Representative of an angle mod pi in [-pi/2, pi/2]."""
    return a - np.pi * np.round(a / np.pi)


def angular_distance(a, b):
    """Distance between projective angles."""
    return np.abs(wrap_pi(a - b))


@dataclass(frozen=True)
class ConeSpec:
    center_angle: float
    half_width: float

    def __post_init__(self):
        h = float(self.half_width)
        if not (0.0 < h < np.pi / 2):
            raise InvalidParams(f"half_width must lie in (0, pi/2), got {h}")
        object.__setattr__(self, "center_angle", float(np.mod(self.center_angle, np.pi)) % np.pi)
        object.__setattr__(self, "half_width", h)

    @classmethod
    def axis(cls, alpha: float) -> "ConeSpec":
        """``C(alpha) = {|y| <= alpha |x|}``."""
        if alpha <= 0:
            raise InvalidParams("cone parameter must be positive")
        return cls(0.0, float(np.arctan(alpha)))

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        ang = np.arctan2(v[1], v[0])
        return bool(angular_distance(ang, self.center_angle) <= self.half_width)

    def bounds(self):
        return self.center_angle - self.half_width, self.center_angle + self.half_width


def _push_arrays(M, center, half):
    """Vectorised cone push: returns the image (center, half) arrays."""
    M = np.asarray(M, dtype=float)
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    scale = np.max(np.abs(M), axis=(-2, -1))
    if np.any(np.abs(det) <= 1e-14 * scale**2):
        raise SingularMatrix("cone pushed by a singular matrix")

    def image_angle(a):
        vx, vy = np.cos(a), np.sin(a)
        wx = M[..., 0, 0] * vx + M[..., 0, 1] * vy
        wy = M[..., 1, 0] * vx + M[..., 1, 1] * vy
        return np.mod(np.arctan2(wy, wx), np.pi)

    a1 = image_angle(center - half)
    a2 = image_angle(center + half)
    ac = image_angle(center)
    d = np.mod(a2 - a1, np.pi)
    axis_inside = np.mod(ac - a1, np.pi) <= d
    start = np.where(axis_inside, a1, a2)
    length = np.where(axis_inside, d, np.pi - d)
    return np.mod(start + length / 2, np.pi), length / 2


def push_cone(M, c: ConeSpec) -> ConeSpec:
    """Smallest cone containing ``M c``."""
    center, half = _push_arrays(M, c.center_angle, c.half_width)
    return ConeSpec(float(center), float(half))


def cones_disjoint(c1: ConeSpec, c2: ConeSpec, margin: float = EPS_ANGLE) -> bool:
    return bool(angular_distance(c1.center_angle, c2.center_angle) > c1.half_width + c2.half_width + margin)


@dataclass(frozen=True)
class InvarianceReport:
    ok: bool
    margin: float  # (gamma0 ell - 1) theta - ||D phi||
    angular_margin: float | None  # grid check for perturbed maps
    derivative_bound: float
    derivative_grid_max: float


def check_cone_invariance(f, theta: float, gamma0: float, grid: int = 64, t: float = 0.0) -> InvarianceReport:
    """Check that ``Df`` maps ``C(theta)`` strictly into ``C(gamma0 theta)``."""
    ell = f.ell
    if not (1.0 / ell < gamma0 < 1.0):
        raise InvalidParams(f"gamma0 must lie in (1/ell, 1) = ({1.0 / ell:.6g}, 1), got {gamma0}")
    if theta <= 0:
        raise InvalidParams("theta must be positive")
    bound = f.phi.derivative_bound()
    margin = (gamma0 * ell - 1.0) * theta - bound
    fm = frozen(f, t)
    angular = None
    ok = margin > 0
    if not fm.is_rot:
        g = np.arange(grid) / grid
        X, Y = np.meshgrid(g, g, indexing="ij")
        center, half = _push_arrays(fm.jacobian(X, Y), 0.0, np.arctan(theta))
        angular = float(np.min(np.arctan(gamma0 * theta) - angular_distance(center, 0.0) - half))
        ok = angular > 0
    return InvarianceReport(bool(ok), float(margin), angular, bound, f.phi.derivative_grid_max())


@dataclass(frozen=True)
class TransversalityReport:
    n: int
    theta: float
    gamma0: float | None
    grid_size: int
    m_n: float
    worst_z: TorusPoint
    m_root: float
    rigorous: bool = False  # grid maximum, not a certified supremum


def transversal(f, t: float, z: TorusPoint, w1: int, w2: int, n: int, theta: float,
                eps_angle: float = EPS_ANGLE) -> bool:
    """Whether branches ``w1`` and ``w2`` of ``f_t^{-n}(z)`` push ``C(theta)`` to disjoint cones."""
    fm = frozen(f, t)
    _, _, J = fm.branch_tree(np.array(z.x), np.array(z.y), n)
    center, half = _push_arrays(J[[w1, w2]], 0.0, np.arctan(theta))
    return bool(angular_distance(center[0], center[1]) > half[0] + half[1] + eps_angle)


def m_finite(f, t: float, n: int, theta: float, grid: int, gamma0: float | None = None,
             eps_angle: float = EPS_ANGLE, inflate: float = 0.0, chunk: int | None = None) -> TransversalityReport:
    """Grid approximation of ``m(f, n)``.

    For every grid point ``z`` and every branch ``w`` of ``f^{-n}(z)`` count the
    branches ``zeta`` (including ``w`` itself) whose pushed cone meets that of
    ``w``; report ``ell^{-n}`` times the largest count.  ``inflate`` widens every
    pushed cone by a fixed angle (a one-sided safety margin).

    For the unperturbed map the cocycle does not depend on ``y``; the grid is
    then scanned along ``x`` only, which gives the same maximum.
    """
    if n < 1:
        raise InvalidParams("n must be >= 1")
    fm = frozen(f, t)
    g = np.arange(grid) / grid
    ys = np.zeros(1) if fm.is_rot else g
    X, Y = np.meshgrid(g, ys, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    nb = fm.ell**n
    if chunk is None:
        chunk = max(1, int(2**22 // (nb * nb)))
    best = -1
    worst = (0.0, 0.0)
    half0 = np.arctan(theta)
    for s in range(0, len(X), chunk):
        _, _, J = fm.branch_tree(X[s:s + chunk], Y[s:s + chunk], n)
        center, half = _push_arrays(J, 0.0, half0)
        half = half + inflate
        d = angular_distance(center[:, None, :], center[None, :, :])
        counts = np.sum(d <= half[:, None, :] + half[None, :, :] + eps_angle, axis=1)
        per_z = counts.max(axis=0)
        k = int(np.argmax(per_z))
        if per_z[k] > best:
            best = int(per_z[k])
            worst = (X[s + k], Y[s + k])
    m_n = best / nb
    return TransversalityReport(n, float(theta), gamma0, int(grid), m_n,
                                TorusPoint(*worst), m_n ** (1.0 / n))


def m_upper_bound(f, t: float, n_max: int, theta: float, grid: int, return_reports: bool = False):
    """``min_{n <= n_max} m(f, n)^{1/n}``, an upper bound for ``m(f)``."""
    if n_max < 1:
        raise InvalidParams("n_max must be >= 1")
    reports = [m_finite(f, t, n, theta, grid) for n in range(1, n_max + 1)]
    value = min(r.m_root for r in reports)
    return (value, reports) if return_reports else value


def integrability_defect(f, depth: int, pairs: int, seed: int = 0) -> float:
    """Largest gap between ``sum_i ell^{-i} phi'(y_i)`` along two backward orbits.

    Both orbits start at the same random ``y_0`` and follow independent random
    inverse branches ``y_{i+1} = (y_i + j)/ell``.  Zero means the cohomological
    equation behind non-transversality is solvable along the samples.
    """
    if depth < 1:
        raise InvalidParams("depth must be >= 1")
    rng = np.random.default_rng(seed)
    ell = f.ell
    y0 = rng.random(pairs)
    digits = rng.integers(0, ell, size=(2, depth, pairs))
    total = np.zeros((2, pairs))
    for side in range(2):
        y = y0.copy()
        for i in range(depth):
            y = (y + digits[side, i]) / ell
            total[side] += ell ** -(i + 1.0) * f.phi.derivative(y)
    return float(np.max(np.abs(total[0] - total[1])))
